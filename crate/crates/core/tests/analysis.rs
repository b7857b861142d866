use onft::analysis::{
    background_correct, lorentzian_fit, rate_stats, read_counts, read_spectrum, CountLabel,
    CountSeries, Measurement, Spectrum,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn lorentz_spectrum(peak: f64, fwhm: f64, amp: f64, offset: f64, n: usize) -> Spectrum {
    let x: Vec<f64> = (0..n).map(|i| 560.0 + 110.0 * i as f64 / (n - 1) as f64).collect();
    let g = 0.5 * fwhm;
    let y = x.iter().map(|&l| amp * g * g / ((l - peak).powi(2) + g * g) + offset).collect();
    Spectrum::new(x, y).unwrap()
}

fn with_noise(s: &Spectrum, rel: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = s.intensity.iter().copied().fold(0.0, f64::max);
    let noise = Normal::new(0.0, rel * scale).unwrap();
    let y = s.intensity.iter().map(|v| v + noise.sample(&mut rng)).collect();
    Spectrum::new(s.wavelength_nm.clone(), y).unwrap()
}

#[test]
fn quoted_net_rates() {
    // free-space and guided-mode excitation
    let n = background_correct(Measurement::new(1312.0, 120.0), Measurement::new(350.0, 60.0)).unwrap();
    assert_eq!(n.mean, 962.0);
    assert!((n.sigma - 18000f64.sqrt()).abs() < 1e-9);
    assert_eq!(n.sigma.round(), 134.0);
    let n = background_correct(Measurement::new(1171.0, 110.0), Measurement::new(498.0, 75.0)).unwrap();
    assert_eq!(n.mean, 673.0);
    assert!((n.sigma - 17725f64.sqrt()).abs() < 1e-9);
    assert_eq!(n.sigma.round(), 133.0);
}

#[test]
fn exact_lorentzian_is_recovered() {
    let s = lorentz_spectrum(614.0, 22.0, 1.0, 0.0, 200);
    let f = lorentzian_fit(&s).unwrap();
    assert!((f.peak_nm - 614.0).abs() < 1e-8, "{}", f.peak_nm);
    assert!((f.fwhm_nm - 22.0).abs() < 1e-8, "{}", f.fwhm_nm);
    assert!((f.amplitude - 1.0).abs() < 1e-8);
    assert!(f.offset.abs() < 1e-8);
    assert!(f.residual < 1e-10);
}

#[test]
fn offset_is_fitted() {
    let s = lorentz_spectrum(617.0, 22.0, 5.0, 0.7, 120);
    let f = lorentzian_fit(&s).unwrap();
    assert!((f.peak_nm - 617.0).abs() < 1e-8);
    assert!((f.offset - 0.7).abs() < 1e-8);
}

#[test]
fn noisy_lorentzian_stays_close() {
    let clean = lorentz_spectrum(614.0, 22.0, 1.0, 0.0, 200);
    for seed in 0..10 {
        let f = lorentzian_fit(&with_noise(&clean, 0.01, seed)).unwrap();
        assert!((f.peak_nm - 614.0).abs() < 0.5, "seed {seed}: {}", f.peak_nm);
        assert!((f.fwhm_nm - 22.0).abs() < 1.0, "seed {seed}: {}", f.fwhm_nm);
    }
}

#[test]
fn residual_shrinks_with_noise() {
    let clean = lorentz_spectrum(614.0, 22.0, 1.0, 0.0, 200);
    let mut last = f64::INFINITY;
    for level in [0.05, 0.02, 0.01, 0.005, 0.001] {
        let f = lorentzian_fit(&with_noise(&clean, level, 7)).unwrap();
        assert!(f.residual <= last, "residual grew at noise {level}");
        last = f.residual;
    }
}

#[test]
fn edge_peak_is_rejected() {
    let s = lorentz_spectrum(560.0, 22.0, 1.0, 0.0, 100);
    assert!(lorentzian_fit(&s).is_err());
}

#[test]
fn poisson_rate_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1312);
    let dist = Poisson::new(1312.0).unwrap();
    let n = 400;
    let counts: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let s = CountSeries::new((0..n).map(|i| 0.1 * i as f64).collect(), counts, CountLabel::Fluorescence).unwrap();
    let m = rate_stats(&s).unwrap();
    let se = 1312f64.sqrt() / (n as f64).sqrt();
    assert!((m.mean - 1312.0).abs() < 3.0 * se, "{}", m.mean);
    assert!((m.sigma / 1312f64.sqrt() - 1.0).abs() < 0.15);
}

#[test]
fn csv_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    std::fs::write(&counts, "t_s,counts\n0,60\n1,80\n").unwrap();
    let m = rate_stats(&read_counts(&counts, CountLabel::Dark).unwrap()).unwrap();
    assert_eq!(m.mean, 70.0);

    let spec = dir.path().join("spectrum.csv");
    let s = lorentz_spectrum(614.0, 22.0, 1.0, 0.0, 60);
    let body: String = s
        .wavelength_nm
        .iter()
        .zip(&s.intensity)
        .map(|(x, y)| format!("{x},{y}\n"))
        .collect();
    std::fs::write(&spec, format!("# background corrected\n{body}")).unwrap();
    let f = lorentzian_fit(&read_spectrum(&spec).unwrap()).unwrap();
    assert!((f.peak_nm - 614.0).abs() < 1e-6);

    std::fs::write(&spec, "600,1\n601,x\n").unwrap();
    assert!(read_spectrum(&spec).is_err());
    assert!(read_spectrum(dir.path().join("missing.csv")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correction_antisymmetry(s in -1e4f64..1e4, b in -1e4f64..1e4, ss in 0f64..500.0, sb in 0f64..500.0) {
        let fwd = background_correct(Measurement::new(s, ss), Measurement::new(b, sb)).unwrap();
        let rev = background_correct(Measurement::new(b, sb), Measurement::new(s, ss)).unwrap();
        prop_assert_eq!(fwd.mean, -rev.mean);
        prop_assert_eq!(fwd.sigma, rev.sigma);
        prop_assert_eq!(fwd.negative, fwd.mean < 0.0);
    }

    #[test]
    fn fit_is_scale_invariant(k in 1e-3f64..1e3, seed in 0u64..1000) {
        let base = with_noise(&lorentz_spectrum(614.0, 22.0, 1.0, 0.05, 150), 0.01, seed);
        let scaled = Spectrum::new(
            base.wavelength_nm.clone(),
            base.intensity.iter().map(|v| v * k).collect(),
        ).unwrap();
        let f0 = lorentzian_fit(&base).unwrap();
        let f1 = lorentzian_fit(&scaled).unwrap();
        prop_assert!((f0.peak_nm - f1.peak_nm).abs() < 1e-6);
        prop_assert!((f0.fwhm_nm - f1.fwhm_nm).abs() < 1e-6);
        prop_assert!((f1.amplitude / f0.amplitude / k - 1.0).abs() < 1e-6);
    }
}
