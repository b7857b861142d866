//! Background-corrected count rates and a Lorentzian fit of an emission
//! spectrum, on synthetic data.
//!
//! Usage: `count_analysis [seed]`

use onft::analysis::{background_correct, lorentzian_fit, rate_stats, CountLabel, CountSeries, Spectrum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn trace(rate: f64, bins: usize, label: CountLabel, rng: &mut ChaCha8Rng) -> onft::Result<CountSeries> {
    let poisson = Poisson::new(rate).expect("positive rate");
    let t: Vec<f64> = (0..bins).map(|i| i as f64).collect();
    let c: Vec<f64> = (0..bins).map(|_| poisson.sample(rng)).collect();
    CountSeries::new(t, c, label)
}

fn main() -> onft::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let signal = rate_stats(&trace(1312.0, 120, CountLabel::Fluorescence, &mut rng)?)?;
    let background = rate_stats(&trace(350.0, 120, CountLabel::Background, &mut rng)?)?;
    let net = background_correct(signal, background)?;
    println!("signal     {:8.1} ± {:5.1} counts/s", signal.mean, signal.sigma);
    println!("background {:8.1} ± {:5.1} counts/s", background.mean, background.sigma);
    println!("net        {:8.1} ± {:5.1} counts/s", net.mean, net.sigma);

    let noise = Normal::new(0.0, 0.02).expect("finite sigma");
    let wl: Vec<f64> = (0..400).map(|i| 560.0 + 0.3 * i as f64).collect();
    let y: Vec<f64> = wl
        .iter()
        .map(|&x| 0.05 + 1.0 / (1.0 + ((x - 617.0) / 11.0).powi(2)) + noise.sample(&mut rng))
        .collect();
    let fit = lorentzian_fit(&Spectrum::new(wl, y)?)?;
    println!(
        "spectrum peak {:.2} nm, FWHM {:.2} nm, offset {:.3} ({} iterations, rms {:.4})",
        fit.peak_nm, fit.fwhm_nm, fit.offset, fit.iterations, fit.residual
    );
    Ok(())
}
