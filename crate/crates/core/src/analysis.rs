//! Photon-count rates with background subtraction, and Lorentzian fits of
//! emission spectra.

use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a count trace was recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountLabel {
    Dark,
    Background,
    Fluorescence,
}

impl std::str::FromStr for CountLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dark" => Ok(CountLabel::Dark),
            "background" => Ok(CountLabel::Background),
            "fluorescence" => Ok(CountLabel::Fluorescence),
            other => Err(Error::validation(format!("unknown count label `{other}`"))),
        }
    }
}

/// Count rate sampled in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub timestamps_s: Vec<f64>,
    pub counts_per_s: Vec<f64>,
    pub label: CountLabel,
}

impl CountSeries {
    pub fn new(timestamps_s: Vec<f64>, counts_per_s: Vec<f64>, label: CountLabel) -> Result<Self> {
        let s = CountSeries {
            timestamps_s,
            counts_per_s,
            label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps_s.len() != self.counts_per_s.len() {
            return Err(Error::validation("timestamps and counts differ in length"));
        }
        if self.timestamps_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("timestamps must be strictly increasing"));
        }
        if let Some(c) = self.counts_per_s.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::validation(format!("invalid count rate {c}")));
        }
        Ok(())
    }
}

/// Emission spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength_nm: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        let s = Spectrum {
            wavelength_nm,
            intensity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelength_nm.len() != self.intensity.len() {
            return Err(Error::validation("wavelengths and intensities differ in length"));
        }
        if self.wavelength_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("wavelengths must be strictly increasing"));
        }
        if self.intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("intensities must be finite"));
        }
        Ok(())
    }
}

/// A value with its standard uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub mean: f64,
    pub sigma: f64,
}

impl Measurement {
    pub fn new(mean: f64, sigma: f64) -> Self {
        Measurement { mean, sigma }
    }
}

/// Mean and sample standard deviation of the count rate.
pub fn rate_stats(series: &CountSeries) -> Result<Measurement> {
    let c = &series.counts_per_s;
    if c.len() < 2 {
        return Err(Error::validation(format!(
            "rate statistics need at least 2 samples, got {}",
            c.len()
        )));
    }
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Measurement::new(mean, var.sqrt()))
}

/// Net signal after subtracting a background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRate {
    pub mean: f64,
    pub sigma: f64,
    /// Set when the background exceeds the signal.
    pub negative: bool,
}

/// Signal minus background with uncertainties added in quadrature.
pub fn background_correct(signal: Measurement, background: Measurement) -> Result<NetRate> {
    if !(signal.sigma >= 0.0) || !(background.sigma >= 0.0) {
        return Err(Error::validation("uncertainties must be non-negative"));
    }
    let mean = signal.mean - background.mean;
    if mean < 0.0 {
        log::warn!("background {} exceeds signal {}", background.mean, signal.mean);
    }
    Ok(NetRate {
        mean,
        sigma: signal.sigma.hypot(background.sigma),
        negative: mean < 0.0,
    })
}

/// Result of a Lorentzian fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzFit {
    pub peak_nm: f64,
    pub fwhm_nm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// RMS deviation of the data from the fitted curve.
    pub residual: f64,
    pub iterations: u32,
}

impl LorentzFit {
    pub fn eval(&self, wavelength_nm: f64) -> f64 {
        lorentz(&Vector4::new(self.amplitude, self.peak_nm, self.fwhm_nm, self.offset), wavelength_nm)
    }
}

pub const FIT_MAX_ITERATIONS: u32 = 200;
const FIT_STEP_TOL: f64 = 1e-9;

// p = (A, λ0, Γ, offset)
fn lorentz(p: &Vector4<f64>, x: f64) -> f64 {
    let g = 0.5 * p[2];
    p[0] * g * g / ((x - p[1]).powi(2) + g * g) + p[3]
}

fn lorentz_gradient(p: &Vector4<f64>, x: f64) -> Vector4<f64> {
    let g = 0.5 * p[2];
    let dx = x - p[1];
    let d = dx * dx + g * g;
    let shape = g * g / d;
    Vector4::new(
        shape,
        p[0] * 2.0 * g * g * dx / (d * d),
        p[0] * g * dx * dx / (d * d),
        1.0,
    )
}

fn sum_sq(p: &Vector4<f64>, s: &Spectrum) -> f64 {
    s.wavelength_nm
        .iter()
        .zip(&s.intensity)
        .map(|(&x, &y)| (y - lorentz(p, x)).powi(2))
        .sum()
}

/// Initial guess from the maximum and the half-maximum crossings.
fn initial_guess(s: &Spectrum) -> Result<Vector4<f64>> {
    let (x, y) = (&s.wavelength_nm, &s.intensity);
    let n = y.len();
    let imax = (0..n).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    if imax == 0 || imax == n - 1 {
        return Err(Error::Numerical(format!(
            "spectrum maximum at boundary ({} nm)",
            x[imax]
        )));
    }
    let base = y.iter().copied().fold(f64::INFINITY, f64::min);
    let amp = y[imax] - base;
    let half = base + 0.5 * amp;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if y[i] <= half {
                let t = (y[prev] - half) / (y[prev] - y[i]);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..imax).rev());
    let right = crossing(&mut (imax + 1..n));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[imax] - l),
        (None, Some(r)) => 2.0 * (r - x[imax]),
        (None, None) => 0.5 * (x[n - 1] - x[0]),
    };
    Ok(Vector4::new(amp, x[imax], fwhm, base))
}

/// Least-squares fit of A·(Γ/2)²/((λ−λ₀)² + (Γ/2)²) + offset by damped
/// Gauss-Newton (Levenberg-Marquardt).
pub fn lorentzian_fit(s: &Spectrum) -> Result<LorentzFit> {
    s.validate()?;
    if s.intensity.len() < 5 {
        return Err(Error::validation("Lorentzian fit needs at least 5 samples"));
    }
    let mut p = initial_guess(s)?;
    let mut ssr = sum_sq(&p, s);
    let mut mu = 1e-3;
    for it in 1..=FIT_MAX_ITERATIONS {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&x, &y) in s.wavelength_nm.iter().zip(&s.intensity) {
            let g = lorentz_gradient(&p, x);
            jtj += g * g.transpose();
            jtr += g * (y - lorentz(&p, x));
        }
        let converged;
        loop {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            let step = a
                .cholesky()
                .map(|c| c.solve(&jtr))
                .ok_or_else(|| Error::Numerical("singular normal equations in Lorentzian fit".into()))?;
            let trial = p + step;
            let trial_ssr = sum_sq(&trial, s);
            if trial_ssr <= ssr {
                let scale = [p[0].abs(), p[1].abs(), p[2].abs(), p[0].abs()];
                let rel = (0..4)
                    .map(|i| step[i].abs() / scale[i].max(1e-300))
                    .fold(0.0, f64::max);
                p = trial;
                ssr = trial_ssr;
                mu = (mu * 0.3).max(1e-12);
                converged = rel < FIT_STEP_TOL || ssr == 0.0;
                break;
            }
            mu *= 10.0;
            if mu > 1e12 {
                // no downhill step left: at the minimum to working precision
                converged = true;
                break;
            }
        }
        if converged {
            let (lo, hi) = (s.wavelength_nm[0], s.wavelength_nm[s.wavelength_nm.len() - 1]);
            if !(p[1] > lo && p[1] < hi) {
                return Err(Error::Numerical(format!(
                    "fitted peak {} nm outside the spectrum",
                    p[1]
                )));
            }
            return Ok(LorentzFit {
                amplitude: p[0],
                peak_nm: p[1],
                fwhm_nm: p[2].abs(),
                offset: p[3],
                residual: (ssr / s.intensity.len() as f64).sqrt(),
                iterations: it,
            });
        }
    }
    Err(Error::Numerical(format!(
        "Lorentzian fit did not converge in {FIT_MAX_ITERATIONS} iterations"
    )))
}

/// Two numeric columns, optional header row, `#` comments.
fn read_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                path: path.into(),
                message: format!("row {}: expected 2 columns", i + 1),
            });
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                a.push(x);
                b.push(y);
            }
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.into(),
                    message: format!("row {}: not numeric", i + 1),
                })
            }
        }
    }
    Ok((a, b))
}

/// Reads a (t s, counts) CSV.
pub fn read_counts(path: impl AsRef<Path>, label: CountLabel) -> Result<CountSeries> {
    let (t, c) = read_columns(path.as_ref())?;
    CountSeries::new(t, c, label)
}

/// Reads a (λ nm, intensity) CSV.
pub fn read_spectrum(path: impl AsRef<Path>) -> Result<Spectrum> {
    let (x, y) = read_columns(path.as_ref())?;
    Spectrum::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(c: &[f64]) -> CountSeries {
        CountSeries::new((0..c.len()).map(|i| i as f64).collect(), c.to_vec(), CountLabel::Dark).unwrap()
    }

    #[test]
    fn constant_series() {
        let m = rate_stats(&series(&[100.0; 8])).unwrap();
        assert_eq!((m.mean, m.sigma), (100.0, 0.0));
    }

    #[test]
    fn two_point_series() {
        let m = rate_stats(&series(&[60.0, 80.0])).unwrap();
        assert_eq!(m.mean, 70.0);
        assert!((m.sigma - 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(rate_stats(&series(&[5.0])).is_err());
    }

    #[test]
    fn series_invariants() {
        assert!(CountSeries::new(vec![0.0, 0.0], vec![1.0, 1.0], CountLabel::Dark).is_err());
        assert!(CountSeries::new(vec![0.0, 1.0], vec![1.0, -1.0], CountLabel::Dark).is_err());
    }

    #[test]
    fn subtraction_of_nothing() {
        let n = background_correct(Measurement::new(42.0, 0.0), Measurement::new(0.0, 0.0)).unwrap();
        assert_eq!((n.mean, n.sigma, n.negative), (42.0, 0.0, false));
    }

    #[test]
    fn negative_net_is_flagged() {
        let n = background_correct(Measurement::new(1.0, 1.0), Measurement::new(2.0, 1.0)).unwrap();
        assert!(n.negative);
        assert!(background_correct(Measurement::new(1.0, -1.0), Measurement::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn flat_spectrum_is_a_boundary_peak() {
        let s = Spectrum::new((0..50).map(|i| 580.0 + i as f64).collect(), vec![3.0; 50]).unwrap();
        assert!(lorentzian_fit(&s).is_err());
    }
}
