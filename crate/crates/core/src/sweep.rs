//! Radius and position sweeps, peak location and exponential-decay fits.

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};

use crate::config::{config_hash, ResultRow, SimulationConfig};
use crate::error::{Error, Result};
use crate::pipeline::{simulate, VacuumCache};
use crate::scene::{CaseId, Orientation};
use crate::solver::PowerBudget;

/// The swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    K0a,
    DR,
    DX,
    DY,
    DZ,
}

impl SweepVar {
    pub fn label(self) -> &'static str {
        match self {
            SweepVar::K0a => "k0a",
            SweepVar::DR => "d_r",
            SweepVar::DX => "d_x",
            SweepVar::DY => "d_y",
            SweepVar::DZ => "d_z",
        }
    }

    fn allowed_for(self, case: CaseId) -> bool {
        match self {
            SweepVar::K0a => true,
            SweepVar::DR => case == CaseId::OnfSurface,
            SweepVar::DX | SweepVar::DY | SweepVar::DZ => case == CaseId::OnftFacet,
        }
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k0a" => Ok(SweepVar::K0a),
            "d_r" | "dr" => Ok(SweepVar::DR),
            "d_x" | "dx" => Ok(SweepVar::DX),
            "d_y" | "dy" => Ok(SweepVar::DY),
            "d_z" | "dz" => Ok(SweepVar::DZ),
            other => Err(Error::validation(format!("unknown sweep variable `{other}`"))),
        }
    }
}

/// A list of points sharing everything but one parameter and the orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub orientations: Vec<Orientation>,
    pub variable: SweepVar,
    pub values: Vec<f64>,
    /// Fixed parameters; its scene supplies the case and non-swept values.
    pub base: SimulationConfig,
}

impl SweepSpec {
    pub fn case(&self) -> CaseId {
        self.base.scene.case
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::validation("sweep has no values"));
        }
        if self.orientations.is_empty() {
            return Err(Error::validation("sweep has no orientations"));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("sweep values must be strictly increasing"));
        }
        if !self.variable.allowed_for(self.case()) {
            return Err(Error::validation(format!(
                "{} cannot be swept for {:?}",
                self.variable.label(),
                self.case()
            )));
        }
        Ok(())
    }

    /// Configuration of one sweep point.
    pub fn point_config(&self, orientation: Orientation, value: f64) -> Result<SimulationConfig> {
        let mut c = self.base.clone();
        c.scene.orientation = orientation;
        match self.variable {
            SweepVar::K0a => c.scene.radius_um = value / c.scene.k0(),
            SweepVar::DR => c.scene.offsets.d_r = value,
            SweepVar::DX => c.scene.offsets.d_x = value,
            SweepVar::DY => c.scene.offsets.d_y = value,
            SweepVar::DZ => c.scene.offsets.d_z = value,
        }
        c.validate()?;
        Ok(c)
    }

    /// All (orientation, value) pairs in order.
    pub fn points(&self) -> Vec<(Orientation, f64)> {
        self.orientations
            .iter()
            .flat_map(|&o| self.values.iter().map(move |&v| (o, v)))
            .collect()
    }
}

/// Outcome of one successful point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub budget: PowerBudget,
    pub steps: u64,
    pub wall_s: f64,
}

/// One requested point; failures are kept with their message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub orientation: Orientation,
    pub value: f64,
    pub radius_um: f64,
    pub k0a: f64,
    pub config_hash: String,
    pub outcome: std::result::Result<PointOutcome, String>,
}

/// All rows of a sweep plus provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub case: CaseId,
    pub variable: SweepVar,
    pub rows: Vec<SweepRow>,
    pub code_version: String,
}

impl SweepResult {
    /// (value, η) of the successful points for one orientation, in sweep order.
    pub fn eta_series(&self, orientation: Orientation) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.orientation == orientation)
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r.value, o.budget.eta)))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }

    /// Rows for the results table (successful points only).
    pub fn result_rows(&self) -> Vec<ResultRow> {
        self.rows
            .iter()
            .filter_map(|r| {
                let o = r.outcome.as_ref().ok()?;
                Some(ResultRow {
                    case: self.case,
                    orientation: r.orientation,
                    k0a: r.k0a,
                    radius_um: r.radius_um,
                    sweep_var: self.variable.label().to_string(),
                    sweep_val_um: r.value,
                    transmission: o.budget.transmission,
                    purcell: o.budget.purcell,
                    eta: o.budget.eta,
                    steps: o.steps,
                    wall_s: o.wall_s,
                    config_hash: r.config_hash.clone(),
                })
            })
            .collect()
    }
}

/// Run every point in-process, sharing vacuum runs through `cache`.
pub fn sweep(spec: &SweepSpec, cache: &VacuumCache) -> Result<SweepResult> {
    sweep_with(spec, |config| {
        let sim = simulate(config, cache)?;
        Ok(PointOutcome {
            budget: sim.budget,
            steps: sim.steps(),
            wall_s: sim.wall_s(),
        })
    })
}

/// Run every point with a caller-supplied runner. Errors and panics of
/// single points are recorded in their rows.
pub fn sweep_with<F>(spec: &SweepSpec, runner: F) -> Result<SweepResult>
where
    F: Fn(&SimulationConfig) -> Result<PointOutcome>,
{
    spec.validate()?;
    let mut rows = Vec::new();
    for (orientation, value) in spec.points() {
        let config = spec.point_config(orientation, value);
        let (radius_um, k0a, hash) = match &config {
            Ok(c) => (c.scene.radius_um, c.scene.k0a(), config_hash(c)),
            Err(_) => (f64::NAN, f64::NAN, String::new()),
        };
        let outcome = config.and_then(|c| {
            catch_unwind(AssertUnwindSafe(|| runner(&c)))
                .unwrap_or_else(|_| Err(Error::Numerical("sweep point panicked".into())))
        });
        if let Err(e) = &outcome {
            log::warn!("{} = {value} ({orientation:?}) failed: {e}", spec.variable.label());
        }
        rows.push(SweepRow {
            orientation,
            value,
            radius_um,
            k0a,
            config_hash: hash,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Error::Numerical(format!(
            "all {} sweep points failed; first: {}",
            rows.len(),
            rows[0].outcome.as_ref().unwrap_err()
        )));
    }
    Ok(SweepResult {
        case: spec.case(),
        variable: spec.variable,
        rows,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Interior local maxima of `(x, y)` points. A plateau counts once, at its
/// smallest x, and only if it is followed by a lower value.
pub fn find_peaks(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "peak search needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut peaks = Vec::new();
    let n = points.len();
    let mut i = 1;
    while i < n - 1 {
        let y = points[i].1;
        if y > points[i - 1].1 {
            let mut j = i + 1;
            while j < n && points[j].1 == y {
                j += 1;
            }
            if j < n && points[j].1 < y {
                peaks.push(points[i]);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

/// η(d) = A·exp(−d/ℓ) fitted by linear regression on ln η.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub length: f64,
    /// RMS residual of ln η.
    pub residual: f64,
}

pub fn fit_exp_decay(points: &[(f64, f64)]) -> Result<ExpFit> {
    if points.len() < 3 {
        return Err(Error::validation("exponential fit needs at least 3 points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::validation(format!(
            "exponential fit needs positive values, got {} at d = {}",
            p.1, p.0
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(Error::validation("exponential fit needs distinct positions"));
    }
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum();
    Ok(ExpFit {
        amplitude: intercept.exp(),
        length: -1.0 / slope,
        residual: (rss / n).sqrt(),
    })
}
