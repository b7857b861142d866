//! Emitter-position sweep with an exponential fit of η against the offset.
//!
//! Usage: `position_sweep [case] [variable] [k0a] [values...]`, e.g.
//! `position_sweep i d_r 1.44 0 0.05 0.1 0.15 0.2`. The fitted decay length
//! is printed next to 1/(2q) of the fundamental mode.

use std::cell::RefCell;

use onft::config::{Preset, SimulationConfig};
use onft::modes::evanescent_q;
use onft::pipeline::{simulate, VacuumCache};
use onft::scene::{CaseId, Orientation, SceneSpec};
use onft::sweep::{fit_exp_decay, sweep_with, PointOutcome, SweepSpec, SweepVar};

fn main() -> onft::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let case: CaseId = args.first().map_or(Ok(CaseId::OnfSurface), |s| s.parse())?;
    let variable: SweepVar = args.get(1).map_or(Ok(SweepVar::DR), |s| s.parse())?;
    let k0a: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.44);
    let mut values: Vec<f64> = args.iter().skip(3).filter_map(|s| s.parse().ok()).collect();
    if values.is_empty() {
        values = vec![0.0, 0.05, 0.1, 0.15, 0.2];
    }

    let scene = SceneSpec::with_k0a(case, k0a, Orientation::Radial);
    let base = SimulationConfig::preset(Preset::Desk, scene)?.with_vacuum_resolution(20.0)?;
    let spec = SweepSpec {
        orientations: vec![Orientation::Radial],
        variable,
        values,
        base,
    };

    let cache = VacuumCache::new();
    let guided = RefCell::new(Vec::new());
    let result = sweep_with(&spec, |config| {
        let sim = simulate(config, &cache)?;
        let proj = sim.mode_projection()?;
        guided.borrow_mut().push(proj.guided_power() / sim.budget.scene_power);
        Ok(PointOutcome {
            budget: sim.budget,
            steps: sim.steps(),
            wall_s: sim.wall_s(),
        })
    })?;

    println!("{},T,PF,eta,eta_guided", variable.label());
    let guided = guided.into_inner();
    let ok = result.rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| (r.value, o)));
    for ((v, o), g) in ok.zip(&guided) {
        println!("{v:.4},{:.5},{:.5},{:.5},{g:.5}", o.budget.transmission, o.budget.purcell, o.budget.eta);
    }
    for r in result.failures() {
        println!("# {} failed: {}", r.value, r.outcome.as_ref().unwrap_err());
    }

    let series = result.eta_series(Orientation::Radial);
    let he11 = onft::modes::guided_modes(spec.base.scene.radius_um, spec.base.scene.wavelength_um, spec.base.scene.core_index()?, 1.0)?;
    let predicted = 1.0 / (2.0 * evanescent_q(&he11[0]));
    if let Ok(fit) = fit_exp_decay(&series) {
        println!("# fit eta: length {:.4} um (rms {:.3}); 1/(2q) = {predicted:.4} um", fit.length, fit.residual);
    }
    let gseries: Vec<(f64, f64)> = series.iter().map(|p| p.0).zip(guided).collect();
    if let Ok(fit) = fit_exp_decay(&gseries) {
        println!("# fit guided: length {:.4} um (rms {:.3})", fit.length, fit.residual);
    }
    Ok(())
}
