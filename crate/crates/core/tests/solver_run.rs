use std::path::Path;

use onft::config::{parse_config, Preset, SimulationConfig};
use onft::grid::NodeBox;
use onft::pipeline::{prepare, simulate, vacuum_setup, VacuumCache};
use onft::scene::{CaseId, Orientation, SceneSpec};
use onft::solver::{compute_power_budget, run_to_steady_state};
use onft::Error;

fn small(case: &str, k0a: f64, orientation: &str, extent_z: f64, monitor: f64, runtime: &str) -> SimulationConfig {
    let text = format!(
        r#"{{
  "grid": {{ "extent_um": [2.0, 2.0, {extent_z}], "cell_um": 0.05 }},
  "scene": {{ "case": "{case}", "orientation": "{orientation}", "k0a": {k0a} }},
  "layout": {{ "monitor_distance_um": {monitor}, "top_clearance_um": 1.0, "box_clearance_cells": 3 }},
  "runtime": {{ "ramp_periods": 4, "window_periods": 4 {runtime} }}
}}"#
    );
    parse_config(&text, Path::new("<test>")).unwrap()
}

#[test]
fn budget_identities() {
    let config = small("onft_facet", 2.01, "radial", 4.0, 1.5, "");
    let sim = simulate(&config, &VacuumCache::new()).unwrap();
    let b = sim.budget;
    assert_eq!(b.eta, b.transmission / b.purcell);
    assert!(b.purcell > 0.0);
    assert!((0.0..=1.02).contains(&b.eta), "{b:?}");
    assert!(sim.scene_run.residual < 1e-3);
    assert!(sim.vacuum_run.residual < 1e-3);
}

#[test]
fn eta_is_independent_of_source_amplitude() {
    let config = small("onft_facet", 2.01, "radial", 4.0, 1.5, "");
    let (setup, _) = prepare::<f64>(&config).unwrap();
    let mut louder = setup.clone();
    louder.source.amplitude *= 7.3;
    let a = run_to_steady_state(&setup, &config.runtime).unwrap();
    let b = run_to_steady_state(&louder, &config.runtime).unwrap();
    let (eta_a, eta_b) = (a.plane_flux / a.box_power, b.plane_flux / b.box_power);
    assert!((eta_a / eta_b - 1.0).abs() < 1e-10, "{eta_a} vs {eta_b}");
    assert!((b.box_power / a.box_power / (7.3 * 7.3) - 1.0).abs() < 1e-9);
}

#[test]
fn step_cap_reports_non_convergence() {
    let config = small("onft_facet", 2.01, "radial", 4.0, 1.5, r#", "max_steps": 10"#);
    match simulate(&config, &VacuumCache::new()) {
        Err(Error::NotConverged { steps, .. }) => assert!(steps <= 10),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn vacuum_box_power_is_box_independent() {
    let config = small("onft_facet", 2.01, "radial", 4.0, 1.5, "");
    let (setup, _) = prepare::<f32>(&config).unwrap();
    let vacuum = vacuum_setup(&config, &setup).unwrap();
    let base = run_to_steady_state(&vacuum, &config.runtime).unwrap();
    assert!(base.residual < 1e-3);
    let mut wider = vacuum.clone();
    let b = wider.power_box.unwrap();
    wider.power_box = Some(NodeBox {
        lo: b.lo.map(|v| v - 2),
        hi: b.hi.map(|v| v + 2),
    });
    let grown = run_to_steady_state(&wider, &config.runtime).unwrap();
    assert!((grown.box_power / base.box_power - 1.0).abs() < 5e-3, "{} vs {}", grown.box_power, base.box_power);
}

#[test]
fn normalization_requires_matching_runs() {
    let a = small("onft_facet", 2.01, "radial", 4.0, 1.5, "");
    let (setup, _) = prepare::<f32>(&a).unwrap();
    let run = run_to_steady_state(&setup, &a.runtime).unwrap();
    let mut other = setup.clone();
    other.source.amplitude *= 2.0;
    let run2 = run_to_steady_state(&other, &a.runtime).unwrap();
    assert!(compute_power_budget(&run, &run2).is_err());
}

#[test]
fn on_axis_orientations_agree() {
    let cache = VacuumCache::new();
    let r = simulate(&small("onf_inside", 1.44, "radial", 4.0, 1.5, ""), &cache).unwrap();
    let a = simulate(&small("onf_inside", 1.44, "azimuthal", 4.0, 1.5, ""), &cache).unwrap();
    let rel = (r.budget.eta - a.budget.eta).abs() / r.budget.eta;
    assert!(rel < 0.02, "{} vs {}", r.budget.eta, a.budget.eta);
}

#[test]
fn guided_power_does_not_depend_on_monitor_distance() {
    let cache = VacuumCache::new();
    let near = simulate(&small("onft_facet", 2.01, "radial", 5.0, 1.5, ""), &cache).unwrap();
    let far = simulate(&small("onft_facet", 2.01, "radial", 5.0, 2.5, ""), &cache).unwrap();
    let rel = (near.budget.eta - far.budget.eta).abs() / near.budget.eta;
    assert!(rel < 0.03, "{} vs {}", near.budget.eta, far.budget.eta);
}

#[test]
fn single_mode_tip_couples_into_he11() {
    let scene = SceneSpec::with_k0a(CaseId::OnftFacet, 2.01, Orientation::Radial);
    let config = SimulationConfig::preset(Preset::Desk, scene).unwrap().with_vacuum_resolution(20.0).unwrap();
    let sim = simulate(&config, &VacuumCache::new()).unwrap();
    let proj = sim.mode_projection().unwrap();
    assert_eq!(proj.modes.len(), 1);
    assert_eq!(proj.modes[0].label, "HE11");
    let fraction = proj.modes[0].power / proj.plane_flux;
    assert!(fraction >= 0.95, "HE11 carries {fraction:.4} of the plane flux");
    assert!(fraction <= 1.02);
    assert!(proj.guided_power() <= proj.plane_flux * 1.02);
}
