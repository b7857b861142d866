//! Emitter 10 nm in front of a nanofiber-tip facet.
//!
//! Usage: `onft_facet [k0a...]` (default: 2.01 7.16)

use onft::config::{Preset, SimulationConfig};
use onft::pipeline::{simulate, VacuumCache};
use onft::scene::{CaseId, Orientation, SceneSpec};

fn main() -> onft::Result<()> {
    env_logger::init();
    let mut values: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if values.is_empty() {
        values = vec![2.01, 7.16];
    }
    let cache = VacuumCache::new();
    for k0a in values {
        let scene = SceneSpec::with_k0a(CaseId::OnftFacet, k0a, Orientation::Radial);
        let config = SimulationConfig::preset(Preset::Desk, scene)?.with_vacuum_resolution(20.0)?;
        let sim = simulate(&config, &cache)?;
        let b = sim.budget;
        println!(
            "k0a {k0a:5.2} a = {:.3} um: T = {:.4} PF = {:.4} eta = {:.4} ({} steps, {:.0} s)",
            config.scene.radius_um,
            b.transmission,
            b.purcell,
            b.eta,
            sim.steps(),
            sim.wall_s()
        );
    }
    Ok(())
}
