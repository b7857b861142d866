//! Emitter 10 nm outside a nanofiber: coupling efficiency for one radius.
//!
//! Usage: `onf_surface [k0a] [orientation] [cells_per_wavelength]`

use onft::config::{Preset, SimulationConfig};
use onft::pipeline::{simulate, VacuumCache};
use onft::scene::{CaseId, Orientation, SceneSpec};

fn main() -> onft::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k0a: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1.44);
    let orientation: Orientation = args.get(1).map_or(Ok(Orientation::Radial), |s| s.parse())?;
    let cpw: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let scene = SceneSpec::with_k0a(CaseId::OnfSurface, k0a, orientation);
    let config = SimulationConfig::preset(Preset::Desk, scene)?.with_vacuum_resolution(cpw)?;
    let sim = simulate(&config, &VacuumCache::new())?;
    let b = sim.budget;
    println!(
        "k0a {k0a} {}: T = {:.4} PF = {:.4} eta = {:.4} ({} steps, {:.0} s; vacuum {} steps)",
        orientation.label(),
        b.transmission,
        b.purcell,
        b.eta,
        sim.steps(),
        sim.wall_s(),
        sim.vacuum_run.steps
    );
    Ok(())
}
