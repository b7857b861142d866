//! Radiated power of a dipole in free space compared with the analytic value.
//!
//! Usage: `vacuum_dipole [cells_per_wavelength] [extent_um]`

use onft::grid::{CpmlParams, GridSpec, MaterialGrid};
use onft::scene::DipoleSource;
use onft::solver::{analytic_dipole_power, run_to_steady_state, RunControl, RunSetup};
use onft::grid::NodeBox;

fn main() -> onft::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cpw = args.first().copied().unwrap_or(20.0);
    let extent = args.get(1).copied().unwrap_or(3.0);
    let wavelength = 0.62;
    let n = (extent / (wavelength / cpw) / 2.0).ceil() * 2.0;
    let spec = GridSpec {
        extent_um: [extent; 3],
        cell_um: extent / n,
        pml_cells: 10,
        courant_factor: 0.95,
    };
    let lattice = spec.lattice()?;
    let c = lattice.cells[0] / 2;
    let setup = RunSetup::<f32> {
        materials: MaterialGrid::uniform(&lattice, 1.0),
        source: DipoleSource {
            position_um: [extent / 2.0; 3],
            polarization: [1.0, 0.0, 0.0],
            wavelength_um: wavelength,
            amplitude: 1.0,
        },
        plane: None,
        power_box: Some(NodeBox {
            lo: [c - 6; 3],
            hi: [c + 6; 3],
        }),
        probes: vec![],
        cpml: CpmlParams::default(),
        courant_factor: spec.courant_factor,
        lattice,
    };
    let out = run_to_steady_state(&setup, &RunControl::default())?;
    let p0 = analytic_dipole_power(1.0, out.time.omega, 1.0);
    println!(
        "cells/lambda {cpw}: P = {:.6e}, analytic {:.6e}, ratio {:.5}, steps {}, {:.1} s",
        out.box_power,
        p0,
        out.box_power / p0,
        out.steps,
        out.wall_s
    );
    Ok(())
}
