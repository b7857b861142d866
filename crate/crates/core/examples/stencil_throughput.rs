//! Measures Yee update throughput on a desk-sized lattice.
//!
//!     cargo run --release --example stencil_throughput -- [cells_per_axis_xy] [cells_z] [steps]

use std::time::Instant;

use onft::grid::{CpmlParams, CpmlProfile, CurrentInjection, FieldState, GridSpec, MaterialGrid, Axis};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let nxy = args.first().copied().unwrap_or(130);
    let nz = args.get(1).copied().unwrap_or(390);
    let steps = args.get(2).copied().unwrap_or(50);
    let pml = args.get(3).copied().unwrap_or(10);
    let cell = 0.031;
    let spec = GridSpec {
        extent_um: [nxy as f64 * cell, nxy as f64 * cell, nz as f64 * cell],
        cell_um: cell,
        pml_cells: pml,
        courant_factor: 0.95,
    };
    let lattice = spec.lattice().expect("valid grid");
    let materials = MaterialGrid::<f32>::uniform(&lattice, 1.0);
    let dt = 0.95 / 3f64.sqrt();
    let cpml = CpmlProfile::new(&lattice, &CpmlParams::default(), dt);
    let mut state = FieldState::zeros(lattice.clone());
    let src = lattice.idx(nxy / 2, nxy / 2, nz / 2);
    let start = Instant::now();
    for n in 0..steps {
        let j = CurrentInjection {
            component: Axis::X,
            index: src,
            current: (0.3 * n as f64).sin(),
        };
        state.step(&materials, &cpml, &[j], dt).expect("stable");
    }
    let secs = start.elapsed().as_secs_f64();
    let cells = lattice.len() as f64 * steps as f64;
    println!(
        "{}x{}x{} nodes, {steps} steps: {:.3} s/step, {:.1} Mcell/s",
        lattice.nodes()[0],
        lattice.nodes()[1],
        lattice.nodes()[2],
        secs / steps as f64,
        cells / secs / 1e6
    );
}
