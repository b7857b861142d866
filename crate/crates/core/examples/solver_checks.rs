//! Conservation and symmetry checks of the field solver.
//!
//! Usage: `solver_checks`

use onft::validation::{divergence_free, energy_decay, fields_after, phase_velocity, reversal_symmetry};

fn main() -> onft::Result<()> {
    env_logger::init();
    let d = divergence_free(24, 200)?;
    println!("div H: max {:.3e}, |H| {:.3e}, relative {:.3e}", d.max_div, d.max_h, d.relative);

    let e = energy_decay(48, 10, 6000)?;
    println!(
        "energy: peak {:.4e}, final {:.3e} of peak after {} steps, largest rise {:.3e}",
        e.peak, e.final_fraction, e.steps, e.max_rise
    );

    let serial = fields_after::<f32>(1, 32, 60)?;
    let parallel = fields_after::<f32>(4, 32, 60)?;
    let same = serial
        .iter()
        .zip(&parallel)
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!("serial and 4-thread fields bitwise identical: {same}");

    let r = reversal_symmetry(20.0, 1.5)?;
    println!(
        "p -> -p: power {:.10e} vs {:.10e}, max |E(p) + E(-p)| {:.1e}",
        r.power, r.power_reversed, r.max_field_sum
    );

    let v = phase_velocity(20.0)?;
    println!(
        "phase velocity at {:.1} cells/lambda: {:.5} c (Yee {:.5} c), {:.0} s",
        v.cells_per_wavelength, v.measured, v.predicted, v.wall_s
    );
    Ok(())
}
