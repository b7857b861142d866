//! Dipole in homogeneous silica: the emitted power relative to vacuum
//! equals the refractive index.
//!
//! Usage: `bulk_purcell [cells_per_wavelength] [extent_um]`

use onft::validation::bulk_purcell;

fn main() -> onft::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().ok());
    let cpw = args.next().flatten().unwrap_or(20.0);
    let extent = args.next().flatten().unwrap_or(3.0);
    let r = bulk_purcell(cpw, extent)?;
    println!(
        "n = {:.5}, PF = {:.5}, error {:.2}% ({:.0} s)",
        r.index,
        r.purcell,
        100.0 * r.rel_error,
        r.wall_s
    );
    Ok(())
}
