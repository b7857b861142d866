//! Guided modes of a silica nanofiber in air.
//!
//! Usage: `mode_table [k0a] [n1] [n2]`; prints CSV (family, l, m, n_eff, q)
//! and the single-mode boundary in k0a.

use onft::modes::{evanescent_q, guided_modes, single_mode_cutoff_k0a, v_number};

fn main() -> onft::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let k0a = args.first().copied().unwrap_or(7.16);
    let n1 = args.get(1).copied().unwrap_or(1.4573);
    let n2 = args.get(2).copied().unwrap_or(1.0);
    let wavelength = 0.62;
    let radius = k0a * wavelength / (2.0 * std::f64::consts::PI);
    let v = v_number(radius, wavelength, n1, n2)?;
    println!("# k0a = {k0a}, a = {radius:.4} um, V = {v:.4}");
    println!("family,l,m,n_eff,q_per_um");
    for m in guided_modes(radius, wavelength, n1, n2)? {
        println!("{},{},{},{:.12},{:.8}", m.family, m.l, m.m, m.n_eff, evanescent_q(&m));
    }
    println!("# single-mode for k0a < {:.4}", single_mode_cutoff_k0a(n1, n2)?);
    Ok(())
}
