//! Self-checks of the field solver against closed-form results and
//! conservation properties.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Axis, CpmlParams, CpmlProfile, CurrentInjection, FieldState, GridSpec, Lattice, MaterialGrid, NodeBox, Real};
use crate::scene::{silica_index, DipoleSource};
use crate::solver::{analytic_dipole_power, run_to_steady_state, RunControl, RunOutput, RunSetup, TimeGrid};

pub const VALIDATION_WAVELENGTH_UM: f64 = 0.62;

/// Cubic grid of `extent_um` with the cell size nearest `wavelength/cpw`
/// that gives an even cell count.
fn grid_for(extent_um: [f64; 3], cpw: f64, pml_cells: usize) -> Result<GridSpec> {
    let target = VALIDATION_WAVELENGTH_UM / cpw;
    let n = (extent_um[0] / target / 2.0).ceil() * 2.0;
    let cell_um = extent_um[0] / n;
    let extent_um = extent_um.map(|e| (e / cell_um / 2.0).round() * 2.0 * cell_um);
    let spec = GridSpec {
        extent_um,
        cell_um,
        pml_cells,
        courant_factor: 0.95,
    };
    spec.cells()?;
    Ok(spec)
}

fn centre_node(lattice: &Lattice) -> [usize; 3] {
    lattice.cells.map(|n| n / 2)
}

fn dipole_at_centre(lattice: &Lattice, polarization: [f64; 3]) -> DipoleSource {
    let c = centre_node(lattice);
    DipoleSource {
        position_um: c.map(|v| v as f64 * lattice.cell_um),
        polarization,
        wavelength_um: VALIDATION_WAVELENGTH_UM,
        amplitude: 1.0,
    }
}

fn centred_box(lattice: &Lattice, half: usize) -> NodeBox {
    let c = centre_node(lattice);
    NodeBox {
        lo: c.map(|v| v - half),
        hi: c.map(|v| v + half),
    }
}

/// Dipole in a homogeneous medium of index `n`, power on a box of ±6 cells.
fn homogeneous_run<T: Real>(spec: &GridSpec, n: f64, polarization: [f64; 3]) -> Result<RunOutput> {
    let lattice = spec.lattice()?;
    let setup = RunSetup::<T> {
        materials: MaterialGrid::uniform(&lattice, n * n),
        source: dipole_at_centre(&lattice, polarization),
        plane: None,
        power_box: Some(centred_box(&lattice, 6)),
        probes: Vec::new(),
        cpml: CpmlParams::default(),
        courant_factor: spec.courant_factor,
        lattice,
    };
    run_to_steady_state(&setup, &RunControl::default())
}

/// Radiated power of a free-space dipole against n·ω²A²/(12π).
#[derive(Clone, Debug, Serialize)]
pub struct VacuumPowerReport {
    pub cells_per_wavelength: f64,
    pub cell_um: f64,
    pub measured: f64,
    pub analytic: f64,
    pub rel_error: f64,
    pub steps: u64,
    pub wall_s: f64,
}

pub fn vacuum_power(cpw: f64, extent_um: f64) -> Result<VacuumPowerReport> {
    let spec = grid_for([extent_um; 3], cpw, 10)?;
    let out = homogeneous_run::<f32>(&spec, 1.0, [1.0, 0.0, 0.0])?;
    let analytic = analytic_dipole_power(1.0, out.time.omega, 1.0);
    Ok(VacuumPowerReport {
        cells_per_wavelength: VALIDATION_WAVELENGTH_UM / spec.cell_um,
        cell_um: spec.cell_um,
        measured: out.box_power,
        analytic,
        rel_error: (out.box_power - analytic).abs() / analytic,
        steps: out.steps,
        wall_s: out.wall_s,
    })
}

/// Purcell factor of a dipole embedded in bulk silica.
#[derive(Clone, Debug, Serialize)]
pub struct BulkPurcellReport {
    pub index: f64,
    pub purcell: f64,
    pub rel_error: f64,
    pub wall_s: f64,
}

pub fn bulk_purcell(cpw: f64, extent_um: f64) -> Result<BulkPurcellReport> {
    let n = silica_index(VALIDATION_WAVELENGTH_UM)?;
    let spec = grid_for([extent_um; 3], cpw, 10)?;
    let vac = homogeneous_run::<f32>(&spec, 1.0, [1.0, 0.0, 0.0])?;
    let bulk = homogeneous_run::<f32>(&spec, n, [1.0, 0.0, 0.0])?;
    let purcell = bulk.box_power / vac.box_power;
    Ok(BulkPurcellReport {
        index: n,
        purcell,
        rel_error: (purcell - n).abs() / n,
        wall_s: vac.wall_s + bulk.wall_s,
    })
}

/// Interior energy after a pulsed source has switched off.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyDecayReport {
    pub peak: f64,
    pub final_fraction: f64,
    /// Largest step-to-step increase after switch-off, relative to the peak.
    pub max_rise: f64,
    pub steps: u64,
}

impl EnergyDecayReport {
    pub fn monotone(&self) -> bool {
        self.max_rise <= 0.0
    }
}

/// Drive a differentiated-Gaussian current pulse (no net charge) at the
/// centre, then follow the leapfrog energy of the non-PML region.
pub fn energy_decay(cells: usize, pml: usize, max_steps: u64) -> Result<EnergyDecayReport> {
    let spec = GridSpec {
        extent_um: [cells as f64 * 0.031; 3],
        cell_um: 0.031,
        pml_cells: pml,
        courant_factor: 0.95,
    };
    let lattice = spec.lattice()?;
    let materials = MaterialGrid::<f64>::uniform(&lattice, 1.0);
    let dt = spec.courant_factor / 3f64.sqrt();
    let cpml = CpmlProfile::<f64>::new(&lattice, &CpmlParams::default(), dt);
    let interior = lattice.interior();
    let c = centre_node(&lattice);
    let index = lattice.idx(c[0], c[1], c[2]);
    let mut state = FieldState::<f64>::zeros(lattice);

    let tau = 3.0;
    let t0 = 6.0 * tau;
    let off = (2.0 * t0 / dt).ceil() as u64;
    let mut peak = 0.0f64;
    let mut last = f64::INFINITY;
    let mut max_rise = f64::NEG_INFINITY;
    let mut energy = 0.0;
    while state.step < max_steps {
        let t = (state.step as f64 + 0.5) * dt;
        let current = if state.step < off {
            let s = (t - t0) / tau;
            -s * (-0.5 * s * s).exp()
        } else {
            0.0
        };
        let h_prev = state.h.clone();
        state.advance_h(&cpml, dt);
        energy = state.energy_with_previous_h(&materials, interior, &h_prev);
        peak = peak.max(energy);
        if state.step > off {
            max_rise = max_rise.max((energy - last) / peak);
        }
        last = energy;
        let src = [CurrentInjection {
            component: Axis::Z,
            index,
            current,
        }];
        state.advance_e(&materials, &cpml, &src, dt)?;
        if state.step > off && energy < 1e-7 * peak {
            break;
        }
    }
    Ok(EnergyDecayReport {
        peak,
        final_fraction: energy / peak,
        max_rise,
        steps: state.step,
    })
}

/// Divergence of H after source-free evolution of a pseudo-random E field.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub max_div: f64,
    pub max_h: f64,
    pub relative: f64,
}

pub fn divergence_free(cells: usize, steps: u64) -> Result<DivergenceReport> {
    let spec = GridSpec {
        extent_um: [cells as f64 * 0.031; 3],
        cell_um: 0.031,
        pml_cells: 0,
        courant_factor: 0.95,
    };
    let lattice = spec.lattice()?;
    let materials = MaterialGrid::<f64>::uniform(&lattice, 1.0);
    let dt = spec.courant_factor / 3f64.sqrt();
    let cpml = CpmlProfile::<f64>::new(&lattice, &CpmlParams::default(), dt);
    let mut state = FieldState::<f64>::zeros(lattice.clone());
    let n = lattice.cells;
    for a in 0..3 {
        for k in 1..n[2] {
            for j in 1..n[1] {
                for i in 1..n[0] {
                    let idx = lattice.idx(i, j, k);
                    // Weyl sequence: deterministic, well spread in [-0.5, 0.5)
                    let u = ((idx * 3 + a) as f64 * 0.618_033_988_749_894_9).fract() - 0.5;
                    state.e[a][idx] = u;
                }
            }
        }
    }
    for _ in 0..steps {
        state.step(&materials, &cpml, &[], dt)?;
    }
    let region = NodeBox { lo: [0; 3], hi: n };
    let (max_div, max_h) = state.max_div_h(region);
    Ok(DivergenceReport {
        max_div,
        max_h,
        relative: max_div / max_h,
    })
}

/// Phase velocity along a lattice axis predicted by the Yee dispersion
/// relation, in units of c. `omega` and `dt` are in solver units.
pub fn yee_axial_phase_velocity(omega: f64, dt: f64) -> f64 {
    let k = 2.0 * ((omega * dt / 2.0).sin() / dt).asin();
    omega / k
}

/// Measured phase velocity of outgoing waves on the broadside axis of a dipole.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseVelocityReport {
    pub cells_per_wavelength: f64,
    /// Measured phase velocity over c.
    pub measured: f64,
    /// Yee prediction over c.
    pub predicted: f64,
    pub wall_s: f64,
}

impl PhaseVelocityReport {
    pub fn deviation_from_c(&self) -> f64 {
        (self.measured - 1.0).abs()
    }
}

/// Phase of E_x sampled along the broadside (z) axis of an x dipole, with
/// the 1 + i/(kr) − 1/(kr)² near-field factor removed self-consistently.
pub fn phase_velocity(cpw: f64) -> Result<PhaseVelocityReport> {
    let spec = grid_for([3.0, 3.0, 6.0], cpw, 10)?;
    let lattice = spec.lattice()?;
    let c = centre_node(&lattice);
    let mut source = dipole_at_centre(&lattice, [1.0, 0.0, 0.0]);
    // exactly on an E_x node
    source.position_um[0] += 0.5 * lattice.cell_um;
    let period = VALIDATION_WAVELENGTH_UM / lattice.cell_um;
    let r0 = (1.5 * period).ceil() as usize;
    let r1 = lattice.interior().hi[2] - c[2] - 3;
    if r1 <= r0 + 4 {
        return Err(Error::validation("domain too short for a phase measurement"));
    }
    let probes: Vec<(Axis, [usize; 3])> = (r0..=r1).map(|r| (Axis::X, [c[0], c[1], c[2] + r])).collect();
    let setup = RunSetup::<f64> {
        materials: MaterialGrid::uniform(&lattice, 1.0),
        source,
        plane: None,
        power_box: Some(centred_box(&lattice, 6)),
        probes,
        cpml: CpmlParams::default(),
        courant_factor: spec.courant_factor,
        lattice,
    };
    let out = run_to_steady_state(&setup, &RunControl::default())?;
    let omega = out.time.omega;

    let mut values: Vec<(f64, num_complex::Complex64)> = out
        .probes
        .iter()
        .map(|p| ((p.node[2] - c[2]) as f64, p.value))
        .collect();
    let raw = unwrap_phase(&values);
    if raw.last().unwrap().1 < raw[0].1 {
        values.iter_mut().for_each(|v| v.1 = v.1.conj());
    }
    let mut k = omega;
    for _ in 0..20 {
        let corrected: Vec<(f64, num_complex::Complex64)> = values
            .iter()
            .map(|&(r, v)| {
                let kr = k * r;
                let g = num_complex::Complex64::new(1.0 - 1.0 / (kr * kr), 1.0 / kr);
                (r, v / g)
            })
            .collect();
        let k_new = linear_slope(&unwrap_phase(&corrected));
        let done = (k_new - k).abs() < 1e-14 * k;
        k = k_new;
        if done {
            break;
        }
    }
    Ok(PhaseVelocityReport {
        cells_per_wavelength: period,
        measured: omega / k,
        predicted: yee_axial_phase_velocity(omega, out.time.dt),
        wall_s: out.wall_s,
    })
}

fn unwrap_phase(values: &[(f64, num_complex::Complex64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &(r, v) in values {
        let mut ph = v.arg() + offset;
        if let Some(p) = prev {
            while ph - p > std::f64::consts::PI {
                ph -= 2.0 * std::f64::consts::PI;
                offset -= 2.0 * std::f64::consts::PI;
            }
            while ph - p < -std::f64::consts::PI {
                ph += 2.0 * std::f64::consts::PI;
                offset += 2.0 * std::f64::consts::PI;
            }
        }
        prev = Some(ph);
        out.push((r, ph));
    }
    out
}

fn linear_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fields and powers for p and −p.
#[derive(Clone, Debug, Serialize)]
pub struct ReversalReport {
    pub power: f64,
    pub power_reversed: f64,
    /// Largest |E(p) + E(−p)| over the probes.
    pub max_field_sum: f64,
}

pub fn reversal_symmetry(cpw: f64, extent_um: f64) -> Result<ReversalReport> {
    let spec = grid_for([extent_um; 3], cpw, 10)?;
    let lattice = spec.lattice()?;
    let c = centre_node(&lattice);
    let probes: Vec<(Axis, [usize; 3])> = Axis::ALL
        .iter()
        .flat_map(|&a| (1..6).map(move |d| (a, [c[0] + d, c[1] + 2, c[2] + 3])))
        .collect();
    let run = |pol: [f64; 3]| -> Result<RunOutput> {
        let setup = RunSetup::<f64> {
            materials: MaterialGrid::uniform(&lattice, 1.0),
            source: dipole_at_centre(&lattice, pol),
            plane: None,
            power_box: Some(centred_box(&lattice, 5)),
            probes: probes.clone(),
            cpml: CpmlParams::default(),
            courant_factor: spec.courant_factor,
            lattice: lattice.clone(),
        };
        run_to_steady_state(&setup, &RunControl::default())
    };
    let p = (0.6f64, 0.8f64);
    let fwd = run([p.0, 0.0, p.1])?;
    let rev = run([-p.0, 0.0, -p.1])?;
    let max_field_sum = fwd
        .probes
        .iter()
        .zip(&rev.probes)
        .map(|(a, b)| (a.value + b.value).norm())
        .fold(0.0, f64::max);
    Ok(ReversalReport {
        power: fwd.box_power,
        power_reversed: rev.box_power,
        max_field_sum,
    })
}

/// Step a driven grid with `threads` workers; returns the final fields.
pub fn fields_after<T: Real>(threads: usize, cells: usize, steps: u64) -> Result<[Vec<T>; 6]> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| {
        let spec = GridSpec {
            extent_um: [cells as f64 * 0.031; 3],
            cell_um: 0.031,
            pml_cells: 6,
            courant_factor: 0.95,
        };
        let lattice = spec.lattice()?;
        let materials = MaterialGrid::<T>::from_fn(&lattice, 1.0, |_, p| {
            if p[2] < cells as f64 * 0.4 { 2.1 } else { 1.0 }
        });
        let time = TimeGrid::new(spec.cell_um, VALIDATION_WAVELENGTH_UM, spec.courant_factor);
        let cpml = CpmlProfile::<T>::new(&lattice, &CpmlParams::default(), time.dt);
        let c = centre_node(&lattice);
        let index = lattice.idx(c[0], c[1], c[2]);
        let mut state = FieldState::<T>::zeros(lattice);
        for n in 0..steps {
            let t = (n as f64 + 0.5) * time.dt;
            let src = [CurrentInjection {
                component: Axis::Y,
                index,
                current: (time.omega * t).sin(),
            }];
            state.step(&materials, &cpml, &src, time.dt)?;
        }
        let [ex, ey, ez] = state.e;
        let [hx, hy, hz] = state.h;
        Ok([ex, ey, ez, hx, hy, hz])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yee_velocity_is_below_c_and_converges() {
        let v = |cpw: f64| {
            let t = TimeGrid::new(1.0, cpw, 0.95);
            yee_axial_phase_velocity(t.omega, t.dt)
        };
        assert!(v(20.0) < 1.0);
        assert!(1.0 - v(20.0) < 5e-3);
        assert!(1.0 - v(40.0) < 0.3 * (1.0 - v(20.0)));
    }

    #[test]
    fn unwrapping_recovers_a_linear_phase() {
        let pts: Vec<_> = (0..50)
            .map(|i| {
                let r = i as f64;
                (r, num_complex::Complex64::from_polar(2.0, 0.7 * r + 0.3))
            })
            .collect();
        assert!((linear_slope(&unwrap_phase(&pts)) - 0.7).abs() < 1e-12);
    }
}
