//! Time-stepping driver: source waveform, DFT flux monitors, steady-state
//! detection and the power budget.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    Axis, CpmlParams, CpmlProfile, CurrentInjection, FieldState, Lattice, MaterialGrid, NodeBox,
    Real,
};
use crate::scene::{BuiltScene, DipoleSource, PlaneMonitorSpec};

/// Hard upper bound on η before the monitors are declared inconsistent.
pub const ETA_LIMIT: f64 = 1.02;

/// Stopping rules for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunControl {
    pub max_steps: u64,
    /// Relative change between consecutive DFT windows that counts as steady.
    pub residual_tol: f64,
    /// Length of the raised-cosine turn-on, in optical periods.
    pub ramp_periods: f64,
    /// Length of one DFT window, in optical periods.
    pub window_periods: u32,
    /// Plane flux changes are measured relative to at least this fraction of
    /// the box power, so a nearly dark monitor does not stall convergence.
    pub plane_floor: f64,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl {
            max_steps: 40_000,
            residual_tol: 1e-3,
            ramp_periods: 10.0,
            window_periods: 10,
            plane_floor: 1e-2,
        }
    }
}

impl RunControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_periods >= 0.0 && self.ramp_periods <= 10.0) {
            return Err(Error::validation(format!(
                "source ramp must be between 0 and 10 periods, got {}",
                self.ramp_periods
            )));
        }
        if self.window_periods == 0 {
            return Err(Error::validation("DFT window must span at least one period"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::validation("residual tolerance must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::validation("max_steps must be positive"));
        }
        Ok(())
    }
}

/// Time step snapped so one optical period is a whole number of steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Step in solver units (cell / c).
    pub dt: f64,
    pub steps_per_period: u64,
    /// Angular frequency in solver units.
    pub omega: f64,
}

impl TimeGrid {
    pub fn new(cell_um: f64, wavelength_um: f64, courant_factor: f64) -> Self {
        let period = wavelength_um / cell_um;
        let dt_max = courant_factor / 3f64.sqrt();
        let steps_per_period = (period / dt_max).ceil() as u64;
        TimeGrid {
            dt: period / steps_per_period as f64,
            steps_per_period,
            omega: 2.0 * std::f64::consts::PI / period,
        }
    }

    /// Step in seconds.
    pub fn dt_seconds(&self, cell_um: f64) -> f64 {
        self.dt * cell_um * 1e-6 / crate::grid::SPEED_OF_LIGHT
    }
}

/// Raised-cosine turn-on envelope over `ramp` time units.
pub fn ramp_envelope(t: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 || t >= ramp {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * t / ramp).cos())
    }
}

/// Trilinear spreading of a point current onto the E sub-lattices.
/// Returns `(component, node index, weight)` with weights summing to |p_a|.
pub fn dipole_stencil(lattice: &Lattice, source: &DipoleSource) -> Vec<(Axis, usize, f64)> {
    let p = source.position_cells(lattice);
    let mut out = Vec::new();
    for comp in Axis::ALL {
        let a = comp.index();
        let pol = source.polarization[a];
        if pol == 0.0 {
            continue;
        }
        let mut q = p;
        q[a] -= 0.5;
        let base = q.map(|v| v.floor());
        let frac: [f64; 3] = std::array::from_fn(|d| q[d] - base[d]);
        for corner in 0..8 {
            let mut w = pol;
            let mut ijk = [0usize; 3];
            for d in 0..3 {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                ijk[d] = base[d] as usize + bit;
            }
            if w != 0.0 {
                out.push((comp, lattice.idx(ijk[0], ijk[1], ijk[2]), w));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FluxPoint {
    e: usize,
    h: [usize; 2],
    weight: f64,
    /// Position (cell units) of the E sample.
    pos: [f64; 3],
}

/// One of the two cross-product terms of the normal Poynting component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FluxTerm {
    e_comp: Axis,
    h_comp: Axis,
    /// +1 for E_b·H_c, −1 for E_c·H_b.
    sign: f64,
    points: Vec<FluxPoint>,
}

/// Frequency-domain fields on one flat monitor face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub normal: Axis,
    /// +1 or −1: which way through the face counts as positive flux.
    pub direction: f64,
    /// Node plane along the normal.
    pub plane: usize,
    terms: [FluxTerm; 2],
    e_sum: [Vec<Complex64>; 2],
    h_sum: [Vec<Complex64>; 2],
    samples: u64,
}

/// Per-point phasors of the in-plane fields on a monitor.
#[derive(Clone, Debug)]
pub struct PlaneSample {
    pub e_comp: Axis,
    pub h_comp: Axis,
    /// +1 for the E_b·H_c term, −1 for E_c·H_b.
    pub sign: f64,
    pub weight: f64,
    /// Position in cell units.
    pub pos: [f64; 3],
    pub e: Complex64,
    pub h: Complex64,
}

impl MonitorRecord {
    /// Face normal to `normal` at node plane `plane`, spanning the inclusive
    /// node ranges `lo..=hi` in the two tangential axes (given in cyclic
    /// order after the normal).
    pub fn new(
        lattice: &Lattice,
        normal: Axis,
        plane: usize,
        direction: f64,
        lo: [usize; 2],
        hi: [usize; 2],
    ) -> Result<Self> {
        let a = normal.index();
        let b = normal.next().index();
        let c = normal.prev().index();
        if plane == 0 || plane >= lattice.cells[a] {
            return Err(Error::validation(format!(
                "monitor plane {plane} along {normal:?} has no H samples on both sides"
            )));
        }
        let span_ok = lo[0] < hi[0]
            && lo[1] < hi[1]
            && hi[0] <= lattice.cells[b]
            && hi[1] <= lattice.cells[c];
        if !span_ok {
            return Err(Error::validation("monitor face ranges are empty or off-grid"));
        }
        let trap = |v: usize, l: usize, h: usize| if v == l || v == h { 0.5 } else { 1.0 };
        let make = |e_axis: usize, h_axis: usize, sign: f64| {
            let mut points = Vec::new();
            for vc in lo[1]..=hi[1] {
                for vb in lo[0]..=hi[0] {
                    // E along b is staggered in b, so it has one fewer sample.
                    let (in_b, in_c) = if e_axis == b {
                        (vb < hi[0], true)
                    } else {
                        (true, vc < hi[1])
                    };
                    if !(in_b && in_c) {
                        continue;
                    }
                    let w = if e_axis == b {
                        trap(vc, lo[1], hi[1])
                    } else {
                        trap(vb, lo[0], hi[0])
                    };
                    let mut ijk = [0usize; 3];
                    ijk[a] = plane;
                    ijk[b] = vb;
                    ijk[c] = vc;
                    let e = lattice.idx(ijk[0], ijk[1], ijk[2]);
                    let mut below = ijk;
                    below[a] -= 1;
                    let h0 = lattice.idx(below[0], below[1], below[2]);
                    let pos = lattice.e_position(Axis::from_index(e_axis), ijk[0], ijk[1], ijk[2]);
                    points.push(FluxPoint {
                        e,
                        h: [h0, e],
                        weight: w,
                        pos,
                    });
                }
            }
            FluxTerm {
                e_comp: Axis::from_index(e_axis),
                h_comp: Axis::from_index(h_axis),
                sign,
                points,
            }
        };
        let terms = [make(b, c, 1.0), make(c, b, -1.0)];
        let e_sum = [
            vec![Complex64::default(); terms[0].points.len()],
            vec![Complex64::default(); terms[1].points.len()],
        ];
        let h_sum = e_sum.clone();
        Ok(MonitorRecord {
            normal,
            direction,
            plane,
            terms,
            e_sum,
            h_sum,
            samples: 0,
        })
    }

    /// Add the E sample (phase `pe`) and the H sample (phase `ph`).
    fn accumulate<T: Real>(&mut self, state: &FieldState<T>, pe: Complex64, ph: Complex64) {
        for (t, term) in self.terms.iter().enumerate() {
            let ea = &state.e[term.e_comp.index()];
            let ha = &state.h[term.h_comp.index()];
            for (n, p) in term.points.iter().enumerate() {
                let e = ea[p.e].as_f64();
                let h = 0.5 * (ha[p.h[0]].as_f64() + ha[p.h[1]].as_f64());
                self.e_sum[t][n] += pe * e;
                self.h_sum[t][n] += ph * h;
            }
        }
        self.samples += 1;
    }

    fn reset(&mut self) {
        for t in 0..2 {
            self.e_sum[t].iter_mut().for_each(|v| *v = Complex64::default());
            self.h_sum[t].iter_mut().for_each(|v| *v = Complex64::default());
        }
        self.samples = 0;
    }

    fn scale(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            2.0 / self.samples as f64
        }
    }

    /// Time-averaged power through the face in the counting direction.
    pub fn flux(&self) -> f64 {
        let s = self.scale();
        let mut total = 0.0;
        for (t, term) in self.terms.iter().enumerate() {
            for (n, p) in term.points.iter().enumerate() {
                let e = self.e_sum[t][n] * s;
                let h = self.h_sum[t][n] * s;
                total += term.sign * p.weight * (e * h.conj()).re;
            }
        }
        0.5 * self.direction * total
    }

    /// The face phasors, one entry per sample.
    pub fn samples(&self) -> Vec<PlaneSample> {
        let s = self.scale();
        let mut out = Vec::new();
        for (t, term) in self.terms.iter().enumerate() {
            for (n, p) in term.points.iter().enumerate() {
                out.push(PlaneSample {
                    e_comp: term.e_comp,
                    h_comp: term.h_comp,
                    sign: term.sign,
                    weight: p.weight,
                    pos: p.pos,
                    e: self.e_sum[t][n] * s,
                    h: self.h_sum[t][n] * s,
                });
            }
        }
        out
    }
}

/// Six outward-counting faces of a closed box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub bounds: NodeBox,
    pub faces: Vec<MonitorRecord>,
}

impl BoxRecord {
    pub fn new(lattice: &Lattice, bounds: NodeBox) -> Result<Self> {
        let mut faces = Vec::with_capacity(6);
        for normal in Axis::ALL {
            let a = normal.index();
            let b = normal.next().index();
            let c = normal.prev().index();
            let lo = [bounds.lo[b], bounds.lo[c]];
            let hi = [bounds.hi[b], bounds.hi[c]];
            faces.push(MonitorRecord::new(lattice, normal, bounds.lo[a], -1.0, lo, hi)?);
            faces.push(MonitorRecord::new(lattice, normal, bounds.hi[a], 1.0, lo, hi)?);
        }
        Ok(BoxRecord { bounds, faces })
    }

    pub fn total_power(&self) -> f64 {
        self.faces.iter().map(MonitorRecord::flux).sum()
    }
}

/// A single E-component sample recorded as a phasor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub component: Axis,
    pub node: [usize; 3],
    pub value: Complex64,
}

/// Inputs of one time-domain run.
#[derive(Clone, Debug)]
pub struct RunSetup<T: Real> {
    pub lattice: Lattice,
    pub materials: MaterialGrid<T>,
    pub source: DipoleSource,
    pub plane: Option<PlaneMonitorSpec>,
    pub power_box: Option<NodeBox>,
    /// E-component probes: (component, node).
    pub probes: Vec<(Axis, [usize; 3])>,
    pub cpml: CpmlParams,
    pub courant_factor: f64,
}

impl<T: Real> RunSetup<T> {
    pub fn from_scene(scene: BuiltScene<T>, lattice: Lattice, cpml: CpmlParams, courant_factor: f64) -> Self {
        RunSetup {
            lattice,
            materials: scene.materials,
            source: scene.source,
            plane: Some(scene.plane),
            power_box: Some(scene.power_box),
            probes: Vec::new(),
            cpml,
            courant_factor,
        }
    }

    /// The same setup with every material replaced by the background.
    pub fn vacuum(&self) -> Self {
        RunSetup {
            materials: MaterialGrid::uniform(&self.lattice, self.materials.background),
            ..self.clone()
        }
    }
}

/// Quantities that must agree between a run and its normalization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub cells: [usize; 3],
    pub cell_um: f64,
    pub dt: f64,
    pub amplitude: f64,
    pub polarization: [f64; 3],
    /// Box extent in nodes along each axis.
    pub box_size: Option<[usize; 3]>,
    pub plane: Option<PlaneMonitorSpec>,
}

/// Result of [`run_to_steady_state`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub meta: RunMeta,
    pub time: TimeGrid,
    pub plane: Option<MonitorRecord>,
    pub power_box: Option<BoxRecord>,
    pub probes: Vec<ProbeRecord>,
    pub plane_flux: f64,
    pub box_power: f64,
    pub steps: u64,
    pub residual: f64,
    pub wall_s: f64,
}

/// Drive the dipole until the monitored powers stop changing.
pub fn run_to_steady_state<T: Real>(setup: &RunSetup<T>, control: &RunControl) -> Result<RunOutput> {
    control.validate()?;
    setup.cpml.validate()?;
    setup.source.validate(&setup.lattice)?;
    if setup.plane.is_none() && setup.power_box.is_none() && setup.probes.is_empty() {
        return Err(Error::validation("run has no monitors"));
    }
    let started = Instant::now();
    let lattice = &setup.lattice;
    let time = TimeGrid::new(lattice.cell_um, setup.source.wavelength_um, setup.courant_factor);
    let cpml = CpmlProfile::<T>::new(lattice, &setup.cpml, time.dt);
    let mut state = FieldState::<T>::zeros(lattice.clone());

    let mut plane = match &setup.plane {
        Some(p) => {
            let interior = lattice.interior();
            if p.k <= interior.lo[2] || p.k >= interior.hi[2] {
                return Err(Error::validation("monitor plane lies inside the PML"));
            }
            Some(MonitorRecord::new(lattice, Axis::Z, p.k, p.direction as f64, p.lo, p.hi)?)
        }
        None => None,
    };
    let mut power_box = match setup.power_box {
        Some(b) => {
            let interior = lattice.interior();
            let inside = (0..3).all(|a| b.lo[a] >= interior.lo[a] && b.hi[a] <= interior.hi[a]);
            if !inside || !b.contains(setup.source.position_cells(lattice)) {
                return Err(Error::validation(
                    "power box must enclose the dipole and stay outside the PML",
                ));
            }
            Some(BoxRecord::new(lattice, b)?)
        }
        None => None,
    };
    let mut probe_sums: Vec<Complex64> = vec![Complex64::default(); setup.probes.len()];
    let probe_idx: Vec<usize> = setup
        .probes
        .iter()
        .map(|(_, n)| lattice.idx(n[0], n[1], n[2]))
        .collect();

    let stencil = dipole_stencil(lattice, &setup.source);
    let mut injections: Vec<CurrentInjection> = stencil
        .iter()
        .map(|&(component, index, _)| CurrentInjection {
            component,
            index,
            current: 0.0,
        })
        .collect();

    let spp = time.steps_per_period;
    let ramp_steps = (control.ramp_periods * spp as f64).round() as u64;
    let ramp_t = ramp_steps as f64 * time.dt;
    let window = control.window_periods as u64 * spp;
    let amp = setup.source.amplitude;

    let mut previous: Option<(f64, f64)> = None;
    let mut residual = f64::INFINITY;
    let mut last;
    loop {
        let n = state.step;
        if n >= control.max_steps {
            return Err(Error::NotConverged { steps: n, residual });
        }
        let t_src = (n as f64 + 0.5) * time.dt;
        let wave = amp * ramp_envelope(t_src, ramp_t) * (time.omega * t_src).sin();
        for (inj, &(_, _, w)) in injections.iter_mut().zip(&stencil) {
            inj.current = wave * w;
        }
        state.step(&setup.materials, &cpml, &injections, time.dt)?;
        let n = state.step;
        if n <= ramp_steps {
            continue;
        }
        let pe = Complex64::from_polar(1.0, time.omega * n as f64 * time.dt);
        let ph = Complex64::from_polar(1.0, time.omega * (n as f64 - 0.5) * time.dt);
        if let Some(p) = plane.as_mut() {
            p.accumulate(&state, pe, ph);
        }
        if let Some(b) = power_box.as_mut() {
            for f in &mut b.faces {
                f.accumulate(&state, pe, ph);
            }
        }
        for ((sum, &idx), (comp, _)) in probe_sums.iter_mut().zip(&probe_idx).zip(&setup.probes) {
            *sum += pe * state.e[comp.index()][idx].as_f64();
        }

        if (n - ramp_steps) % window == 0 {
            state.check_finite()?;
            let pf = plane.as_ref().map_or(0.0, MonitorRecord::flux);
            let bp = power_box.as_ref().map_or(0.0, BoxRecord::total_power);
            last = (pf, bp);
            if let Some((pf0, bp0)) = previous {
                let box_change = if bp.abs() > 0.0 { (bp - bp0).abs() / bp.abs() } else { 0.0 };
                let floor = control.plane_floor * bp.abs();
                let plane_den = pf.abs().max(floor);
                let plane_change = if plane_den > 0.0 {
                    (pf - pf0).abs() / plane_den
                } else {
                    0.0
                };
                residual = box_change.max(plane_change);
                log::debug!(
                    "step {n}: plane {pf:.6e} box {bp:.6e} residual {residual:.3e}"
                );
                if residual < control.residual_tol {
                    break;
                }
            }
            previous = Some((pf, bp));
            if n + window > control.max_steps {
                return Err(Error::NotConverged {
                    steps: n,
                    residual,
                });
            }
            if let Some(p) = plane.as_mut() {
                p.reset();
            }
            if let Some(b) = power_box.as_mut() {
                b.faces.iter_mut().for_each(MonitorRecord::reset);
            }
            probe_sums.iter_mut().for_each(|v| *v = Complex64::default());
        }
    }

    let scale = 2.0 / window as f64;
    let probes = setup
        .probes
        .iter()
        .zip(probe_sums)
        .map(|(&(component, node), sum)| ProbeRecord {
            component,
            node,
            value: sum * scale,
        })
        .collect();
    let meta = RunMeta {
        cells: lattice.cells,
        cell_um: lattice.cell_um,
        dt: time.dt,
        amplitude: amp,
        polarization: setup.source.polarization,
        box_size: setup
            .power_box
            .map(|b| std::array::from_fn(|a| b.hi[a] - b.lo[a])),
        plane: setup.plane.clone(),
    };
    Ok(RunOutput {
        meta,
        time,
        plane,
        power_box,
        probes,
        plane_flux: last.0,
        box_power: last.1,
        steps: state.step,
        residual,
        wall_s: started.elapsed().as_secs_f64(),
    })
}

/// Time-averaged flux through the transmission plane.
pub fn plane_flux(run: &RunOutput) -> Result<f64> {
    run.plane
        .as_ref()
        .map(MonitorRecord::flux)
        .ok_or_else(|| Error::validation("run has no plane monitor"))
}

/// Total power leaving the closed box around the emitter.
pub fn total_radiated_power(run: &RunOutput) -> Result<f64> {
    run.power_box
        .as_ref()
        .map(BoxRecord::total_power)
        .ok_or_else(|| Error::validation("run has no power box"))
}

/// Transmission, Purcell factor and coupling efficiency of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Plane flux normalized to the vacuum emitter power.
    #[serde(rename = "T")]
    pub transmission: f64,
    /// Total emitted power normalized to the vacuum emitter power.
    #[serde(rename = "PF")]
    pub purcell: f64,
    pub eta: f64,
    pub plane_flux: f64,
    pub scene_power: f64,
    pub vacuum_power: f64,
}

/// Combine a scene run with its vacuum normalization run.
pub fn compute_power_budget(scene: &RunOutput, vacuum: &RunOutput) -> Result<PowerBudget> {
    let (a, b) = (&scene.meta, &vacuum.meta);
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
    if a.cells != b.cells
        || !close(a.cell_um, b.cell_um)
        || !close(a.dt, b.dt)
        || !close(a.amplitude, b.amplitude)
        || a.polarization != b.polarization
        || a.box_size != b.box_size
        || a.plane != b.plane
    {
        return Err(Error::validation(
            "scene and vacuum runs differ in grid, time step, amplitude or monitor geometry",
        ));
    }
    let plane = plane_flux(scene)?;
    let scene_power = total_radiated_power(scene)?;
    let vacuum_power = total_radiated_power(vacuum)?;
    if !(vacuum_power > 0.0 && scene_power > 0.0) {
        return Err(Error::Numerical(format!(
            "non-positive emitted power (scene {scene_power:e}, vacuum {vacuum_power:e})"
        )));
    }
    let eta = plane / scene_power;
    if eta > ETA_LIMIT {
        return Err(Error::Numerical(format!(
            "monitor inconsistency: plane flux exceeds emitted power (eta = {eta:.4})"
        )));
    }
    Ok(PowerBudget {
        transmission: plane / vacuum_power,
        purcell: scene_power / vacuum_power,
        eta,
        plane_flux: plane,
        scene_power,
        vacuum_power,
    })
}

/// Radiated power of a point current moment `amplitude` at `omega` in a
/// uniform medium of index `n` (solver units).
pub fn analytic_dipole_power(amplitude: f64, omega: f64, n: f64) -> f64 {
    n * omega * omega * amplitude * amplitude / (12.0 * std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn time_grid_has_whole_periods() {
        let t = TimeGrid::new(0.031, 0.62, 0.95);
        let period = 0.62 / 0.031;
        assert!((t.dt * t.steps_per_period as f64 - period).abs() < 1e-12);
        assert!(t.dt <= 0.95 / 3f64.sqrt());
    }

    #[test]
    fn ramp_is_smooth_and_saturates() {
        assert_eq!(ramp_envelope(-1.0, 10.0), 0.0);
        assert!((ramp_envelope(5.0, 10.0) - 0.5).abs() < 1e-15);
        assert_eq!(ramp_envelope(10.0, 10.0), 1.0);
        assert_eq!(ramp_envelope(3.0, 0.0), 1.0);
    }

    fn lattice() -> Lattice {
        GridSpec {
            extent_um: [1.0, 1.0, 1.0],
            cell_um: 0.05,
            pml_cells: 4,
            courant_factor: 0.95,
        }
        .lattice()
        .unwrap()
    }

    #[test]
    fn stencil_weights_sum_to_polarization() {
        let l = lattice();
        let s = DipoleSource {
            position_um: [0.512, 0.503, 0.47],
            polarization: [0.6, 0.0, 0.8],
            wavelength_um: 0.6,
            amplitude: 1.0,
        };
        let st = dipole_stencil(&l, &s);
        let sum = |ax: Axis| st.iter().filter(|e| e.0 == ax).map(|e| e.2).sum::<f64>();
        assert!((sum(Axis::X) - 0.6).abs() < 1e-12);
        assert!((sum(Axis::Z) - 0.8).abs() < 1e-12);
        assert_eq!(sum(Axis::Y), 0.0);
    }

    #[test]
    fn dipole_on_node_splits_evenly() {
        let l = lattice();
        let s = DipoleSource {
            position_um: [0.5, 0.5, 0.5],
            polarization: [1.0, 0.0, 0.0],
            wavelength_um: 0.6,
            amplitude: 1.0,
        };
        let st = dipole_stencil(&l, &s);
        assert_eq!(st.len(), 2);
        assert!(st.iter().all(|e| (e.2 - 0.5).abs() < 1e-12));
    }

    #[test]
    fn flux_of_single_plane_phasor() {
        // uniform Ex = cos(wt), Hy = cos(wt) gives S_z = 1/2 per unit area
        let l = lattice();
        let mut rec = MonitorRecord::new(&l, Axis::Z, 10, 1.0, [4, 4], [16, 16]).unwrap();
        let mut state = FieldState::<f64>::zeros(l.clone());
        let steps = 40;
        for n in 0..steps {
            let ph = 2.0 * std::f64::consts::PI * n as f64 / steps as f64;
            state.e[0].iter_mut().for_each(|v| *v = ph.cos());
            state.h[1].iter_mut().for_each(|v| *v = ph.cos());
            let p = Complex64::from_polar(1.0, ph);
            rec.accumulate(&state, p, p);
        }
        let area = 12.0 * 12.0;
        assert!((rec.flux() - 0.5 * area).abs() < 1e-9, "{}", rec.flux());
    }

    #[test]
    fn budget_rejects_mismatched_runs() {
        let meta = RunMeta {
            cells: [10, 10, 10],
            cell_um: 0.1,
            dt: 0.5,
            amplitude: 1.0,
            polarization: [1.0, 0.0, 0.0],
            box_size: Some([10, 10, 10]),
            plane: None,
        };
        let out = |meta: RunMeta| RunOutput {
            meta,
            time: TimeGrid::new(0.1, 0.6, 0.95),
            plane: None,
            power_box: None,
            probes: vec![],
            plane_flux: 0.0,
            box_power: 0.0,
            steps: 0,
            residual: 0.0,
            wall_s: 0.0,
        };
        let a = out(meta.clone());
        let mut m2 = meta;
        m2.dt = 0.4;
        let b = out(m2);
        assert!(matches!(compute_power_budget(&a, &b), Err(Error::Validation(_))));
    }
}
