//! Yee-lattice field storage, curl updates and CPML absorbing boundaries.
//!
//! All six field components live on `(nx+1)·(ny+1)·(nz+1)` node arrays with
//! x fastest and z slowest, so a z index selects one contiguous plane.
//! Component positions in cell units:
//!
//! | component | x     | y     | z     |
//! |-----------|-------|-------|-------|
//! | Ex        | i+½   | j     | k     |
//! | Ey        | i     | j+½   | k     |
//! | Ez        | i     | j     | k+½   |
//! | Hx        | i     | j+½   | k+½   |
//! | Hy        | i+½   | j     | k+½   |
//! | Hz        | i+½   | j+½   | k     |
//!
//! Internally the solver works in units where the cell size, the vacuum light
//! speed, ε₀ and μ₀ are all one. The outer boundary behind the CPML is a
//! perfect electric conductor.

use std::fmt::Debug;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum light speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floating-point type used for field storage.
pub trait Real: Float + Send + Sync + Debug + Default + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Cartesian axis; also names the field component along that axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i % 3]
    }

    /// Next axis in cyclic order (x→y→z→x).
    pub fn next(self) -> Axis {
        Axis::from_index(self.index() + 1)
    }

    pub fn prev(self) -> Axis {
        Axis::from_index(self.index() + 2)
    }
}

/// Physical description of the uniform simulation lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Domain size along x, y, z in μm, PML included.
    pub extent_um: [f64; 3],
    /// Uniform cell size Δ in μm.
    pub cell_um: f64,
    /// CPML thickness in cells on every face.
    pub pml_cells: usize,
    /// Courant factor S; the time step is S·Δ/(c·√3).
    pub courant_factor: f64,
}

const EXTENT_TOLERANCE: f64 = 1e-6;

impl GridSpec {
    /// Number of cells along each axis, validating every invariant.
    pub fn cells(&self) -> Result<[usize; 3]> {
        if !(self.cell_um.is_finite() && self.cell_um > 0.0) {
            return Err(Error::validation(format!(
                "cell size must be positive, got {}",
                self.cell_um
            )));
        }
        if !(self.courant_factor > 0.0 && self.courant_factor <= 0.99) {
            return Err(Error::validation(format!(
                "courant factor must lie in (0, 0.99], got {}",
                self.courant_factor
            )));
        }
        let mut cells = [0usize; 3];
        for (a, &ext) in self.extent_um.iter().enumerate() {
            let ratio = ext / self.cell_um;
            let n = ratio.round();
            if !(ext > 0.0) || n < 1.0 || (ratio - n).abs() > EXTENT_TOLERANCE * n.max(1.0) {
                return Err(Error::validation(format!(
                    "extent {ext} um along {:?} is not an integer multiple of the cell size {} um",
                    Axis::from_index(a),
                    self.cell_um
                )));
            }
            cells[a] = n as usize;
            if 2 * self.pml_cells >= cells[a] {
                return Err(Error::validation(format!(
                    "PML of {} cells per face leaves no interior along {:?} ({} cells)",
                    self.pml_cells,
                    Axis::from_index(a),
                    cells[a]
                )));
            }
        }
        Ok(cells)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let cells = self.cells()?;
        Ok(Lattice {
            cells,
            cell_um: self.cell_um,
            pml: self.pml_cells,
        })
    }

    /// Courant-limited time step in seconds.
    pub fn courant_dt(&self) -> f64 {
        courant_dt(self)
    }
}

/// Largest stable time step for a uniform 3D grid, in seconds.
pub fn courant_dt(spec: &GridSpec) -> f64 {
    spec.courant_factor * spec.cell_um * 1e-6 / (SPEED_OF_LIGHT * 3f64.sqrt())
}

/// Validated lattice dimensions and index arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub cells: [usize; 3],
    pub cell_um: f64,
    pub pml: usize,
}

impl Lattice {
    /// Node counts per axis (`cells + 1`).
    pub fn nodes(&self) -> [usize; 3] {
        [self.cells[0] + 1, self.cells[1] + 1, self.cells[2] + 1]
    }

    pub fn len(&self) -> usize {
        let n = self.nodes();
        n[0] * n[1] * n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Memory strides for x, y, z.
    pub fn strides(&self) -> [usize; 3] {
        let n = self.nodes();
        [1, n[0], n[0] * n[1]]
    }

    pub fn plane_len(&self) -> usize {
        let n = self.nodes();
        n[0] * n[1]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes();
        (k * n[1] + j) * n[0] + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.nodes();
        (idx % n[0], (idx / n[0]) % n[1], idx / (n[0] * n[1]))
    }

    /// Position of an E-component node in cell units.
    pub fn e_position(&self, comp: Axis, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut p = [i as f64, j as f64, k as f64];
        p[comp.index()] += 0.5;
        p
    }

    /// Position of an H-component node in cell units.
    pub fn h_position(&self, comp: Axis, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        p[comp.index()] -= 0.5;
        p
    }

    /// Node index range `[lo, hi]` (inclusive) of the region outside the PML.
    pub fn interior(&self) -> NodeBox {
        let p = self.pml;
        NodeBox {
            lo: [p, p, p],
            hi: [self.cells[0] - p, self.cells[1] - p, self.cells[2] - p],
        }
    }

    /// Physical extent in μm.
    pub fn extent_um(&self) -> [f64; 3] {
        [
            self.cells[0] as f64 * self.cell_um,
            self.cells[1] as f64 * self.cell_um,
            self.cells[2] as f64 * self.cell_um,
        ]
    }
}

/// Inclusive box of integer node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl NodeBox {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] as f64 && p[a] <= self.hi[a] as f64)
    }
}

/// Convolutional PML grading parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpmlParams {
    /// Polynomial grading order m.
    pub order: f64,
    /// σ_max = sigma_scale·(m+1)/(Δ·η₀).
    pub sigma_scale: f64,
    pub kappa_max: f64,
    /// Maximum complex-frequency shift, in units of c/Δ.
    pub alpha_max: f64,
}

impl Default for CpmlParams {
    fn default() -> Self {
        CpmlParams {
            order: 4.0,
            sigma_scale: 0.8,
            kappa_max: 5.0,
            alpha_max: 0.05,
        }
    }
}

impl CpmlParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.order, self.sigma_scale, self.kappa_max, self.alpha_max]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !all_finite {
            return Err(Error::validation("CPML parameters must be finite and non-negative"));
        }
        if self.kappa_max < 1.0 {
            return Err(Error::validation(format!(
                "CPML kappa_max must be >= 1, got {}",
                self.kappa_max
            )));
        }
        Ok(())
    }
}

/// Per-axis CPML coefficient tables for one time step size.
#[derive(Clone, Debug)]
struct AxisProfile<T> {
    /// 1/κ at integer node positions (E-type derivatives), length n+1.
    kinv_e: Vec<T>,
    /// 1/κ at half positions s+½ (H-type derivatives), length n+1.
    kinv_h: Vec<T>,
    /// Recursive-convolution coefficients per slab slot (2p entries).
    b_e: Vec<T>,
    c_e: Vec<T>,
    b_h: Vec<T>,
    c_h: Vec<T>,
}

/// CPML coefficient tables for all three axes.
#[derive(Clone, Debug)]
pub struct CpmlProfile<T: Real> {
    axes: [AxisProfile<T>; 3],
    pml: usize,
}

impl<T: Real> CpmlProfile<T> {
    /// `dt` is in solver units (cell / c).
    pub fn new(lattice: &Lattice, params: &CpmlParams, dt: f64) -> Self {
        let p = lattice.pml;
        let sigma_max = params.sigma_scale * (params.order + 1.0);
        let grade = |rho: f64| -> (f64, f64, f64) {
            if rho <= 0.0 {
                return (0.0, 1.0, 0.0);
            }
            let g = rho.powf(params.order);
            (
                sigma_max * g,
                1.0 + (params.kappa_max - 1.0) * g,
                params.alpha_max * (1.0 - rho),
            )
        };
        let coeffs = |rho: f64| -> (f64, f64, f64) {
            let (sigma, kappa, alpha) = grade(rho);
            let b = (-(sigma / kappa + alpha) * dt).exp();
            let denom = sigma * kappa + kappa * kappa * alpha;
            let c = if sigma > 0.0 && denom > 0.0 {
                sigma * (b - 1.0) / denom
            } else {
                0.0
            };
            (1.0 / kappa, b, c)
        };
        let axes = std::array::from_fn(|a| {
            let n = lattice.cells[a];
            let rho_at = |pos: f64| -> f64 {
                if p == 0 {
                    return 0.0;
                }
                let lo = p as f64 - pos;
                let hi = pos - (n - p) as f64;
                (lo.max(hi) / p as f64).clamp(0.0, 1.0)
            };
            let kinv_e = (0..=n).map(|s| T::of(coeffs(rho_at(s as f64)).0)).collect();
            let kinv_h = (0..=n)
                .map(|s| T::of(coeffs(rho_at(s as f64 + 0.5)).0))
                .collect();
            let mut b_e = vec![T::one(); 2 * p];
            let mut c_e = vec![T::zero(); 2 * p];
            let mut b_h = vec![T::one(); 2 * p];
            let mut c_h = vec![T::zero(); 2 * p];
            for t in 0..2 * p {
                let (_, b, c) = coeffs(rho_at(slab_e_pos(t, p, n) as f64));
                b_e[t] = T::of(b);
                c_e[t] = T::of(c);
                let (_, b, c) = coeffs(rho_at(slab_h_pos(t, p, n) as f64 + 0.5));
                b_h[t] = T::of(b);
                c_h[t] = T::of(c);
            }
            AxisProfile {
                kinv_e,
                kinv_h,
                b_e,
                c_e,
                b_h,
                c_h,
            }
        });
        CpmlProfile { axes, pml: p }
    }
}

/// Integer node position of E-type slab slot `t` (low slab 0..p, high slab n-p+1..=n).
#[inline]
fn slab_e_pos(t: usize, p: usize, n: usize) -> usize {
    if t < p {
        t
    } else {
        n - p + 1 + (t - p)
    }
}

/// Half-node base position of H-type slab slot `t` (position is s+½).
#[inline]
fn slab_h_pos(t: usize, p: usize, n: usize) -> usize {
    if t < p {
        t
    } else {
        n - p + (t - p)
    }
}

/// Relative permittivity sampled at each E-component node.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialGrid<T: Real> {
    pub eps: [Vec<T>; 3],
    inv_eps: [Vec<T>; 3],
    pub background: f64,
}

impl<T: Real> MaterialGrid<T> {
    pub fn uniform(lattice: &Lattice, eps_r: f64) -> Self {
        let n = lattice.len();
        let eps: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::of(eps_r); n]);
        Self::from_eps(eps, eps_r)
    }

    /// Fill every E node with `f(component, position_in_cells)`.
    pub fn from_fn<F>(lattice: &Lattice, background: f64, f: F) -> Self
    where
        F: Fn(Axis, [f64; 3]) -> f64 + Sync,
    {
        let nodes = lattice.nodes();
        let eps: [Vec<T>; 3] = std::array::from_fn(|a| {
            let comp = Axis::from_index(a);
            let mut v = vec![T::of(background); lattice.len()];
            v.par_chunks_mut(lattice.plane_len())
                .enumerate()
                .for_each(|(k, plane)| {
                    for j in 0..nodes[1] {
                        for i in 0..nodes[0] {
                            let pos = lattice.e_position(comp, i, j, k);
                            plane[j * nodes[0] + i] = T::of(f(comp, pos));
                        }
                    }
                });
            v
        });
        Self::from_eps(eps, background)
    }

    pub fn from_eps(eps: [Vec<T>; 3], background: f64) -> Self {
        let inv_eps = std::array::from_fn(|a| eps[a].iter().map(|&e| T::one() / e).collect());
        MaterialGrid {
            eps,
            inv_eps,
            background,
        }
    }

    /// Checks `1 ≤ ε_r ≤ max_eps` everywhere.
    pub fn validate(&self, lattice: &Lattice, max_eps: f64) -> Result<()> {
        for (a, arr) in self.eps.iter().enumerate() {
            if arr.len() != lattice.len() {
                return Err(Error::validation(format!(
                    "material array {a} has {} entries, lattice needs {}",
                    arr.len(),
                    lattice.len()
                )));
            }
            let slack = 1e-6;
            if let Some((idx, e)) = arr
                .iter()
                .enumerate()
                .find(|(_, e)| !(e.as_f64() >= 1.0 - slack && e.as_f64() <= max_eps + slack))
            {
                return Err(Error::validation(format!(
                    "permittivity {} out of [1, {max_eps}] at component {a}, node {:?}",
                    e.as_f64(),
                    lattice.coords(idx)
                )));
            }
        }
        Ok(())
    }
}

/// CPML auxiliary accumulators for one axis. `*_prev`/`*_next` belong to the
/// components before and after the axis in cyclic order. Layout is the node
/// lattice with the slab axis compressed to its 2p slab slots.
#[derive(Clone, Debug)]
struct PsiSlab<T> {
    e_prev: Vec<T>,
    e_next: Vec<T>,
    h_prev: Vec<T>,
    h_next: Vec<T>,
}

/// A current-density sample injected into one E node for the coming step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentInjection {
    pub component: Axis,
    pub index: usize,
    /// Current density in solver units (already multiplied by the waveform).
    pub current: f64,
}

/// Staggered E/H arrays plus CPML accumulators for one run.
#[derive(Clone, Debug)]
pub struct FieldState<T: Real> {
    pub lattice: Lattice,
    pub e: [Vec<T>; 3],
    pub h: [Vec<T>; 3],
    /// Number of completed full steps.
    pub step: u64,
    psi: [PsiSlab<T>; 3],
    /// Precomputed slab segments: [axis][0 = E_prev, 1 = E_next, 2 = H_prev, 3 = H_next].
    segments: [[Vec<SlabSegment>; 4]; 3],
    /// Check for non-finite values every this many steps (0 disables).
    pub nan_check_interval: u64,
}

/// Allocate zeroed fields for `spec`, checking the material arrays match.
pub fn make_grid<T: Real>(spec: &GridSpec, materials: &MaterialGrid<T>) -> Result<FieldState<T>> {
    let lattice = spec.lattice()?;
    for arr in &materials.eps {
        if arr.len() != lattice.len() {
            return Err(Error::validation(format!(
                "material grid has {} nodes per component, lattice needs {}",
                arr.len(),
                lattice.len()
            )));
        }
    }
    Ok(FieldState::zeros(lattice))
}

impl<T: Real> FieldState<T> {
    pub fn zeros(lattice: Lattice) -> Self {
        let n = lattice.len();
        let nodes = lattice.nodes();
        let p = lattice.pml;
        let psi = std::array::from_fn(|a| {
            let other: usize = (0..3).filter(|&b| b != a).map(|b| nodes[b]).product();
            let len = 2 * p * other;
            PsiSlab {
                e_prev: vec![T::zero(); len],
                e_next: vec![T::zero(); len],
                h_prev: vec![T::zero(); len],
                h_next: vec![T::zero(); len],
            }
        });
        let cells = lattice.cells;
        let strides = lattice.strides();
        let segments = std::array::from_fn(|a| {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            let seg = |ranges, pos| slab_segments(a, p, cells, ranges, strides, pos).collect();
            [
                seg(e_ranges(c, cells), slab_e_pos as fn(usize, usize, usize) -> usize),
                seg(e_ranges(b, cells), slab_e_pos),
                seg(h_ranges(c, cells), slab_h_pos),
                seg(h_ranges(b, cells), slab_h_pos),
            ]
        });
        FieldState {
            segments,
            e: std::array::from_fn(|_| vec![T::zero(); n]),
            h: std::array::from_fn(|_| vec![T::zero(); n]),
            step: 0,
            psi,
            lattice,
            nan_check_interval: 16,
        }
    }

    /// One full leapfrog step: H to n+½, then E to n+1 with the given
    /// current injections evaluated at n+½.
    pub fn step(
        &mut self,
        materials: &MaterialGrid<T>,
        cpml: &CpmlProfile<T>,
        sources: &[CurrentInjection],
        dt: f64,
    ) -> Result<()> {
        self.advance_h(cpml, dt);
        self.advance_e(materials, cpml, sources, dt)
    }

    /// Half of a leapfrog step: advance H by `dt` from the current E.
    pub fn advance_h(&mut self, cpml: &CpmlProfile<T>, dt: f64) {
        let [nx, ny, nz] = self.lattice.cells;
        let nx1 = nx + 1;
        let ps = self.lattice.plane_len();
        let dt = T::of(dt);
        let kxh = &cpml.axes[0].kinv_h;
        let kyh = &cpml.axes[1].kinv_h;
        let kzh = &cpml.axes[2].kinv_h;
        let [ex, ey, ez] = &self.e;
        let [hx, hy, hz] = &mut self.h;

        hx.par_chunks_mut(ps)
            .zip(hy.par_chunks_mut(ps))
            .zip(hz.par_chunks_mut(ps))
            .enumerate()
            .for_each(|(k, ((hx, hy), hz))| {
                let base = k * ps;
                if k < nz {
                    let up = base + ps;
                    let kz = kzh[k];
                    for j in 0..ny {
                        let r = j * nx1;
                        let ky = kyh[j];
                        let out = &mut hx[r..r + nx1];
                        let ez0 = &ez[base + r..base + r + nx1];
                        let ez1 = &ez[base + r + nx1..base + r + 2 * nx1];
                        let ey0 = &ey[base + r..base + r + nx1];
                        let ey1 = &ey[up + r..up + r + nx1];
                        for i in 0..nx1 {
                            out[i] = out[i] - dt * ((ez1[i] - ez0[i]) * ky - (ey1[i] - ey0[i]) * kz);
                        }
                    }
                    for j in 0..=ny {
                        let r = j * nx1;
                        let out = &mut hy[r..r + nx];
                        let ex0 = &ex[base + r..base + r + nx];
                        let ex1 = &ex[up + r..up + r + nx];
                        let ez0 = &ez[base + r..base + r + nx];
                        let ez1 = &ez[base + r + 1..base + r + 1 + nx];
                        let kx = &kxh[..nx];
                        for i in 0..nx {
                            out[i] = out[i] - dt * ((ex1[i] - ex0[i]) * kz - (ez1[i] - ez0[i]) * kx[i]);
                        }
                    }
                }
                for j in 0..ny {
                    let r = j * nx1;
                    let ky = kyh[j];
                    let out = &mut hz[r..r + nx];
                    let ey0 = &ey[base + r..base + r + nx];
                    let ey1 = &ey[base + r + 1..base + r + 1 + nx];
                    let ex0 = &ex[base + r..base + r + nx];
                    let ex1 = &ex[base + r + nx1..base + r + nx1 + nx];
                    let kx = &kxh[..nx];
                    for i in 0..nx {
                        out[i] = out[i] - dt * ((ey1[i] - ey0[i]) * kx[i] - (ex1[i] - ex0[i]) * ky);
                    }
                }
            });

        self.psi_h_pass(cpml, dt);
    }

    /// Second half of a leapfrog step: advance E by `dt` from the current H
    /// and inject soft current sources.
    pub fn advance_e(
        &mut self,
        materials: &MaterialGrid<T>,
        cpml: &CpmlProfile<T>,
        sources: &[CurrentInjection],
        dt: f64,
    ) -> Result<()> {
        let [nx, ny, nz] = self.lattice.cells;
        let nx1 = nx + 1;
        let ps = self.lattice.plane_len();
        let dtt = T::of(dt);
        let kxe = &cpml.axes[0].kinv_e;
        let kye = &cpml.axes[1].kinv_e;
        let kze = &cpml.axes[2].kinv_e;
        let [cx, cy, cz] = &materials.inv_eps;
        let [hx, hy, hz] = &self.h;
        let [ex, ey, ez] = &mut self.e;

        ex.par_chunks_mut(ps)
            .zip(ey.par_chunks_mut(ps))
            .zip(ez.par_chunks_mut(ps))
            .enumerate()
            .for_each(|(k, ((ex, ey), ez))| {
                let base = k * ps;
                if k >= 1 && k < nz {
                    let down = base - ps;
                    let kz = kze[k];
                    for j in 1..ny {
                        let r = j * nx1;
                        let ky = kye[j];
                        let out = &mut ex[r..r + nx];
                        let c = &cx[base + r..base + r + nx];
                        let hz1 = &hz[base + r..base + r + nx];
                        let hz0 = &hz[base + r - nx1..base + r - nx1 + nx];
                        let hy1 = &hy[base + r..base + r + nx];
                        let hy0 = &hy[down + r..down + r + nx];
                        for i in 0..nx {
                            out[i] = out[i]
                                + dtt * c[i] * ((hz1[i] - hz0[i]) * ky - (hy1[i] - hy0[i]) * kz);
                        }
                    }
                    for j in 0..ny {
                        let r = j * nx1;
                        let m = nx - 1;
                        let out = &mut ey[r + 1..r + nx];
                        let c = &cy[base + r + 1..base + r + nx];
                        let hx1 = &hx[base + r + 1..base + r + nx];
                        let hx0 = &hx[down + r + 1..down + r + nx];
                        let hz1 = &hz[base + r + 1..base + r + nx];
                        let hz0 = &hz[base + r..base + r + m];
                        let kx = &kxe[1..nx];
                        for i in 0..m {
                            out[i] = out[i]
                                + dtt * c[i] * ((hx1[i] - hx0[i]) * kz - (hz1[i] - hz0[i]) * kx[i]);
                        }
                    }
                }
                if k < nz {
                    for j in 1..ny {
                        let r = j * nx1;
                        let m = nx - 1;
                        let ky = kye[j];
                        let out = &mut ez[r + 1..r + nx];
                        let c = &cz[base + r + 1..base + r + nx];
                        let hy1 = &hy[base + r + 1..base + r + nx];
                        let hy0 = &hy[base + r..base + r + m];
                        let hx1 = &hx[base + r + 1..base + r + nx];
                        let hx0 = &hx[base + r - nx1 + 1..base + r - nx1 + nx];
                        let kx = &kxe[1..nx];
                        for i in 0..m {
                            out[i] = out[i]
                                + dtt * c[i] * ((hy1[i] - hy0[i]) * kx[i] - (hx1[i] - hx0[i]) * ky);
                        }
                    }
                }
            });

        self.psi_e_pass(materials, cpml, dtt);

        for src in sources {
            let a = src.component.index();
            let idx = src.index;
            let coef = dtt * materials.inv_eps[a][idx];
            self.e[a][idx] = self.e[a][idx] - coef * T::of(src.current);
        }

        self.step += 1;
        if self.nan_check_interval > 0 && self.step % self.nan_check_interval == 0 {
            self.check_finite()?;
        }
        Ok(())
    }

    fn psi_e_pass(&mut self, materials: &MaterialGrid<T>, cpml: &CpmlProfile<T>, dt: T) {
        let p = cpml.pml;
        if p == 0 {
            return;
        }
        let strides = self.lattice.strides();
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            let prof = &cpml.axes[a];
            let sa = strides[a];
            let psi = &mut self.psi[a];
            // E_c gains +∂a H_b; E_b gains −∂a H_c.
            for (comp, field, psi_arr, sign, segs) in [
                (c, b, &mut psi.e_prev, T::one(), &self.segments[a][0]),
                (b, c, &mut psi.e_next, -T::one(), &self.segments[a][1]),
            ] {
                let h = &self.h[field];
                let e = &mut self.e[comp];
                let inv_eps = &materials.inv_eps[comp];
                for seg in segs {
                    let n = seg.len;
                    let out = &mut e[seg.idx..seg.idx + n];
                    let ps = &mut psi_arr[seg.pidx..seg.pidx + n];
                    let h1 = &h[seg.idx..seg.idx + n];
                    let h0 = &h[seg.idx - sa..seg.idx - sa + n];
                    let ie = &inv_eps[seg.idx..seg.idx + n];
                    if seg.slot_varies {
                        let bb = &prof.b_e[seg.slot..seg.slot + n];
                        let cc = &prof.c_e[seg.slot..seg.slot + n];
                        for m in 0..n {
                            let v = bb[m] * ps[m] + cc[m] * (h1[m] - h0[m]);
                            ps[m] = v;
                            out[m] = out[m] + sign * dt * ie[m] * v;
                        }
                    } else {
                        let (bb, cc) = (prof.b_e[seg.slot], prof.c_e[seg.slot]);
                        for m in 0..n {
                            let v = bb * ps[m] + cc * (h1[m] - h0[m]);
                            ps[m] = v;
                            out[m] = out[m] + sign * dt * ie[m] * v;
                        }
                    }
                }
            }
        }
    }

    fn psi_h_pass(&mut self, cpml: &CpmlProfile<T>, dt: T) {
        let p = cpml.pml;
        if p == 0 {
            return;
        }
        let strides = self.lattice.strides();
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            let prof = &cpml.axes[a];
            let sa = strides[a];
            let psi = &mut self.psi[a];
            // H_c gains −∂a E_b; H_b gains +∂a E_c.
            for (comp, field, psi_arr, sign, segs) in [
                (c, b, &mut psi.h_prev, -T::one(), &self.segments[a][2]),
                (b, c, &mut psi.h_next, T::one(), &self.segments[a][3]),
            ] {
                let e = &self.e[field];
                let h = &mut self.h[comp];
                for seg in segs {
                    let n = seg.len;
                    let out = &mut h[seg.idx..seg.idx + n];
                    let ps = &mut psi_arr[seg.pidx..seg.pidx + n];
                    let e1 = &e[seg.idx + sa..seg.idx + sa + n];
                    let e0 = &e[seg.idx..seg.idx + n];
                    if seg.slot_varies {
                        let bb = &prof.b_h[seg.slot..seg.slot + n];
                        let cc = &prof.c_h[seg.slot..seg.slot + n];
                        for m in 0..n {
                            let v = bb[m] * ps[m] + cc[m] * (e1[m] - e0[m]);
                            ps[m] = v;
                            out[m] = out[m] + sign * dt * v;
                        }
                    } else {
                        let (bb, cc) = (prof.b_h[seg.slot], prof.c_h[seg.slot]);
                        for m in 0..n {
                            let v = bb * ps[m] + cc * (e1[m] - e0[m]);
                            ps[m] = v;
                            out[m] = out[m] + sign * dt * v;
                        }
                    }
                }
            }
        }
    }

    /// Scan for the first non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        const NAMES: [&str; 6] = ["Ex", "Ey", "Ez", "Hx", "Hy", "Hz"];
        for (n, arr) in self.e.iter().chain(self.h.iter()).enumerate() {
            if let Some(idx) = arr.iter().position(|v| !v.is_finite()) {
                let (i, j, k) = self.lattice.coords(idx);
                return Err(Error::Instability {
                    step: self.step,
                    component: NAMES[n],
                    i,
                    j,
                    k,
                });
            }
        }
        Ok(())
    }

    /// Electromagnetic energy ½Σ(ε|E|² + |H|²)·Δ³ of all nodes inside `region`
    /// (node positions compared in cell units).
    pub fn energy(&self, materials: &MaterialGrid<T>, region: NodeBox) -> f64 {
        self.energy_parts(materials, region, None)
    }

    /// Energy using the product H^{n-½}·H^{n+½}, which is exactly conserved
    /// by the leapfrog scheme in a closed lossless region.
    pub fn energy_with_previous_h(
        &self,
        materials: &MaterialGrid<T>,
        region: NodeBox,
        h_prev: &[Vec<T>; 3],
    ) -> f64 {
        self.energy_parts(materials, region, Some(h_prev))
    }

    fn energy_parts(
        &self,
        materials: &MaterialGrid<T>,
        region: NodeBox,
        h_prev: Option<&[Vec<T>; 3]>,
    ) -> f64 {
        let nodes = self.lattice.nodes();
        let mut total = 0.0;
        for a in 0..3 {
            let comp = Axis::from_index(a);
            let er = e_ranges(a, self.lattice.cells);
            let hr = h_ranges(a, self.lattice.cells);
            for k in 0..nodes[2] {
                for j in 0..nodes[1] {
                    for i in 0..nodes[0] {
                        let idx = self.lattice.idx(i, j, k);
                        let c = [i, j, k];
                        let in_e = (0..3).all(|d| er[d].contains(&c[d]));
                        if in_e && region.contains(self.lattice.e_position(comp, i, j, k)) {
                            let e = self.e[a][idx].as_f64();
                            total += 0.5 * materials.eps[a][idx].as_f64() * e * e;
                        }
                        let in_h = (0..3).all(|d| hr[d].contains(&c[d]));
                        if in_h && region.contains(self.lattice.h_position(comp, i, j, k)) {
                            let h = self.h[a][idx].as_f64();
                            let hp = h_prev.map_or(h, |p| p[a][idx].as_f64());
                            total += 0.5 * h * hp;
                        }
                    }
                }
            }
        }
        total
    }

    /// Largest |∇·H| over cell centres inside `region`, and the largest |H|
    /// component anywhere (for relative comparisons).
    pub fn max_div_h(&self, region: NodeBox) -> (f64, f64) {
        let l = &self.lattice;
        let [hx, hy, hz] = &self.h;
        let mut max_div = 0.0f64;
        for k in region.lo[2]..region.hi[2] {
            for j in region.lo[1]..region.hi[1] {
                for i in region.lo[0]..region.hi[0] {
                    let d = (hx[l.idx(i + 1, j, k)] - hx[l.idx(i, j, k)]).as_f64()
                        + (hy[l.idx(i, j + 1, k)] - hy[l.idx(i, j, k)]).as_f64()
                        + (hz[l.idx(i, j, k + 1)] - hz[l.idx(i, j, k)]).as_f64();
                    max_div = max_div.max(d.abs());
                }
            }
        }
        let max_h = self
            .h
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        (max_div, max_h)
    }
}

/// Convenience wrapper matching the free-function form of the update.
pub fn step_fields<T: Real>(
    state: &mut FieldState<T>,
    materials: &MaterialGrid<T>,
    cpml: &CpmlProfile<T>,
    sources: &[CurrentInjection],
    dt: f64,
) -> Result<()> {
    state.step(materials, cpml, sources, dt)
}

type Span = std::ops::Range<usize>;

/// Index ranges (per axis) of the E_comp nodes that are actually updated.
fn e_ranges(comp: usize, cells: [usize; 3]) -> [Span; 3] {
    std::array::from_fn(|d| if d == comp { 0..cells[d] } else { 1..cells[d] })
}

/// Index ranges (per axis) of the H_comp nodes that are actually updated.
fn h_ranges(comp: usize, cells: [usize; 3]) -> [Span; 3] {
    std::array::from_fn(|d| if d == comp { 0..cells[d] + 1 } else { 0..cells[d] })
}

/// Contiguous run of nodes inside a CPML slab.
#[derive(Clone, Copy, Debug)]
struct SlabSegment {
    /// First field index.
    idx: usize,
    /// First index into the compressed ψ array.
    pidx: usize,
    len: usize,
    /// Slab slot of the first node.
    slot: usize,
    /// Whether the slot advances along the segment (x-normal slabs).
    slot_varies: bool,
}

/// Split the nodes of one component inside the two CPML slabs normal to
/// `axis` into x-contiguous segments, in memory order.
fn slab_segments(
    axis: usize,
    p: usize,
    cells: [usize; 3],
    ranges: [Span; 3],
    strides: [usize; 3],
    slab_pos: fn(usize, usize, usize) -> usize,
) -> impl Iterator<Item = SlabSegment> {
    let nodes = [cells[0] + 1, cells[1] + 1, cells[2] + 1];
    let mut pdims = nodes;
    pdims[axis] = 2 * p;
    // (lattice coordinate, compressed coordinate) per axis.
    let lists: [Vec<(usize, usize)>; 3] = std::array::from_fn(|d| {
        if d == axis {
            (0..2 * p)
                .map(|t| (slab_pos(t, p, cells[d]), t))
                .filter(|(s, _)| ranges[d].contains(s))
                .collect()
        } else {
            ranges[d].clone().map(|s| (s, s)).collect()
        }
    });
    // Runs of consecutive x entries.
    let mut x_runs: Vec<(usize, usize, usize)> = Vec::new();
    for &(x, px) in &lists[0] {
        match x_runs.last_mut() {
            Some((x0, px0, len)) if *x0 + *len == x && *px0 + *len == px => *len += 1,
            _ => x_runs.push((x, px, 1)),
        }
    }
    let [_, ys, zs] = lists;
    zs.into_iter().flat_map(move |(z, pz)| {
        let ys = ys.clone();
        let x_runs = x_runs.clone();
        ys.into_iter().flat_map(move |(y, py)| {
            let row = z * strides[2] + y * strides[1];
            let prow = (pz * pdims[1] + py) * pdims[0];
            let x_runs = x_runs.clone();
            x_runs.into_iter().map(move |(x, px, len)| SlabSegment {
                idx: row + x,
                pidx: prow + px,
                len,
                slot: match axis {
                    0 => px,
                    1 => py,
                    _ => pz,
                },
                slot_varies: axis == 0,
            })
        })
    })
}
