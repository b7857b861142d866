//! Guided modes of a step-index cylinder (core n₁, infinite cladding n₂).
//!
//! Fields follow exp(i(βz − ωt)) with ε₀ = μ₀ = c = 1 and lengths in μm.
//! Longitudinal fields are A·J_l(hr)·cos(lφ) and B·J_l(hr)·sin(lφ) in the core
//! and matching K_l(qr) terms outside.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_and_prime, bessel_j_prime, bessel_k_log_derivative, bessel_k_scaled};
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::solver::MonitorRecord;

/// Minimum number of effective-index samples in the root scan.
pub const SCAN_SAMPLES: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeFamily {
    HE,
    EH,
    TE,
    TM,
}

impl std::fmt::Display for ModeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModeFamily::HE => "HE",
            ModeFamily::EH => "EH",
            ModeFamily::TE => "TE",
            ModeFamily::TM => "TM",
        };
        f.write_str(s)
    }
}

/// Step-index fiber parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub radius_um: f64,
    pub wavelength_um: f64,
    pub n1: f64,
    pub n2: f64,
}

impl Fiber {
    pub fn new(radius_um: f64, wavelength_um: f64, n1: f64, n2: f64) -> Result<Self> {
        if !(n1 > n2 && n2 >= 1.0) {
            return Err(Error::validation(format!("need n1 > n2 >= 1, got n1 = {n1}, n2 = {n2}")));
        }
        if !(radius_um > 0.0 && wavelength_um > 0.0) {
            return Err(Error::validation("radius and wavelength must be positive"));
        }
        Ok(Fiber {
            radius_um,
            wavelength_um,
            n1,
            n2,
        })
    }

    /// Fiber with the given V-number at λ = 1 μm.
    pub fn with_v(v: f64, n1: f64, n2: f64) -> Result<Self> {
        let k0 = 2.0 * std::f64::consts::PI;
        let radius = v / (k0 * (n1 * n1 - n2 * n2).sqrt());
        Fiber::new(radius, 1.0, n1, n2)
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength_um
    }

    pub fn v(&self) -> f64 {
        self.k0() * self.radius_um * (self.n1 * self.n1 - self.n2 * self.n2).sqrt()
    }

    /// (u, w) = (h·a, q·a) for an effective index.
    fn uw(&self, n_eff: f64) -> (f64, f64) {
        let ka = self.k0() * self.radius_um;
        let u = ka * (self.n1 * self.n1 - n_eff * n_eff).max(0.0).sqrt();
        let w = ka * (n_eff * n_eff - self.n2 * self.n2).max(0.0).sqrt();
        (u, w)
    }
}

/// V = (2πa/λ)·√(n₁² − n₂²).
pub fn v_number(radius_um: f64, wavelength_um: f64, n1: f64, n2: f64) -> Result<f64> {
    if !(n1 > n2 && n2 >= 1.0) {
        return Err(Error::validation(format!("need n1 > n2 >= 1, got n1 = {n1}, n2 = {n2}")));
    }
    if !(radius_um >= 0.0 && wavelength_um > 0.0) {
        return Err(Error::validation("radius must be non-negative and wavelength positive"));
    }
    Ok(2.0 * std::f64::consts::PI * radius_um / wavelength_um * (n1 * n1 - n2 * n2).sqrt())
}

/// One guided mode with amplitudes normalized to unit axial power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberMode {
    pub family: ModeFamily,
    pub l: u32,
    pub m: u32,
    /// Propagation constant, rad/μm.
    pub beta: f64,
    pub n_eff: f64,
    /// Core transverse wavenumber, rad/μm.
    pub h: f64,
    /// Cladding decay constant, rad/μm.
    pub q: f64,
    pub fiber: Fiber,
    /// Core coefficient of E_z.
    pub a_coef: f64,
    /// Core coefficient of H_z.
    pub b_coef: f64,
}

impl FiberMode {
    pub fn label(&self) -> String {
        format!("{}{}{}", self.family, self.l, self.m)
    }

    /// Number of independent polarizations (2 for l ≥ 1).
    pub fn degeneracy(&self) -> u32 {
        if self.l == 0 {
            1
        } else {
            2
        }
    }

    /// Residual of the characteristic equation, in the pole-free form used
    /// for root finding.
    pub fn residual(&self) -> f64 {
        characteristic(&self.fiber, self.family, self.l, self.n_eff)
    }
}

/// 𝒦 = K'_l(w)/(w·K_l(w)).
fn k_term(l: u32, w: f64) -> f64 {
    bessel_k_log_derivative(l, w) / w
}

/// The value 𝒥 = J'_l(u)/(u·J_l(u)) must take for a root of `family`.
fn j_target(fiber: &Fiber, family: ModeFamily, l: u32, n_eff: f64, w: f64, u: f64) -> f64 {
    let (n1s, n2s) = (fiber.n1 * fiber.n1, fiber.n2 * fiber.n2);
    let kk = k_term(l, w);
    match family {
        ModeFamily::TE => -kk,
        ModeFamily::TM => -(n2s / n1s) * kk,
        ModeFamily::HE | ModeFamily::EH => {
            let s = 1.0 / (u * u) + 1.0 / (w * w);
            let r = (l as f64 * n_eff * s).powi(2);
            let disc = ((n1s - n2s) * kk).powi(2) + 4.0 * n1s * r;
            let sign = if family == ModeFamily::EH { 1.0 } else { -1.0 };
            (-(n1s + n2s) * kk + sign * disc.sqrt()) / (2.0 * n1s)
        }
    }
}

/// F = J'_l(u) − u·J_l(u)·𝒥_target: continuous in n_eff, zero at a mode.
fn characteristic(fiber: &Fiber, family: ModeFamily, l: u32, n_eff: f64) -> f64 {
    let (u, w) = fiber.uw(n_eff);
    let target = j_target(fiber, family, l, n_eff, w, u);
    let (j, jp) = bessel_j_and_prime(l, u);
    jp - u * j * target
}

/// Families scanned for azimuthal order `l`.
fn families(l: u32) -> [ModeFamily; 2] {
    if l == 0 {
        [ModeFamily::TE, ModeFamily::TM]
    } else {
        [ModeFamily::HE, ModeFamily::EH]
    }
}

/// Effective-index samples strictly inside (n₂, n₁): a uniform grid plus
/// geometric refinement toward both ends.
fn scan_points(n1: f64, n2: f64) -> Vec<f64> {
    let d = n1 - n2;
    let mut pts: Vec<f64> = (1..SCAN_SAMPLES)
        .map(|i| n2 + d * i as f64 / SCAN_SAMPLES as f64)
        .collect();
    for k in 0..60 {
        let f = 10f64.powf(-3.4 - 0.1 * k as f64);
        pts.push(n2 + d * f);
        pts.push(n1 - d * f);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Bisection on a sign change of `f` between `lo` and `hi`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical(format!("no sign change in [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if hi - lo < 1e-12 {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Numerical(format!(
            "bisection did not reach 1e-12 in [{lo}, {hi}]"
        )))
    }
}

/// Effective indices of all roots for one (family, l), descending.
pub fn scan_roots(fiber: &Fiber, family: ModeFamily, l: u32) -> Result<Vec<f64>> {
    let pts = scan_points(fiber.n1, fiber.n2);
    let f = |n: f64| characteristic(fiber, family, l, n);
    let vals: Vec<f64> = pts.iter().map(|&n| f(n)).collect();
    let mut roots = Vec::new();
    for i in 0..pts.len() - 1 {
        let (a, b) = (vals[i], vals[i + 1]);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Numerical(format!(
                "characteristic function not finite near n_eff = {}",
                pts[i]
            )));
        }
        if a == 0.0 {
            roots.push(pts[i]);
        } else if a.signum() != b.signum() && b != 0.0 {
            roots.push(bisect(f, pts[i], pts[i + 1])?);
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    Ok(roots)
}

/// All guided modes, sorted by descending effective index.
pub fn guided_modes(radius_um: f64, wavelength_um: f64, n1: f64, n2: f64) -> Result<Vec<FiberMode>> {
    let fiber = Fiber::new(radius_um, wavelength_um, n1, n2)?;
    modes_of(&fiber)
}

/// All guided modes of `fiber`.
pub fn modes_of(fiber: &Fiber) -> Result<Vec<FiberMode>> {
    let v = fiber.v();
    let l_max = v.ceil() as u32 + 2;
    let mut modes = Vec::new();
    for l in 0..=l_max {
        for family in families(l) {
            for (i, n_eff) in scan_roots(fiber, family, l)?.into_iter().enumerate() {
                modes.push(build_mode(fiber, family, l, i as u32 + 1, n_eff)?);
            }
        }
    }
    modes.sort_by(|a, b| b.n_eff.total_cmp(&a.n_eff));
    Ok(modes)
}

/// Cladding decay constant q = √(β² − k₀²n₂²).
pub fn evanescent_q(mode: &FiberMode) -> f64 {
    let k0 = mode.fiber.k0();
    (mode.beta * mode.beta - k0 * k0 * mode.fiber.n2 * mode.fiber.n2)
        .max(0.0)
        .sqrt()
}

fn build_mode(fiber: &Fiber, family: ModeFamily, l: u32, m: u32, n_eff: f64) -> Result<FiberMode> {
    let k0 = fiber.k0();
    let a = fiber.radius_um;
    let (u, w) = fiber.uw(n_eff);
    let (a_coef, b_coef) = match family {
        ModeFamily::TE => (0.0, 1.0),
        ModeFamily::TM => (1.0, 0.0),
        ModeFamily::HE | ModeFamily::EH => {
            let jj = bessel_j_prime(l, u) / (u * bessel_j(l, u));
            let s = 1.0 / (u * u) + 1.0 / (w * w);
            let denom = k0 * (jj + k_term(l, w));
            (1.0, -(k0 * n_eff) * l as f64 * s / denom)
        }
    };
    let mut mode = FiberMode {
        family,
        l,
        m,
        beta: k0 * n_eff,
        n_eff,
        h: u / a,
        q: w / a,
        fiber: *fiber,
        a_coef,
        b_coef,
    };
    let p = axial_power(&mode, 24);
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Numerical(format!(
            "mode {} has non-positive power {p}",
            mode.label()
        )));
    }
    let s = 1.0 / p.sqrt();
    mode.a_coef *= s;
    mode.b_coef *= s;
    Ok(mode)
}

/// Complex E and H at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeField {
    pub e: [Complex64; 3],
    pub h: [Complex64; 3],
}

/// Field components in cylindrical form (r, φ, z) at radius `r`.
/// `core` selects the interior or exterior expansion.
fn cylindrical(mode: &FiberMode, r: f64, phi: f64, core: bool) -> ([Complex64; 3], [Complex64; 3]) {
    let l = mode.l;
    let lf = l as f64;
    let fiber = &mode.fiber;
    let omega = fiber.k0();
    let beta = mode.beta;
    let (ze, zep, zh, zhp, kappa2, eps) = if core {
        let x = mode.h * r;
        let j = bessel_j(l, x);
        let jp = bessel_j_prime(l, x);
        (
            mode.a_coef * j,
            mode.a_coef * mode.h * jp,
            mode.b_coef * j,
            mode.b_coef * mode.h * jp,
            mode.h * mode.h,
            fiber.n1 * fiber.n1,
        )
    } else {
        let u = mode.h * fiber.radius_um;
        let w = mode.q * fiber.radius_um;
        let x = mode.q * r;
        // K_l(qr)/K_l(w) without overflow
        let ratio = bessel_k_scaled(l, x) / bessel_k_scaled(l, w) * (w - x).exp();
        let s = bessel_j(l, u) * ratio;
        let kp = bessel_k_log_derivative(l, x);
        (
            mode.a_coef * s,
            mode.a_coef * s * mode.q * kp,
            mode.b_coef * s,
            mode.b_coef * s * mode.q * kp,
            -mode.q * mode.q,
            fiber.n2 * fiber.n2,
        )
    };
    let (pe, pep, ph, php) = match mode.family {
        ModeFamily::TE | ModeFamily::TM => (1.0, 0.0, 1.0, 0.0),
        _ => (
            (lf * phi).cos(),
            -lf * (lf * phi).sin(),
            (lf * phi).sin(),
            lf * (lf * phi).cos(),
        ),
    };
    let i = Complex64::i() / kappa2;
    let e_r = i * (beta * zep * pe + omega * zh * php / r);
    let e_phi = i * (beta * ze * pep / r - omega * zhp * ph);
    let h_r = i * (beta * zhp * ph - omega * eps * ze * pep / r);
    let h_phi = i * (beta * zh * php / r + omega * eps * zep * pe);
    let e_z = Complex64::new(ze * pe, 0.0);
    let h_z = Complex64::new(zh * ph, 0.0);
    ([e_r, e_phi, e_z], [h_r, h_phi, h_z])
}

fn to_cartesian(v: [Complex64; 3], phi: f64) -> [Complex64; 3] {
    let (s, c) = phi.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c, v[2]]
}

/// Which of the two degenerate polarizations of an l ≥ 1 mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// E_z ∝ cos(lφ).
    Even,
    /// E_z ∝ sin(lφ): the even field rotated by π/(2l).
    Odd,
}

/// Field at (x, y) μm from the fiber axis, even polarization.
pub fn mode_field(mode: &FiberMode, x: f64, y: f64) -> ModeField {
    mode_field_with(mode, x, y, Parity::Even)
}

/// Field of either polarization at (x, y).
pub fn mode_field_with(mode: &FiberMode, x: f64, y: f64, parity: Parity) -> ModeField {
    let rot = match parity {
        Parity::Odd if mode.l > 0 => std::f64::consts::PI / (2.0 * mode.l as f64),
        _ => 0.0,
    };
    // sample the even field at the point rotated back by `rot`
    let (s, c) = rot.sin_cos();
    let (xr, yr) = (c * x + s * y, -s * x + c * y);
    let a = mode.fiber.radius_um;
    let mut r = (xr * xr + yr * yr).sqrt();
    let phi = if r < 1e-12 * a { 0.0 } else { yr.atan2(xr) };
    r = r.max(1e-12 * a);
    let (e, h) = cylindrical(mode, r, phi, r <= a);
    let (e, h) = (to_cartesian(e, phi), to_cartesian(h, phi));
    let turn = |v: [Complex64; 3]| [v[0] * c - v[1] * s, v[0] * s + v[1] * c, v[2]];
    ModeField {
        e: turn(e),
        h: turn(h),
    }
}

/// Field at radius `r` and angle `phi` from one side of the interface.
pub fn mode_field_region(mode: &FiberMode, r: f64, phi: f64, core: bool) -> ModeField {
    let (e, h) = cylindrical(mode, r, phi, core);
    ModeField {
        e: to_cartesian(e, phi),
        h: to_cartesian(h, phi),
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Radial panels covering the core and the evanescent tail.
fn radial_panels(mode: &FiberMode) -> Vec<(f64, f64)> {
    let a = mode.fiber.radius_um;
    let mut panels = vec![(0.0, 0.5 * a), (0.5 * a, a)];
    let mut lo = a;
    let mut width = 0.25 * a.min(1.0 / mode.q);
    while panels.len() < 400 {
        let hi = lo + width;
        panels.push((lo, hi));
        if mode.q * (hi - a) > 45.0 {
            break;
        }
        lo = hi;
        width *= 1.5;
    }
    panels
}

/// ½∫Re(E×H*)·ẑ dA by Gauss-Legendre in r and the trapezoid rule in φ.
pub fn axial_power(mode: &FiberMode, order: usize) -> f64 {
    let gl = gauss_legendre(order);
    let n_phi = 4 * mode.l as usize + 8;
    let a = mode.fiber.radius_um;
    let mut total = 0.0;
    for (lo, hi) in radial_panels(mode) {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &(x, w) in &gl {
            let r = mid + half * x;
            let mut ring = 0.0;
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                let (e, h) = cylindrical(mode, r, phi, r <= a);
                ring += (e[0] * h[1].conj() - e[1] * h[0].conj()).re;
            }
            total += w * half * r * ring * 2.0 * std::f64::consts::PI / n_phi as f64;
        }
    }
    0.5 * total
}

/// Placement of a z-normal monitor relative to the fiber.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneGeometry {
    /// Fiber axis (x, y) in cell units.
    pub axis_cells: [f64; 2],
    pub cell_um: f64,
}

/// Guided power carried by one mode (both polarizations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePower {
    pub label: String,
    pub family: ModeFamily,
    pub l: u32,
    pub m: u32,
    pub power: f64,
}

/// Decomposition of the flux through a monitor plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeProjection {
    pub modes: Vec<ModePower>,
    pub plane_flux: f64,
}

impl ModeProjection {
    pub fn guided_power(&self) -> f64 {
        self.modes.iter().map(|m| m.power).sum()
    }

    /// Plane flux not accounted for by guided modes (radiation crossing the plane).
    pub fn radiative(&self) -> f64 {
        self.plane_flux - self.guided_power()
    }

    /// Mode powers divided by `reference`.
    pub fn fractions(&self, reference: f64) -> Vec<(String, f64)> {
        self.modes
            .iter()
            .map(|m| (m.label.clone(), m.power / reference))
            .collect()
    }
}

/// Overlap-integral power of each guided mode in the recorded monitor fields.
/// Modes travel in the monitor's counting direction.
pub fn project_flux_on_modes(
    record: &MonitorRecord,
    modes: &[FiberMode],
    geometry: PlaneGeometry,
) -> Result<ModeProjection> {
    if record.normal != Axis::Z {
        return Err(Error::validation("mode projection needs a z-normal monitor"));
    }
    let samples = record.samples();
    let dx = geometry.cell_um;
    // the monitor must contain the core with margin on every side
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for s in &samples {
        let x = (s.pos[0] - geometry.axis_cells[0]) * dx;
        let y = (s.pos[1] - geometry.axis_cells[1]) * dx;
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    for m in modes {
        let reach = m.fiber.radius_um + 1.0 / m.q.max(1e-9);
        let inside = min_x < -m.fiber.radius_um
            && max_x > m.fiber.radius_um
            && min_y < -m.fiber.radius_um
            && max_y > m.fiber.radius_um;
        if !inside {
            return Err(Error::validation(format!(
                "monitor does not contain the fiber cross-section for {}",
                m.label()
            )));
        }
        if reach > max_x.min(-min_x).min(max_y).min(-min_y) {
            log::warn!("{} extends beyond the monitor edge; its power is underestimated", m.label());
        }
    }
    let d = record.direction;
    let mut out = Vec::with_capacity(modes.len());
    for m in modes {
        let parities: &[Parity] = if m.l == 0 { &[Parity::Even] } else { &[Parity::Even, Parity::Odd] };
        let mut power = 0.0;
        for &parity in parities {
            let mut amp = Complex64::default();
            for s in &samples {
                let x = (s.pos[0] - geometry.axis_cells[0]) * dx;
                let y = (s.pos[1] - geometry.axis_cells[1]) * dx;
                let f = mode_field_with(m, x, y, parity);
                // unit power in cell units
                let em = f.e[s.e_comp.index()] * dx;
                let hm = f.h[s.h_comp.index()] * dx * d;
                amp += s.sign * s.weight * (s.e * hm.conj() + em.conj() * s.h);
            }
            power += (0.25 * amp).norm_sqr();
        }
        out.push(ModePower {
            label: m.label(),
            family: m.family,
            l: m.l,
            m: m.m,
            power,
        });
    }
    Ok(ModeProjection {
        modes: out,
        plane_flux: record.flux(),
    })
}

/// Smallest k₀a at which a second mode appears.
///
/// The second mode is TE₀₁/TM₀₁ (cutoff J₀(V) = 0) or, for strong index
/// contrast, HE₂₁ (cutoff (n₁²/n₂² + 1)·J₁(V) = V·J₂(V)); every other
/// family is cut off at a larger V.
pub fn single_mode_cutoff_k0a(n1: f64, n2: f64) -> Result<f64> {
    if !(n1 > n2 && n2 >= 1.0) {
        return Err(Error::validation(format!("need n1 > n2 >= 1, got n1 = {n1}, n2 = {n2}")));
    }
    let contrast = n1 * n1 / (n2 * n2) + 1.0;
    let te = |v: f64| bessel_j(0, v);
    let he21 = |v: f64| contrast * bessel_j(1, v) - v * bessel_j(2, v);
    let first_root = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let step = 0.01;
        let mut v = step;
        while v < 20.0 {
            if f(v).signum() != f(v + step).signum() {
                return bisect(f, v, v + step);
            }
            v += step;
        }
        Err(Error::Numerical("no cutoff below V = 20".into()))
    };
    let v = first_root(&te)?.min(first_root(&he21)?);
    Ok(v / (n1 * n1 - n2 * n2).sqrt())
}
