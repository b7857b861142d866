//! Fiber and fiber-tip geometry, dipole placement and monitor layout.
//!
//! Scene coordinates are in μm with the fiber axis along z through the
//! transverse centre of the domain. The nanofiber tip occupies `z ≤ z_ref`;
//! the guided light is collected by a plane monitor below the emitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Lattice, MaterialGrid, NodeBox, Real};

/// Emitter standoff from the silica surface, in μm.
pub const SURFACE_STANDOFF_UM: f64 = 0.010;

/// Radius range of the published radius sweeps, in μm.
pub const SWEEP_RADIUS_RANGE_UM: (f64, f64) = (0.062, 1.24);

/// The four emitter/fiber placements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    /// Emitter outside an infinite nanofiber, 10 nm from its surface.
    OnfSurface,
    /// Emitter on the axis of an infinite nanofiber.
    OnfInside,
    /// Emitter on the axis of a nanofiber tip, 10 nm behind the facet.
    OnftInside,
    /// Emitter 10 nm in front of the tip facet.
    OnftFacet,
}

impl CaseId {
    pub fn is_tip(self) -> bool {
        matches!(self, CaseId::OnftInside | CaseId::OnftFacet)
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::OnfSurface => "onf_surface",
            CaseId::OnfInside => "onf_inside",
            CaseId::OnftInside => "onft_inside",
            CaseId::OnftFacet => "onft_facet",
        }
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onf_surface" | "i" | "1" => Ok(CaseId::OnfSurface),
            "onf_inside" | "ii" | "2" => Ok(CaseId::OnfInside),
            "onft_inside" | "iii" | "3" => Ok(CaseId::OnftInside),
            "onft_facet" | "iv" | "4" => Ok(CaseId::OnftFacet),
            other => Err(Error::validation(format!("unknown case `{other}`"))),
        }
    }
}

/// Dipole orientation relative to the fiber.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Radial,
    Azimuthal,
    Axial,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Radial, Orientation::Azimuthal, Orientation::Axial];

    /// The emitter sits on the +x side, so radial is x and azimuthal is y.
    pub fn axis(self) -> Axis {
        match self {
            Orientation::Radial => Axis::X,
            Orientation::Azimuthal => Axis::Y,
            Orientation::Axial => Axis::Z,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Orientation::Radial => "radial",
            Orientation::Azimuthal => "azimuthal",
            Orientation::Axial => "axial",
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" | "x" => Ok(Orientation::Radial),
            "azimuthal" | "y" => Ok(Orientation::Azimuthal),
            "axial" | "z" => Ok(Orientation::Axial),
            other => Err(Error::validation(format!("unknown orientation `{other}`"))),
        }
    }
}

/// Emitter displacements from the nominal position, in μm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Offsets {
    pub d_r: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
}

/// One emitter/fiber configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub case: CaseId,
    /// Fiber or tip radius a, in μm.
    pub radius_um: f64,
    pub orientation: Orientation,
    #[serde(default)]
    pub offsets: Offsets,
    /// Vacuum emission wavelength λ₀ in μm.
    pub wavelength_um: f64,
    /// Core index; the Sellmeier silica value at λ₀ when absent.
    pub n_core: Option<f64>,
    pub n_background: f64,
}

impl SceneSpec {
    pub fn new(case: CaseId, radius_um: f64, orientation: Orientation) -> Self {
        SceneSpec {
            case,
            radius_um,
            orientation,
            offsets: Offsets::default(),
            wavelength_um: 0.620,
            n_core: None,
            n_background: 1.0,
        }
    }

    /// Radius from a fiber size parameter k₀a.
    pub fn with_k0a(case: CaseId, k0a: f64, orientation: Orientation) -> Self {
        let mut s = SceneSpec::new(case, 0.0, orientation);
        s.radius_um = k0a * s.wavelength_um / (2.0 * std::f64::consts::PI);
        s
    }

    pub fn core_index(&self) -> Result<f64> {
        match self.n_core {
            Some(n) => Ok(n),
            None => silica_index(self.wavelength_um),
        }
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength_um
    }

    pub fn k0a(&self) -> f64 {
        self.k0() * self.radius_um
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_um > 0.0 && self.radius_um.is_finite()) {
            return Err(Error::validation(format!(
                "radius must be positive, got {}",
                self.radius_um
            )));
        }
        if !(self.wavelength_um > 0.0 && self.wavelength_um.is_finite()) {
            return Err(Error::validation("wavelength must be positive"));
        }
        let n_core = self.core_index()?;
        if !(self.n_background >= 1.0 && n_core > self.n_background) {
            return Err(Error::validation(format!(
                "need n_core > n_background >= 1, got {n_core} and {}",
                self.n_background
            )));
        }
        let o = self.offsets;
        let (allowed, label) = match self.case {
            CaseId::OnfSurface => ([true, false, false, false], "d_r"),
            CaseId::OnftFacet => ([false, true, true, true], "d_x/d_y/d_z"),
            CaseId::OnfInside | CaseId::OnftInside => ([false; 4], "none"),
        };
        for (v, (ok, name)) in [o.d_r, o.d_x, o.d_y, o.d_z]
            .into_iter()
            .zip(allowed.into_iter().zip(["d_r", "d_x", "d_y", "d_z"]))
        {
            if v != 0.0 && !ok {
                return Err(Error::validation(format!(
                    "offset {name} is not meaningful for {:?} (allowed: {label})",
                    self.case
                )));
            }
            if !v.is_finite() {
                return Err(Error::validation(format!("offset {name} is not finite")));
            }
        }
        if o.d_r < 0.0 {
            return Err(Error::validation("d_r must be non-negative"));
        }
        if o.d_z < -SURFACE_STANDOFF_UM {
            return Err(Error::validation("d_z would place the emitter inside the facet"));
        }
        let (lo, hi) = SWEEP_RADIUS_RANGE_UM;
        if self.radius_um < lo - 1e-9 || self.radius_um > hi + 1e-9 {
            log::warn!(
                "radius {} um lies outside the swept range [{lo}, {hi}] um",
                self.radius_um
            );
        }
        Ok(())
    }
}

/// Refractive index of fused silica from the three-term Sellmeier formula.
pub fn silica_index(wavelength_um: f64) -> Result<f64> {
    if !(wavelength_um > 0.2 && wavelength_um < 2.0) {
        return Err(Error::validation(format!(
            "wavelength {wavelength_um} um outside the Sellmeier validity range (0.2, 2.0) um"
        )));
    }
    const B: [f64; 3] = [0.696_166_3, 0.407_942_6, 0.897_479_4];
    const C: [f64; 3] = [0.068_404_3, 0.116_241_4, 9.896_161];
    let l2 = wavelength_um * wavelength_um;
    let n2 = 1.0 + (0..3).map(|i| B[i] * l2 / (l2 - C[i] * C[i])).sum::<f64>();
    Ok(n2.sqrt())
}

/// Where the emitter and monitors sit inside the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    /// Distance from the nominal emitter plane to the transmission monitor.
    pub monitor_distance_um: f64,
    /// Gap between the nominal emitter plane (the tip facet) and the +z PML.
    pub top_clearance_um: f64,
    /// Clearance of the closed power box around the emitter, in cells.
    pub box_clearance_cells: usize,
    /// Half-width of the monitor plane; the full cross-section minus PML if absent.
    #[serde(default)]
    pub monitor_half_width_um: Option<f64>,
}

impl SceneLayout {
    /// Reduced 4×4×12 μm domain with the monitor 5 μm from the emitter.
    pub fn desk() -> Self {
        SceneLayout {
            monitor_distance_um: 5.0,
            top_clearance_um: 5.0,
            box_clearance_cells: 5,
            monitor_half_width_um: None,
        }
    }

    /// Full 6×6×25 μm domain with the monitor 15 μm from the emitter.
    pub fn paper_full() -> Self {
        SceneLayout {
            monitor_distance_um: 15.0,
            top_clearance_um: 5.0,
            box_clearance_cells: 5,
            monitor_half_width_um: None,
        }
    }
}

/// A point electric dipole driven by a ramped continuous sinusoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    /// Position in domain coordinates (μm from the domain corner).
    pub position_um: [f64; 3],
    /// Unit polarization vector.
    pub polarization: [f64; 3],
    pub wavelength_um: f64,
    /// Peak current moment in solver units.
    pub amplitude: f64,
}

impl DipoleSource {
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        let norm: f64 = self.polarization.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "dipole polarization must be unit length, got |p| = {norm}"
            )));
        }
        let p = self.position_cells(lattice);
        let interior = lattice.interior();
        let inside = (0..3).all(|a| {
            p[a] >= interior.lo[a] as f64 + 1.0 && p[a] <= interior.hi[a] as f64 - 1.0
        });
        if !inside {
            return Err(Error::validation(format!(
                "dipole at {:?} um is not at least one cell outside the PML",
                self.position_um
            )));
        }
        Ok(())
    }

    pub fn position_cells(&self, lattice: &Lattice) -> [f64; 3] {
        self.position_um.map(|v| v / lattice.cell_um)
    }
}

/// A flux plane normal to z at node plane `k`, counting power along `direction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneMonitorSpec {
    pub k: usize,
    /// +1 counts power flowing to +z, −1 to −z.
    pub direction: i8,
    /// Inclusive node ranges in x and y.
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

/// Everything a run needs besides the lattice itself.
#[derive(Clone, Debug)]
pub struct BuiltScene<T: Real> {
    pub materials: MaterialGrid<T>,
    pub source: DipoleSource,
    pub plane: PlaneMonitorSpec,
    pub power_box: NodeBox,
    /// Fiber axis position (x, y) in cell units.
    pub axis_cells: [f64; 2],
    /// Nominal emitter plane (tip facet) in μm.
    pub z_ref_um: f64,
    pub n_core: f64,
}

/// Axial reference plane: the tip facet, and the nominal emitter height.
pub fn reference_plane_um(lattice: &Lattice, layout: &SceneLayout) -> f64 {
    let top = (lattice.cells[2] - lattice.pml) as f64 * lattice.cell_um;
    top - layout.top_clearance_um
}

/// Dipole position in scene coordinates (x, y relative to the axis; z absolute).
pub fn emitter_position(spec: &SceneSpec, z_ref: f64) -> [f64; 3] {
    let o = spec.offsets;
    let a = spec.radius_um;
    match spec.case {
        CaseId::OnfSurface => [a + SURFACE_STANDOFF_UM + o.d_r, 0.0, z_ref],
        CaseId::OnfInside => [0.0, 0.0, z_ref],
        CaseId::OnftInside => [0.0, 0.0, z_ref - SURFACE_STANDOFF_UM],
        CaseId::OnftFacet => [o.d_x, o.d_y, z_ref + SURFACE_STANDOFF_UM + o.d_z],
    }
}

/// Assemble materials, dipole and monitors for `spec` on `lattice`.
pub fn build_scene<T: Real>(
    spec: &SceneSpec,
    lattice: &Lattice,
    layout: &SceneLayout,
) -> Result<BuiltScene<T>> {
    spec.validate()?;
    let n_core = spec.core_index()?;
    let dx = lattice.cell_um;
    if spec.radius_um < 2.0 * dx {
        return Err(Error::validation(format!(
            "geometry unresolvable: radius {} um is below two cells ({} um)",
            spec.radius_um,
            2.0 * dx
        )));
    }
    let ext = lattice.extent_um();
    let center = [ext[0] / 2.0, ext[1] / 2.0];
    let z_ref = reference_plane_um(lattice, layout);
    let local = emitter_position(spec, z_ref);
    let source = DipoleSource {
        position_um: [center[0] + local[0], center[1] + local[1], local[2]],
        polarization: {
            let mut p = [0.0; 3];
            p[spec.orientation.axis().index()] = 1.0;
            p
        },
        wavelength_um: spec.wavelength_um,
        amplitude: 1.0,
    };
    source.validate(lattice)?;

    let plane = plane_monitor(lattice, layout, z_ref, center)?;
    let power_box = power_box(lattice, &source, layout.box_clearance_cells)?;

    let geometry = FiberGeometry {
        radius: spec.radius_um / dx,
        axis: [center[0] / dx, center[1] / dx],
        facet: spec.case.is_tip().then_some(z_ref / dx),
    };
    let eps_core = n_core * n_core;
    let eps_bg = spec.n_background * spec.n_background;
    let materials = MaterialGrid::from_fn(lattice, eps_bg, |_, pos| {
        let f = geometry.fill_fraction(pos);
        if f <= 0.0 {
            eps_bg
        } else if f >= 1.0 {
            eps_core
        } else {
            f * eps_core + (1.0 - f) * eps_bg
        }
    });

    Ok(BuiltScene {
        materials,
        source,
        plane,
        power_box,
        axis_cells: geometry.axis,
        z_ref_um: z_ref,
        n_core,
    })
}

/// Monitor plane `monitor_distance` below the reference plane, collecting
/// power flowing toward −z.
pub fn plane_monitor(
    lattice: &Lattice,
    layout: &SceneLayout,
    z_ref: f64,
    center_um: [f64; 2],
) -> Result<PlaneMonitorSpec> {
    let z = z_ref - layout.monitor_distance_um;
    let k = (z / lattice.cell_um).round();
    let interior = lattice.interior();
    if !(k >= interior.lo[2] as f64 + 1.0 && k <= interior.hi[2] as f64 - 1.0) {
        return Err(Error::validation(format!(
            "monitor plane at z = {z:.3} um falls outside the non-PML region"
        )));
    }
    let mut lo = [interior.lo[0], interior.lo[1]];
    let mut hi = [interior.hi[0], interior.hi[1]];
    if let Some(hw) = layout.monitor_half_width_um {
        for a in 0..2 {
            let c = center_um[a] / lattice.cell_um;
            let w = hw / lattice.cell_um;
            lo[a] = lo[a].max((c - w).floor().max(0.0) as usize);
            hi[a] = hi[a].min((c + w).ceil() as usize);
        }
    }
    Ok(PlaneMonitorSpec {
        k: k as usize,
        direction: -1,
        lo,
        hi,
    })
}

/// Closed box of node planes around the dipole: `2·clearance + 1` cells on
/// every axis, so the box size does not depend on the sub-cell position.
pub fn power_box(lattice: &Lattice, source: &DipoleSource, clearance: usize) -> Result<NodeBox> {
    let p = source.position_cells(lattice);
    let interior = lattice.interior();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = p[a].floor() - clearance as f64;
        let h = p[a].floor() + clearance as f64 + 1.0;
        if l < interior.lo[a] as f64 || h > interior.hi[a] as f64 {
            return Err(Error::validation(format!(
                "power box around the dipole crosses the PML along {:?}",
                Axis::from_index(a)
            )));
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    Ok(NodeBox { lo, hi })
}

/// Cylinder of radius `radius` (cells) along z, optionally cut at `facet`.
#[derive(Clone, Copy, Debug)]
pub struct FiberGeometry {
    pub radius: f64,
    pub axis: [f64; 2],
    pub facet: Option<f64>,
}

/// Sub-samples per axis used to estimate the disk coverage of a cell.
const SUBSAMPLES: usize = 32;

impl FiberGeometry {
    /// Silica volume fraction of the unit cube centred at `pos` (cell units).
    pub fn fill_fraction(&self, pos: [f64; 3]) -> f64 {
        let fz = match self.facet {
            None => 1.0,
            Some(zf) => (zf - (pos[2] - 0.5)).clamp(0.0, 1.0),
        };
        if fz == 0.0 {
            return 0.0;
        }
        fz * self.disk_fraction(pos[0] - self.axis[0], pos[1] - self.axis[1])
    }

    /// Fraction of the unit square centred at (x, y) covered by the disk.
    fn disk_fraction(&self, x: f64, y: f64) -> f64 {
        let r = self.radius;
        let near = x.abs().max(0.5) - 0.5;
        let near_y = y.abs().max(0.5) - 0.5;
        let (fx, fy) = (x.abs() + 0.5, y.abs() + 0.5);
        if near * near + near_y * near_y >= r * r {
            return 0.0;
        }
        if fx * fx + fy * fy <= r * r {
            return 1.0;
        }
        let h = 1.0 / SUBSAMPLES as f64;
        let mut inside = 0usize;
        for a in 0..SUBSAMPLES {
            let sx = x - 0.5 + (a as f64 + 0.5) * h;
            for b in 0..SUBSAMPLES {
                let sy = y - 0.5 + (b as f64 + 0.5) * h;
                if sx * sx + sy * sy <= r * r {
                    inside += 1;
                }
            }
        }
        inside as f64 / (SUBSAMPLES * SUBSAMPLES) as f64
    }
}

/// Silica volume (μm³) represented by `materials` inside `region`, using the Ez
/// sub-lattice.
pub fn silica_volume_um3<T: Real>(
    materials: &MaterialGrid<T>,
    lattice: &Lattice,
    n_core: f64,
    region: NodeBox,
) -> f64 {
    let eps_bg = materials.background;
    let contrast = n_core * n_core - eps_bg;
    let mut cells = 0.0;
    for k in region.lo[2]..region.hi[2] {
        for j in region.lo[1]..=region.hi[1] {
            for i in region.lo[0]..=region.hi[0] {
                let e = materials.eps[2][lattice.idx(i, j, k)].as_f64();
                cells += (e - eps_bg) / contrast;
            }
        }
    }
    cells * lattice.cell_um.powi(3)
}
