//! Run configuration files, presets, hashing and result serialization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{CpmlParams, GridSpec};
use crate::scene::{CaseId, Offsets, Orientation, SceneLayout, SceneSpec};
use crate::solver::RunControl;

/// Named starting points for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 4×4×12 μm domain, monitor 5 μm from the emitter.
    Desk,
    /// 6×6×25 μm domain, monitor 15 μm from the emitter.
    PaperFull,
}

impl Preset {
    pub fn extent_um(self) -> [f64; 3] {
        match self {
            Preset::Desk => [4.0, 4.0, 12.0],
            Preset::PaperFull => [6.0, 6.0, 25.0],
        }
    }

    pub fn layout(self) -> SceneLayout {
        match self {
            Preset::Desk => SceneLayout::desk(),
            Preset::PaperFull => SceneLayout::paper_full(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperFull => "paper-full",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper-full" | "paper_full" | "full" => Ok(Preset::PaperFull),
            other => Err(Error::validation(format!("unknown preset `{other}`"))),
        }
    }
}

/// Field storage precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// A fully expanded and validated run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub preset: Preset,
    pub grid: GridSpec,
    pub scene: SceneSpec,
    pub layout: SceneLayout,
    pub cpml: CpmlParams,
    pub runtime: RunControl,
    pub precision: Precision,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Grid section of a config file; every field optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    extent_um: Option<[f64; 3]>,
    /// Explicit Δ; must divide every extent.
    cell_um: Option<f64>,
    cells_per_wavelength: Option<f64>,
    /// Resolve the wavelength inside the core (`true`) or in vacuum.
    resolve_in_core: Option<bool>,
    pml_cells: Option<usize>,
    courant_factor: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    case: CaseId,
    orientation: Orientation,
    radius_um: Option<f64>,
    k0a: Option<f64>,
    #[serde(default)]
    offsets: Offsets,
    wavelength_um: Option<f64>,
    n_core: Option<f64>,
    n_background: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    monitor_distance_um: Option<f64>,
    top_clearance_um: Option<f64>,
    box_clearance_cells: Option<usize>,
    monitor_half_width_um: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_preset")]
    preset: Preset,
    #[serde(default)]
    grid: RawGrid,
    scene: RawScene,
    #[serde(default)]
    layout: RawLayout,
    #[serde(default)]
    cpml: Option<CpmlParams>,
    #[serde(default)]
    runtime: Option<RunControl>,
    #[serde(default)]
    precision: Precision,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

fn default_preset() -> Preset {
    Preset::Desk
}

/// Default resolution: twenty cells per wavelength in the core.
pub const DEFAULT_CELLS_PER_WAVELENGTH: f64 = 20.0;

/// Largest Δ ≤ `nominal` that divides every extent with an even number of
/// transverse cells, so the lattice is symmetric about the fiber axis.
pub fn snap_cell(extent_um: [f64; 3], nominal: f64) -> Result<f64> {
    if !(nominal > 0.0 && nominal.is_finite()) {
        return Err(Error::validation(format!("cell size must be positive, got {nominal}")));
    }
    let start = (extent_um[0] / nominal - 1e-9).ceil().max(2.0) as u64;
    for n in start..start + 100_000 {
        if n % 2 == 1 {
            continue;
        }
        let dx = extent_um[0] / n as f64;
        let ok = (1..3).all(|a| {
            let c = extent_um[a] / dx;
            (c - c.round()).abs() < 1e-6 * c.max(1.0) && (a == 2 || c.round() as u64 % 2 == 0)
        });
        if ok {
            return Ok(dx);
        }
    }
    Err(Error::validation(format!(
        "no cell size near {nominal} um divides the extents {extent_um:?}"
    )))
}

impl SimulationConfig {
    /// Preset defaults for one scene.
    pub fn preset(preset: Preset, scene: SceneSpec) -> Result<Self> {
        let raw = RawConfig {
            preset,
            grid: RawGrid::default(),
            scene: RawScene {
                case: scene.case,
                orientation: scene.orientation,
                radius_um: Some(scene.radius_um),
                k0a: None,
                offsets: scene.offsets,
                wavelength_um: Some(scene.wavelength_um),
                n_core: scene.n_core,
                n_background: Some(scene.n_background),
            },
            layout: RawLayout::default(),
            cpml: None,
            runtime: None,
            precision: Precision::F32,
            output_dir: None,
            seed: 0,
        };
        expand(raw)
    }

    /// Replace Δ by the snapped value nearest to λ₀/`cells_per_wavelength`
    /// (vacuum wavelength).
    pub fn with_vacuum_resolution(mut self, cells_per_wavelength: f64) -> Result<Self> {
        let nominal = self.scene.wavelength_um / cells_per_wavelength;
        self.grid.cell_um = snap_cell(self.grid.extent_um, nominal)?;
        self.validate()?;
        Ok(self)
    }

    /// Cross-checks between sections.
    pub fn validate(&self) -> Result<()> {
        self.grid.cells()?;
        self.cpml.validate()?;
        self.runtime.validate()?;
        self.scene.validate()?;
        if self.scene.radius_um < 2.0 * self.grid.cell_um {
            return Err(Error::validation(format!(
                "geometry unresolvable: radius {} um is below two cells of {} um",
                self.scene.radius_um, self.grid.cell_um
            )));
        }
        if !(self.layout.monitor_distance_um > 0.0) {
            return Err(Error::validation("monitor distance must be positive"));
        }
        let lattice = self.grid.lattice()?;
        let top = (lattice.cells[2] - lattice.pml) as f64 * lattice.cell_um;
        let bottom = lattice.pml as f64 * lattice.cell_um;
        let z_ref = top - self.layout.top_clearance_um;
        let z_mon = z_ref - self.layout.monitor_distance_um;
        if z_ref > top - lattice.cell_um || z_mon < bottom + lattice.cell_um {
            return Err(Error::validation(format!(
                "monitor at z = {z_mon:.3} um or emitter at z = {z_ref:.3} um lies outside the non-PML region"
            )));
        }
        Ok(())
    }

    /// SHA-256 over every field that affects the physics.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

fn expand(raw: RawConfig) -> Result<SimulationConfig> {
    let wavelength_um = raw.scene.wavelength_um.unwrap_or(0.620);
    let radius_um = match (raw.scene.radius_um, raw.scene.k0a) {
        (Some(r), None) => r,
        (None, Some(k)) => k * wavelength_um / (2.0 * std::f64::consts::PI),
        (Some(_), Some(_)) => {
            return Err(Error::validation("give either scene.radius_um or scene.k0a, not both"))
        }
        (None, None) => return Err(Error::validation("scene needs radius_um or k0a")),
    };
    let scene = SceneSpec {
        case: raw.scene.case,
        radius_um,
        orientation: raw.scene.orientation,
        offsets: raw.scene.offsets,
        wavelength_um,
        n_core: raw.scene.n_core,
        n_background: raw.scene.n_background.unwrap_or(1.0),
    };
    scene.validate()?;

    let extent_um = raw.grid.extent_um.unwrap_or(raw.preset.extent_um());
    let cell_um = match raw.grid.cell_um {
        Some(dx) => dx,
        None => {
            let cpw = raw.grid.cells_per_wavelength.unwrap_or(DEFAULT_CELLS_PER_WAVELENGTH);
            if !(cpw > 0.0) {
                return Err(Error::validation("cells_per_wavelength must be positive"));
            }
            let n = if raw.grid.resolve_in_core.unwrap_or(true) {
                scene.core_index()?
            } else {
                scene.n_background
            };
            snap_cell(extent_um, wavelength_um / (cpw * n))?
        }
    };
    let grid = GridSpec {
        extent_um,
        cell_um,
        pml_cells: raw.grid.pml_cells.unwrap_or(10),
        courant_factor: raw.grid.courant_factor.unwrap_or(0.95),
    };
    let base = raw.preset.layout();
    let layout = SceneLayout {
        monitor_distance_um: raw.layout.monitor_distance_um.unwrap_or(base.monitor_distance_um),
        top_clearance_um: raw.layout.top_clearance_um.unwrap_or(base.top_clearance_um),
        box_clearance_cells: raw.layout.box_clearance_cells.unwrap_or(base.box_clearance_cells),
        monitor_half_width_um: raw.layout.monitor_half_width_um.or(base.monitor_half_width_um),
    };
    let config = SimulationConfig {
        preset: raw.preset,
        grid,
        scene,
        layout,
        cpml: raw.cpml.unwrap_or_default(),
        runtime: raw.runtime.unwrap_or_default(),
        precision: raw.precision,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        seed: raw.seed,
    };
    config.validate()?;
    Ok(config)
}

/// Parse and expand a JSON configuration string. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<SimulationConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: format!(
            "field `{}`: {} (line {}, column {})",
            e.path(),
            e.inner(),
            e.inner().line(),
            e.inner().column()
        ),
    })?;
    expand(raw)
}

/// Read, expand and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimulationConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Serialize an expanded configuration so that [`load_config`] reproduces it.
pub fn config_to_json(config: &SimulationConfig) -> String {
    let scene = &config.scene;
    let value = serde_json::json!({
        "preset": config.preset,
        "grid": {
            "extent_um": config.grid.extent_um,
            "cell_um": config.grid.cell_um,
            "pml_cells": config.grid.pml_cells,
            "courant_factor": config.grid.courant_factor,
        },
        "scene": {
            "case": scene.case,
            "orientation": scene.orientation,
            "radius_um": scene.radius_um,
            "offsets": scene.offsets,
            "wavelength_um": scene.wavelength_um,
            "n_core": scene.n_core,
            "n_background": scene.n_background,
        },
        "layout": config.layout,
        "cpml": config.cpml,
        "runtime": config.runtime,
        "precision": config.precision,
        "output_dir": config.output_dir,
        "seed": config.seed,
    });
    serde_json::to_string_pretty(&value).expect("config serializes")
}

pub fn write_config(config: &SimulationConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, config_to_json(config) + "\n").map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of the physics-affecting fields (not the preset label,
/// output directory or seed).
pub fn config_hash(config: &SimulationConfig) -> String {
    #[derive(Serialize)]
    struct Physics<'a> {
        grid: &'a GridSpec,
        scene: &'a SceneSpec,
        layout: &'a SceneLayout,
        cpml: &'a CpmlParams,
        runtime: &'a RunControl,
        precision: Precision,
    }
    let key = Physics {
        grid: &config.grid,
        scene: &config.scene,
        layout: &config.layout,
        cpml: &config.cpml,
        runtime: &config.runtime,
        precision: config.precision,
    };
    let bytes = serde_json::to_vec(&key).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case: CaseId,
    pub orientation: Orientation,
    pub k0a: f64,
    pub radius_um: f64,
    pub sweep_var: String,
    pub sweep_val_um: f64,
    #[serde(rename = "T")]
    pub transmission: f64,
    #[serde(rename = "PF")]
    pub purcell: f64,
    pub eta: f64,
    pub steps: u64,
    pub wall_s: f64,
    pub config_hash: String,
}

pub const RESULTS_HEADER: [&str; 12] = [
    "case",
    "orientation",
    "k0a",
    "radius_um",
    "sweep_var",
    "sweep_val_um",
    "T",
    "PF",
    "eta",
    "steps",
    "wall_s",
    "config_hash",
];

/// Nine significant digits in scientific notation.
pub fn format_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Write rows as CSV sorted by (case, orientation, swept value).
pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = results_csv(rows)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The CSV bytes [`write_results`] would write.
pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.case, a.orientation)
            .cmp(&(b.case, b.orientation))
            .then(a.sweep_val_um.total_cmp(&b.sweep_val_um))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in sorted {
        w.write_record([
            r.case.label().to_string(),
            r.orientation.label().to_string(),
            format_sig9(r.k0a),
            format_sig9(r.radius_um),
            r.sweep_var.clone(),
            format_sig9(r.sweep_val_um),
            format_sig9(r.transmission),
            format_sig9(r.purcell),
            format_sig9(r.eta),
            r.steps.to_string(),
            format_sig9(r.wall_s),
            r.config_hash.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))
}

/// Read a results CSV written by [`write_results`].
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = r.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {headers:?}"),
        });
    }
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}
