//! One configured simulation: scene run, shared vacuum run, power budget.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{config_hash, Precision, SimulationConfig};
use crate::error::{Error, Result};
use crate::grid::{Lattice, Real};
use crate::modes::{guided_modes, project_flux_on_modes, FiberMode, ModeProjection, PlaneGeometry};
use crate::scene::{build_scene, emitter_position, power_box, reference_plane_um, BuiltScene, Offsets};
use crate::solver::{compute_power_budget, run_to_steady_state, PowerBudget, RunOutput, RunSetup};

/// Vacuum normalization runs keyed by everything that affects them,
/// optionally mirrored to a directory shared between processes.
#[derive(Debug, Default)]
pub struct VacuumCache {
    runs: Mutex<HashMap<String, Arc<RunOutput>>>,
    dir: Option<PathBuf>,
}

impl VacuumCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache that also reads and writes `<dir>/<key>.json`.
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(VacuumCache {
            runs: Mutex::default(),
            dir: Some(dir),
        })
    }

    fn lookup(&self, key: &str) -> Option<Arc<RunOutput>> {
        if let Some(run) = self.runs.lock().expect("cache lock").get(key) {
            return Some(Arc::clone(run));
        }
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<RunOutput>(&text) {
            Ok(run) => {
                let run = Arc::new(run);
                self.runs
                    .lock()
                    .expect("cache lock")
                    .insert(key.to_string(), Arc::clone(&run));
                Some(run)
            }
            Err(e) => {
                log::warn!("ignoring unreadable vacuum run {}: {e}", path.display());
                None
            }
        }
    }

    fn store(&self, key: String, run: Arc<RunOutput>) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            let tmp = dir.join(format!("{key}.json.{}", std::process::id()));
            let text = serde_json::to_string(run.as_ref()).expect("run output serializes");
            std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        self.runs.lock().expect("cache lock").insert(key, run);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.runs.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scene run, its normalization and the resulting budget.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: SimulationConfig,
    pub config_hash: String,
    pub budget: PowerBudget,
    pub scene_run: RunOutput,
    pub vacuum_run: Arc<RunOutput>,
    /// Fiber axis in cell units.
    pub axis_cells: [f64; 2],
    pub n_core: f64,
}

impl Simulation {
    pub fn steps(&self) -> u64 {
        self.scene_run.steps
    }

    pub fn wall_s(&self) -> f64 {
        self.scene_run.wall_s
    }

    /// Guided modes of the simulated fiber.
    pub fn fiber_modes(&self) -> Result<Vec<FiberMode>> {
        let s = &self.config.scene;
        guided_modes(s.radius_um, s.wavelength_um, self.n_core, s.n_background)
    }

    /// Plane flux split into guided-mode powers.
    pub fn mode_projection(&self) -> Result<ModeProjection> {
        let record = self
            .scene_run
            .plane
            .as_ref()
            .ok_or_else(|| Error::validation("scene run has no plane monitor"))?;
        let geometry = PlaneGeometry {
            axis_cells: self.axis_cells,
            cell_um: self.config.grid.cell_um,
        };
        project_flux_on_modes(record, &self.fiber_modes()?, geometry)
    }
}

/// Lattice, built scene and run inputs for `config`.
pub fn prepare<T: Real>(config: &SimulationConfig) -> Result<(RunSetup<T>, BuiltScene<T>)> {
    config.validate()?;
    let lattice = config.grid.lattice()?;
    let scene: BuiltScene<T> = build_scene(&config.scene, &lattice, &config.layout)?;
    let n_max = scene.n_core.max(config.scene.n_background);
    scene.materials.validate(&lattice, n_max * n_max)?;
    let setup = RunSetup {
        lattice: lattice.clone(),
        materials: scene.materials.clone(),
        source: scene.source.clone(),
        plane: Some(scene.plane.clone()),
        power_box: Some(scene.power_box),
        probes: Vec::new(),
        cpml: config.cpml.clone(),
        courant_factor: config.grid.courant_factor,
    };
    Ok((setup, scene))
}

/// Vacuum counterpart of `setup`: background medium everywhere and the dipole
/// moved to the fiber axis at the case's nominal height, so all radii and
/// offsets of a sweep share one normalization run.
pub fn vacuum_setup<T: Real>(config: &SimulationConfig, setup: &RunSetup<T>) -> Result<RunSetup<T>> {
    let lattice: &Lattice = &setup.lattice;
    let mut nominal = config.scene.clone();
    nominal.offsets = Offsets::default();
    let z_ref = reference_plane_um(lattice, &config.layout);
    let z = emitter_position(&nominal, z_ref)[2];
    let ext = lattice.extent_um();
    let mut vac = setup.vacuum();
    vac.source.position_um = [ext[0] / 2.0, ext[1] / 2.0, z];
    vac.power_box = Some(power_box(lattice, &vac.source, config.layout.box_clearance_cells)?);
    Ok(vac)
}

fn vacuum_key<T: Real>(config: &SimulationConfig, vac: &RunSetup<T>) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        grid: &'a crate::grid::GridSpec,
        cpml: &'a crate::grid::CpmlParams,
        runtime: &'a crate::solver::RunControl,
        precision: Precision,
        source: &'a crate::scene::DipoleSource,
        plane: &'a Option<crate::scene::PlaneMonitorSpec>,
        power_box: &'a Option<crate::grid::NodeBox>,
        background: f64,
    }
    let key = Key {
        grid: &config.grid,
        cpml: &config.cpml,
        runtime: &config.runtime,
        precision: config.precision,
        source: &vac.source,
        plane: &vac.plane,
        power_box: &vac.power_box,
        background: vac.materials.background,
    };
    let digest = Sha256::digest(serde_json::to_vec(&key).expect("key serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn vacuum_for<T: Real>(config: &SimulationConfig, setup: &RunSetup<T>, cache: &VacuumCache) -> Result<Arc<RunOutput>> {
    let vac = vacuum_setup(config, setup)?;
    let key = vacuum_key(config, &vac);
    if let Some(run) = cache.lookup(&key) {
        return Ok(run);
    }
    log::info!("vacuum normalization run {}", &key[..12]);
    let run = Arc::new(run_to_steady_state(&vac, &config.runtime)?);
    cache.store(key, Arc::clone(&run))?;
    Ok(run)
}

fn simulate_typed<T: Real>(config: &SimulationConfig, cache: &VacuumCache) -> Result<Simulation> {
    let (setup, scene) = prepare::<T>(config)?;
    let vacuum_run = vacuum_for(config, &setup, cache)?;
    log::info!(
        "scene run {:?} a = {:.4} um {:?}",
        config.scene.case,
        config.scene.radius_um,
        config.scene.orientation
    );
    let scene_run = run_to_steady_state(&setup, &config.runtime)?;
    let budget = compute_power_budget(&scene_run, &vacuum_run)?;
    Ok(Simulation {
        config: config.clone(),
        config_hash: config_hash(config),
        budget,
        scene_run,
        vacuum_run,
        axis_cells: scene.axis_cells,
        n_core: scene.n_core,
    })
}

/// Run `config` and normalize it, reusing a cached vacuum run when possible.
pub fn simulate(config: &SimulationConfig, cache: &VacuumCache) -> Result<Simulation> {
    match config.precision {
        Precision::F32 => simulate_typed::<f32>(config, cache),
        Precision::F64 => simulate_typed::<f64>(config, cache),
    }
}

/// Make sure the normalization run of `config` is in `cache`.
pub fn ensure_vacuum(config: &SimulationConfig, cache: &VacuumCache) -> Result<()> {
    match config.precision {
        Precision::F32 => vacuum_for(config, &prepare::<f32>(config)?.0, cache).map(|_| ()),
        Precision::F64 => vacuum_for(config, &prepare::<f64>(config)?.0, cache).map(|_| ()),
    }
}
