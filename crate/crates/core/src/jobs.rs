//! Sweep execution in worker processes with resumable per-point result files.
//!
//! Layout of a sweep directory:
//! `points/<hash>.config.json` (input), `points/<hash>.json` (outcome),
//! `vacuum/<key>.json` (shared normalization runs), `results.csv`, `sweep.json`.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{config_hash, write_config, write_results, SimulationConfig};
use crate::error::{Error, Result};
use crate::pipeline::{ensure_vacuum, simulate, VacuumCache};
use crate::sweep::{PointOutcome, SweepResult, SweepRow, SweepSpec};

/// Environment variable holding the number of worker processes.
pub const WORKERS_ENV: &str = "ONFT_WORKERS";

/// Worker count from the environment, else the number of available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Outcome of one point as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFile {
    pub config_hash: String,
    pub outcome: std::result::Result<PointOutcome, String>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_point(path: &Path) -> Option<PointFile> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Run one configuration and record its outcome (success or failure) in
/// `result_path`. Used by worker processes.
pub fn run_point(config: &SimulationConfig, result_path: &Path, vacuum_dir: Option<&Path>) -> Result<PointOutcome> {
    let cache = match vacuum_dir {
        Some(d) => VacuumCache::persistent(d)?,
        None => VacuumCache::new(),
    };
    let outcome = simulate(config, &cache).map(|sim| PointOutcome {
        budget: sim.budget,
        steps: sim.steps(),
        wall_s: sim.wall_s(),
    });
    let file = PointFile {
        config_hash: config_hash(config),
        outcome: outcome.as_ref().map(|o| *o).map_err(|e| e.to_string()),
    };
    write_json(&file, result_path)?;
    outcome
}

/// Run every point of `spec` as `worker_exe run --config … --result …`
/// with up to `workers` processes, skipping points whose result file
/// already holds a success.
pub fn sweep_processes(spec: &SweepSpec, out_dir: &Path, workers: usize, worker_exe: &Path) -> Result<SweepResult> {
    spec.validate()?;
    let points_dir = out_dir.join("points");
    let vacuum_dir = out_dir.join("vacuum");
    std::fs::create_dir_all(&points_dir).map_err(|e| Error::io(&points_dir, e))?;
    let cache = VacuumCache::persistent(&vacuum_dir)?;

    struct Slot {
        orientation: crate::scene::Orientation,
        value: f64,
        config: std::result::Result<SimulationConfig, String>,
        hash: String,
    }
    let slots: Vec<Slot> = spec
        .points()
        .into_iter()
        .map(|(orientation, value)| {
            let config = spec.point_config(orientation, value).map_err(|e| e.to_string());
            let hash = config.as_ref().map(config_hash).unwrap_or_default();
            Slot {
                orientation,
                value,
                config,
                hash,
            }
        })
        .collect();

    let result_path = |hash: &str| points_dir.join(format!("{hash}.json"));
    let mut pending = VecDeque::new();
    for (i, slot) in slots.iter().enumerate() {
        let Ok(config) = &slot.config else { continue };
        let done = read_point(&result_path(&slot.hash)).is_some_and(|p| p.outcome.is_ok());
        if done {
            log::info!("reusing {} = {}", spec.variable.label(), slot.value);
            continue;
        }
        if let Err(e) = ensure_vacuum(config, &cache) {
            log::warn!("normalization run for {} failed: {e}", slot.value);
        }
        let cfg_path = points_dir.join(format!("{}.config.json", slot.hash));
        write_config(config, &cfg_path)?;
        pending.push_back(i);
    }

    let queue = Mutex::new(pending);
    let crashes: Mutex<Vec<(usize, String)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let Some(i) = queue.lock().expect("queue lock").pop_front() else { break };
                let slot = &slots[i];
                let cfg_path = points_dir.join(format!("{}.config.json", slot.hash));
                let res_path = result_path(&slot.hash);
                let _ = std::fs::remove_file(&res_path);
                let output = Command::new(worker_exe)
                    .arg("run")
                    .arg("--config")
                    .arg(&cfg_path)
                    .arg("--result")
                    .arg(&res_path)
                    .arg("--vacuum-dir")
                    .arg(&vacuum_dir)
                    .output();
                let message = match output {
                    Ok(out) if read_point(&res_path).is_some() => {
                        log::info!("{} = {} finished ({})", spec.variable.label(), slot.value, out.status);
                        continue;
                    }
                    Ok(out) => {
                        let stderr = String::from_utf8_lossy(&out.stderr);
                        let tail: Vec<&str> = stderr.lines().rev().take(3).collect();
                        format!("worker exited with {}: {}", out.status, tail.join(" | "))
                    }
                    Err(e) => format!("cannot start worker {}: {e}", worker_exe.display()),
                };
                crashes.lock().expect("crash lock").push((i, message));
            });
        }
    });
    let crashes = crashes.into_inner().expect("crash lock");

    let rows: Vec<SweepRow> = slots
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            let outcome = match &slot.config {
                Err(e) => Err(e.clone()),
                Ok(_) => match crashes.iter().find(|c| c.0 == i) {
                    Some((_, msg)) => Err(msg.clone()),
                    None => read_point(&result_path(&slot.hash))
                        .map(|p| p.outcome)
                        .unwrap_or_else(|| Err("missing result file".into())),
                },
            };
            let (radius_um, k0a) = slot
                .config
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |c| (c.scene.radius_um, c.scene.k0a()));
            SweepRow {
                orientation: slot.orientation,
                value: slot.value,
                radius_um,
                k0a,
                config_hash: slot.hash.clone(),
                outcome,
            }
        })
        .collect();
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Error::Numerical(format!(
            "all {} sweep points failed; first: {}",
            rows.len(),
            rows[0].outcome.as_ref().unwrap_err()
        )));
    }
    Ok(SweepResult {
        case: spec.case(),
        variable: spec.variable,
        rows,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// `results.csv` and `sweep.json` in `out_dir`.
pub fn write_sweep_outputs(result: &SweepResult, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join("results.csv");
    write_results(&result.result_rows(), &csv)?;
    let json = out_dir.join("sweep.json");
    write_json(result, &json)?;
    Ok((csv, json))
}
