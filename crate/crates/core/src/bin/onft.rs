use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use onft::analysis::{background_correct, lorentzian_fit, rate_stats, read_counts, read_spectrum, CountLabel};
use onft::config::{load_config, results_csv};
use onft::jobs::{run_point, sweep_processes, worker_count, write_sweep_outputs};
use onft::modes::{evanescent_q, guided_modes, single_mode_cutoff_k0a};
use onft::pipeline::{simulate, VacuumCache};
use onft::scene::Orientation;
use onft::sweep::{find_peaks, fit_exp_decay, SweepSpec, SweepVar};
use onft::validation;
use onft::{Error, Result};

#[derive(Parser)]
#[command(name = "onft", version, about = "Dipole channeling efficiency into optical nanofibers and nanofiber tips")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration and print its power budget as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write the outcome (success or failure) to this file.
        #[arg(long)]
        result: Option<PathBuf>,
        /// Directory of shared vacuum normalization runs.
        #[arg(long)]
        vacuum_dir: Option<PathBuf>,
        /// Decompose the monitor flux into guided modes.
        #[arg(long)]
        modes: bool,
    },
    /// Sweep one parameter of a base configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// k0a, d_r, d_x, d_y or d_z.
        #[arg(long)]
        var: SweepVar,
        /// Comma-separated, strictly increasing values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "radial")]
        orientations: Vec<Orientation>,
        #[arg(long)]
        out: PathBuf,
        /// Worker processes (default: $ONFT_WORKERS or the number of cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the guided modes of a silica or custom fiber as CSV.
    Modes {
        #[arg(long, conflicts_with = "radius_um")]
        k0a: Option<f64>,
        #[arg(long)]
        radius_um: Option<f64>,
        #[arg(long, default_value_t = 0.62)]
        wavelength_um: f64,
        #[arg(long)]
        n1: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        n2: f64,
    },
    /// Count-rate statistics and Lorentzian spectrum fits; JSON to stdout.
    Analyze {
        /// Fluorescence count trace (t s, counts).
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Background trace subtracted from --counts.
        #[arg(long)]
        background: Option<PathBuf>,
        /// Spectrum (λ nm, intensity).
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Run the solver self-checks; exits with 2 if any fails.
    Validate {
        #[arg(long, default_value_t = 20.0)]
        cells_per_wavelength: f64,
    },
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Run {
            config,
            result,
            vacuum_dir,
            modes,
        } => {
            let config = load_config(&config)?;
            if let Some(path) = result {
                let outcome = run_point(&config, &path, vacuum_dir.as_deref())?;
                print_json(&json!(outcome));
                return Ok(ExitCode::SUCCESS);
            }
            let cache = match vacuum_dir {
                Some(d) => VacuumCache::persistent(d)?,
                None => VacuumCache::new(),
            };
            let sim = simulate(&config, &cache)?;
            let mut out = json!({
                "config_hash": sim.config_hash,
                "budget": sim.budget,
                "steps": sim.steps(),
                "wall_s": sim.wall_s(),
            });
            if modes {
                out["modes"] = json!(sim.mode_projection()?);
            }
            print_json(&out);
        }
        Cmd::Sweep {
            config,
            var,
            values,
            orientations,
            out,
            workers,
        } => {
            let spec = SweepSpec {
                orientations,
                variable: var,
                values,
                base: load_config(&config)?,
            };
            let exe = std::env::current_exe().map_err(|source| Error::Io { path: "current executable".into(), source })?;
            let result = sweep_processes(&spec, &out, workers.unwrap_or_else(worker_count), &exe)?;
            let (csv, _) = write_sweep_outputs(&result, &out)?;
            for r in result.failures() {
                eprintln!("{} = {} failed: {}", var.label(), r.value, r.outcome.as_ref().unwrap_err());
            }
            for &o in &spec.orientations {
                let series = result.eta_series(o);
                if series.len() >= 3 {
                    match var {
                        SweepVar::K0a => eprintln!("{} peaks: {:?}", o.label(), find_peaks(&series)?),
                        _ => match fit_exp_decay(&series) {
                            Ok(f) => eprintln!("{} decay length {:.4} um", o.label(), f.length),
                            Err(e) => eprintln!("{} no decay fit: {e}", o.label()),
                        },
                    }
                }
            }
            eprintln!("wrote {}", csv.display());
            print!("{}", String::from_utf8_lossy(&results_csv(&result.result_rows())?));
        }
        Cmd::Modes {
            k0a,
            radius_um,
            wavelength_um,
            n1,
            n2,
        } => {
            let n1 = match n1 {
                Some(n) => n,
                None => onft::scene::silica_index(wavelength_um)?,
            };
            let radius = match (k0a, radius_um) {
                (Some(k), None) => k * wavelength_um / (2.0 * std::f64::consts::PI),
                (None, Some(r)) => r,
                _ => return Err(Error::Validation("give --k0a or --radius-um".into())),
            };
            println!("family,l,m,n_eff,q_per_um");
            for m in guided_modes(radius, wavelength_um, n1, n2)? {
                println!("{},{},{},{:.12},{:.9}", m.family, m.l, m.m, m.n_eff, evanescent_q(&m));
            }
            eprintln!("single-mode below k0a = {:.4}", single_mode_cutoff_k0a(n1, n2)?);
        }
        Cmd::Analyze {
            counts,
            background,
            spectrum,
        } => {
            if counts.is_none() && spectrum.is_none() {
                return Err(Error::Validation("give --counts and/or --spectrum".into()));
            }
            let mut out = json!({});
            if let Some(path) = counts {
                let signal = rate_stats(&read_counts(&path, CountLabel::Fluorescence)?)?;
                out["counts"] = json!(signal);
                if let Some(path) = background {
                    let bg = rate_stats(&read_counts(&path, CountLabel::Background)?)?;
                    out["background"] = json!(bg);
                    out["net"] = json!(background_correct(signal, bg)?);
                }
            }
            if let Some(path) = spectrum {
                out["spectrum_fit"] = json!(lorentzian_fit(&read_spectrum(&path)?)?);
            }
            print_json(&out);
        }
        Cmd::Validate { cells_per_wavelength } => {
            let cpw = cells_per_wavelength;
            let vac = validation::vacuum_power(cpw, 3.0)?;
            let purcell = validation::bulk_purcell(cpw, 3.0)?;
            let div = validation::divergence_free(24, 200)?;
            let energy = validation::energy_decay(48, 10, 6000)?;
            let checks = [
                ("vacuum_power", vac.rel_error < 0.02),
                ("bulk_purcell", purcell.rel_error < 0.03),
                ("divergence", div.relative < 1e-12),
                ("pml_decay", energy.monotone() && energy.final_fraction < 1e-6),
            ];
            print_json(&json!({
                "vacuum_power": vac,
                "bulk_purcell": purcell,
                "divergence": div,
                "pml_decay": energy,
                "passed": checks.iter().filter(|c| c.1).map(|c| c.0).collect::<Vec<_>>(),
                "failed": checks.iter().filter(|c| !c.1).map(|c| c.0).collect::<Vec<_>>(),
            }));
            if checks.iter().any(|c| !c.1) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
