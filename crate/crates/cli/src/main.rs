//! `blochid` — simulate Markovian qubit dynamics, generate stroboscopic
//! shot-noise records, fit signal models, reconstruct Bloch generators,
//! and run seeded Monte Carlo benchmarks.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use blochid_cli::bench::{self, ExperimentConfig, LabeledConfig};
use blochid_core::error::{Error, Result};
use blochid_core::lindblad::{build_bloch, is_physical, steady_state, BasisSet, BlochModel, LindbladSpec};
use blochid_core::linalg::DVec;
use blochid_core::measurement::{derive_seed, lds_times, sample_record, MeasurementRecord, Observable};
use blochid_core::models;
use blochid_core::propagation::propagate;
use blochid_core::recon_full::{infer_case, reconstruct_full, reconstruct_jordan};
use blochid_core::recon_partial::{build_coefficient_system, reconstruct_two_trace, solve_model, Prior};
use blochid_core::signal::{fit_signal, FitTemplate, SignalModel};
use blochid_core::CaseLabel;

#[derive(Parser)]
#[command(name = "blochid", version, about = "Markovian open-system identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, check, or analyse generator models.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Propagate a model and write the trajectory CSV.
    Simulate {
        /// Builtin model name or path to a model JSON file.
        #[arg(long)]
        model: String,
        /// Initial Bloch vector, comma separated.
        #[arg(long, default_value = "0,0,1")]
        r0: String,
        /// Sampling horizon T.
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
        /// Number of sample times N.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Low-discrepancy sampling (default) or a uniform grid.
        #[arg(long, default_value = "lds")]
        sampling: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate stroboscopic measurement records with binomial shot noise.
    Measure {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "0,0,1")]
        r0: String,
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Repetitions per time point, or "inf" for exact expectations.
        #[arg(long, default_value = "1000")]
        n_repeats: String,
        /// Comma-separated observables from {x, y, z}.
        #[arg(long, default_value = "z")]
        observables: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records are written to <prefix>_<obs>.csv with a JSON sidecar.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Fit measurement records to the damped-sinusoid basis.
    Estimate {
        /// Record CSV paths; each needs a sidecar with the same stem and a
        /// .json extension. Several records are fitted jointly.
        #[arg(long, num_args = 1.., required = true)]
        records: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        exponentials: usize,
        #[arg(long, default_value_t = false)]
        no_constant: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct generator parameters from a fitted signal model.
    Reconstruct {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, default_value = "0,0,1")]
        r0: String,
        /// Full-information reconstruction (needs x, y, z components).
        #[arg(long, default_value_t = false)]
        full: bool,
        /// Structural prior: dephasing | relaxation | generic.
        #[arg(long)]
        prior: Option<String>,
        /// Trace set for prior-based reconstruction: z | xy | yz | xz.
        #[arg(long)]
        traces: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded Monte Carlo benchmark scenario.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several scenarios sharing a model and tabulate the summaries.
    Compare {
        /// JSON array of labelled scenarios.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Compile a Lindblad coefficient spec into a generator pair.
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check positivity of a Lindblad coefficient spec.
    Check {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Solve for the steady state(s) of a model.
    SteadyState {
        #[arg(long)]
        model: String,
    },
}

fn parse_vector(text: &str) -> Result<DVec> {
    let parts: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    parts
        .map(|v| DVec::from_vec(v))
        .map_err(|_| Error::InvalidInput(format!("cannot parse vector `{text}`")))
}

fn parse_observables(text: &str) -> Result<Vec<Observable>> {
    text.split(',').map(|p| p.trim().parse()).collect()
}

fn parse_repeats(text: &str) -> Result<Option<u64>> {
    match text {
        "inf" | "none" | "exact" => Ok(None),
        other => other
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::InvalidInput(format!("bad n-repeats `{other}`"))),
    }
}

fn parse_prior(text: &str) -> Result<Prior> {
    match text {
        "dephasing" => Ok(Prior::DephasingGeneralBasis),
        "relaxation" => Ok(Prior::RelaxationDephasingZ),
        "generic" => Ok(Prior::GenericQubit),
        other => Err(Error::InvalidInput(format!("unknown prior `{other}`"))),
    }
}

/// Builtin name or model JSON file path.
fn resolve_model(text: &str) -> Result<BlochModel> {
    if let Some(model) = models::builtin(text) {
        return Ok(model);
    }
    let path = Path::new(text);
    if path.exists() {
        let content = std::fs::read_to_string(path)?;
        return Ok(serde_json::from_str(&content)?);
    }
    Err(Error::InvalidInput(format!(
        "`{text}` is neither a builtin model nor an existing file"
    )))
}

fn load_spec(path: &Path) -> Result<LindbladSpec> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn sidecar_path(record: &Path) -> PathBuf {
    record.with_extension("json")
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Model { command } => match command {
            ModelCommand::Build { spec, out } => {
                let spec = load_spec(&spec)?;
                let basis = BasisSet::generalized_gell_mann(spec.dim());
                let model = build_bloch(&spec, &basis)?;
                std::fs::write(&out, serde_json::to_string_pretty(&model)?)?;
                println!("wrote generator pair to {}", out.display());
            }
            ModelCommand::Check { spec } => {
                let spec = load_spec(&spec)?;
                let (physical, min_eig) = is_physical(&spec);
                println!(
                    "physical: {physical} (smallest eigenvalue of f: {min_eig:.6e})"
                );
            }
            ModelCommand::SteadyState { model } => {
                let model = resolve_model(&model)?;
                let ss = steady_state(&model)?;
                let report = serde_json::json!({
                    "r_ss": ss.point.as_slice(),
                    "unique": ss.is_unique(),
                    "null_dimension": ss.null_basis.len(),
                });
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
        },
        Command::Simulate {
            model,
            r0,
            t_max,
            n,
            sampling,
            out,
        } => {
            let model = resolve_model(&model)?;
            let r0 = parse_vector(&r0)?;
            let times = match sampling.as_str() {
                "lds" => lds_times(n, t_max)?,
                "uniform" => (0..n).map(|k| t_max * k as f64 / n.max(1) as f64).collect(),
                other => {
                    return Err(Error::InvalidInput(format!("unknown sampling `{other}`")))
                }
            };
            let traj = propagate(&model, &r0, &times)?;
            traj.write_csv(&out)?;
            println!("wrote {} samples to {}", times.len(), out.display());
        }
        Command::Measure {
            model,
            r0,
            t_max,
            n,
            n_repeats,
            observables,
            seed,
            out_prefix,
        } => {
            let model = resolve_model(&model)?;
            let r0 = parse_vector(&r0)?;
            let n_repeats = parse_repeats(&n_repeats)?;
            let observables = parse_observables(&observables)?;
            let times = lds_times(n, t_max)?;
            let traj = propagate(&model, &r0, &times)?;
            for obs in observables {
                let vals = traj.component(obs.index());
                let record = sample_record(
                    |t| vals[times.partition_point(|x| *x < t)],
                    &times,
                    n_repeats,
                    obs,
                    derive_seed(seed, 0, obs.index() as u64),
                )?;
                let csv = out_prefix.with_file_name(format!(
                    "{}_{obs}.csv",
                    out_prefix
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "record".into())
                ));
                record.write_csv(&csv)?;
                record.write_sidecar(&sidecar_path(&csv))?;
                println!("wrote {}", csv.display());
            }
        }
        Command::Estimate {
            records,
            pairs,
            exponentials,
            no_constant,
            out,
        } => {
            let loaded: Result<Vec<MeasurementRecord>> = records
                .iter()
                .map(|p| MeasurementRecord::read_csv(p, &sidecar_path(p)))
                .collect();
            let template = FitTemplate {
                pairs,
                exponentials,
                constant: !no_constant,
            };
            let signal = fit_signal(&loaded?, &template)?;
            std::fs::write(&out, serde_json::to_string_pretty(&signal)?)?;
            println!(
                "fitted {} component(s), log-likelihood {:.3}; wrote {}",
                signal.n_components(),
                signal.log_likelihood,
                out.display()
            );
        }
        Command::Reconstruct {
            signal,
            r0,
            full,
            prior,
            traces,
            out,
        } => {
            let signal: SignalModel =
                serde_json::from_str(&std::fs::read_to_string(&signal)?)?;
            let r0 = parse_vector(&r0)?;
            let report = if full {
                let result = if signal.has_polynomial_terms() {
                    let case = infer_case(&signal)?;
                    reconstruct_jordan(&signal, case, &r0)?
                } else {
                    match reconstruct_full(&signal, &r0) {
                        Ok(result) => result,
                        // Degenerate shapes without oscillation: route
                        // through the case taxonomy.
                        Err(Error::SingularS(_)) => {
                            let case = infer_case(&signal)?;
                            if case == CaseLabel::Generic {
                                return Err(Error::SingularS(
                                    "initial state lacks overlap with some eigenvectors".into(),
                                ));
                            }
                            reconstruct_jordan(&signal, case, &r0)?
                        }
                        Err(e) => return Err(e),
                    }
                };
                result.to_json()
            } else {
                let prior = parse_prior(&prior.ok_or_else(|| {
                    Error::InvalidInput("--prior required unless --full".into())
                })?)?;
                let traces = traces.ok_or_else(|| {
                    Error::InvalidInput("--traces required unless --full".into())
                })?;
                let wanted: Vec<Observable> = traces
                    .chars()
                    .map(|c| c.to_string().parse())
                    .collect::<Result<_>>()?;
                match wanted.len() {
                    1 => {
                        let sub = bench::signal_subset(&signal, &wanted)?;
                        let system = build_coefficient_system(&sub, prior, &r0)?;
                        let solution = solve_model(&system)?;
                        let model = solution.params.rebuild();
                        serde_json::json!({ "solution": solution, "model": model })
                    }
                    2 => {
                        let sub = bench::signal_subset(&signal, &wanted)?;
                        let solution = reconstruct_two_trace(&sub, prior, &r0)?;
                        let model = solution.params.rebuild();
                        serde_json::json!({ "solution": solution, "model": model })
                    }
                    n => {
                        return Err(Error::InvalidInput(format!(
                            "--traces takes 1 or 2 components, got {n}"
                        )))
                    }
                }
            };
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("wrote {}", out.display());
        }
        Command::Bench { config, seed, out } => {
            let mut config: ExperimentConfig =
                serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let outcome = bench::run_experiment(&config)?;
            outcome.write_outputs(&config, &out)?;
            println!(
                "{} trials, median error {:.4e}, {} failure(s); outputs in {}",
                outcome.trials.len(),
                outcome.distribution.median(),
                outcome.distribution.failures(),
                out.display()
            );
        }
        Command::Compare { config, out } => {
            let configs: Vec<LabeledConfig> =
                serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let table = bench::compare_settings(&configs)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("comparison.csv");
            std::fs::write(&path, table.to_csv())?;
            print!("{}", table.to_csv());
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
