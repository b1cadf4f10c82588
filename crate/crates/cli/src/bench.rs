//! Seeded Monte Carlo benchmark harness.
//!
//! An experiment is: propagate a truth model, draw stroboscopic shot-noise
//! records per trial, fit, reconstruct with the configured method, and
//! score the relative Hilbert-Schmidt error
//! `(‖Â−A‖_F + ‖ĉ−c‖) / (‖A‖_F + ‖c‖)`. Trials are independent (seed
//! derived from base ⊕ trial index) and run in parallel; aggregation is
//! ordered by trial index, so outputs are bit-identical for a given config
//! and seed regardless of thread count. Failed trials surface as infinite
//! errors, never dropped.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blochid_core::error::{Error, Result};
use blochid_core::lindblad::BlochModel;
use blochid_core::linalg::DVec;
use blochid_core::measurement::{
    derive_seed, lds_times, sample_record, MeasurementRecord, Observable,
};
use blochid_core::models;
use blochid_core::propagation::propagate;
use blochid_core::recon_full::reconstruct_full;
use blochid_core::recon_partial::{
    build_coefficient_system, reconstruct_two_trace, solve_model, Prior,
};
use blochid_core::signal::{fit_signal, FitTemplate, SignalModel};

/// Where the truth model comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Builtin { builtin: String },
    File { file: PathBuf },
}

impl ModelSource {
    pub fn builtin(name: &str) -> Self {
        ModelSource::Builtin {
            builtin: name.to_string(),
        }
    }

    pub fn resolve(&self) -> Result<BlochModel> {
        match self {
            ModelSource::Builtin { builtin } => models::builtin(builtin)
                .ok_or_else(|| Error::InvalidInput(format!("unknown builtin model `{builtin}`"))),
            ModelSource::File { file } => {
                let text = std::fs::read_to_string(file)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Reconstruction method run on each trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    /// Joint fit of all three Bloch components, eigenvector assembly.
    Full,
    /// Single-trace coefficient matching under a structural prior.
    SingleTrace { prior: Prior, observable: Observable },
    /// Two jointly fitted traces matched under a structural prior.
    TwoTrace {
        prior: Prior,
        observables: [Observable; 2],
    },
}

/// A complete benchmark scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub r0: Vec<f64>,
    pub observables: Vec<Observable>,
    /// Sampling horizon T.
    pub t_max: f64,
    /// Number of stroboscopic sample times N.
    pub n_times: usize,
    /// Repetitions per time point N_e; `null` is the infinite-statistics
    /// (noiseless) switch.
    pub n_repeats: Option<u64>,
    pub trials: u64,
    pub seed: u64,
    pub method: Method,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.observables.is_empty() {
            return Err(Error::InvalidInput("observables must be non-empty".into()));
        }
        for (i, a) in self.observables.iter().enumerate() {
            if self.observables[i + 1..].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate observable {a}")));
            }
        }
        if !(self.t_max > 0.0) || self.n_times == 0 {
            return Err(Error::InvalidInput(
                "horizon must be positive and n_times at least 1".into(),
            ));
        }
        match &self.method {
            Method::Full => {
                let mut want = vec![Observable::X, Observable::Y, Observable::Z];
                for obs in &self.observables {
                    want.retain(|w| w != obs);
                }
                if !want.is_empty() || self.observables.len() != 3 {
                    return Err(Error::InvalidInput(
                        "full reconstruction needs observables x, y, z".into(),
                    ));
                }
            }
            Method::SingleTrace { observable, .. } => {
                if !self.observables.contains(observable) {
                    return Err(Error::InvalidInput(format!(
                        "single-trace observable {observable} not among the measured set"
                    )));
                }
            }
            Method::TwoTrace { observables, .. } => {
                for obs in observables {
                    if !self.observables.contains(obs) {
                        return Err(Error::InvalidInput(format!(
                            "two-trace observable {obs} not among the measured set"
                        )));
                    }
                }
                if observables[0] == observables[1] {
                    return Err(Error::InvalidInput(
                        "two-trace observables must differ".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn r0_vec(&self) -> DVec {
        DVec::from_column_slice(&self.r0)
    }
}

/// Per-trial artifact: the error entry plus the failure reason if any.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub error: f64,
    pub failure: Option<String>,
}

/// Sorted per-trial relative errors with summary accessors.
#[derive(Clone, Debug)]
pub struct ErrorDistribution {
    sorted: Vec<f64>,
}

impl ErrorDistribution {
    pub fn from_raw(mut errors: Vec<f64>) -> Self {
        assert!(!errors.is_empty(), "at least one trial");
        errors.sort_by(f64::total_cmp);
        Self { sorted: errors }
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn median(&self) -> f64 {
        let n = self.sorted.len();
        if n % 2 == 1 {
            self.sorted[n / 2]
        } else {
            0.5 * (self.sorted[n / 2 - 1] + self.sorted[n / 2])
        }
    }

    /// Nearest-rank percentile, `p` in (0, 100].
    pub fn percentile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[rank - 1]
    }

    pub fn fraction_below(&self, threshold: f64) -> f64 {
        self.sorted.iter().filter(|&&e| e < threshold).count() as f64 / self.sorted.len() as f64
    }

    pub fn failures(&self) -> usize {
        self.sorted.iter().filter(|e| !e.is_finite()).count()
    }

    /// Cumulative curve over the finite entries; the probability axis keeps
    /// the full trial count in the denominator so failures show as a curve
    /// that tops out below one.
    pub fn cumulative(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_finite())
            .map(|(i, &e)| (e, (i + 1) as f64 / n))
            .collect()
    }
}

/// Full result of a benchmark run.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub distribution: ErrorDistribution,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentOutcome {
    /// Write `errors.csv`, `cumulative.csv` and `summary.json`.
    pub fn write_outputs(&self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut errors = std::io::BufWriter::new(std::fs::File::create(dir.join("errors.csv"))?);
        writeln!(errors, "trial,error")?;
        for t in &self.trials {
            writeln!(errors, "{},{:.16e}", t.trial, t.error)?;
        }
        let mut cumulative =
            std::io::BufWriter::new(std::fs::File::create(dir.join("cumulative.csv"))?);
        writeln!(cumulative, "error,probability")?;
        for (e, p) in self.distribution.cumulative() {
            writeln!(cumulative, "{e:.16e},{p:.16e}")?;
        }
        let summary = serde_json::json!({
            "n_trials": self.trials.len(),
            "failures": self.distribution.failures(),
            "median": self.distribution.median(),
            "p90": self.distribution.percentile(90.0),
            "fraction_below": {
                "0.01": self.distribution.fraction_below(0.01),
                "0.015": self.distribution.fraction_below(0.015),
                "0.03": self.distribution.fraction_below(0.03),
            },
            "config": config,
        });
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        Ok(())
    }
}

/// Exact value lookup on the shared stroboscopic grid.
fn component_lookup<'a>(times: &'a [f64], values: &'a [f64]) -> impl Fn(f64) -> f64 + 'a {
    move |t: f64| values[times.partition_point(|x| *x < t)]
}

fn record_for(
    traj_component: &[f64],
    times: &[f64],
    config: &ExperimentConfig,
    obs: Observable,
    trial: u64,
) -> Result<MeasurementRecord> {
    sample_record(
        component_lookup(times, traj_component),
        times,
        config.n_repeats,
        obs,
        derive_seed(config.seed, trial, obs.index() as u64),
    )
}

fn run_trial(
    truth: &BlochModel,
    components: &[Vec<f64>],
    times: &[f64],
    config: &ExperimentConfig,
    trial: u64,
) -> Result<f64> {
    let r0 = config.r0_vec();
    let recon = match &config.method {
        Method::Full => {
            let mut ordered: Vec<Observable> = config.observables.clone();
            ordered.sort_by_key(Observable::index);
            let records: Result<Vec<_>> = ordered
                .iter()
                .map(|&obs| record_for(&components[obs.index()], times, config, obs, trial))
                .collect();
            let signal = fit_signal(&records?, &FitTemplate::qubit_generic())?;
            reconstruct_full(&signal, &r0)?
                .model
                .ok_or_else(|| Error::InvalidInput("under-determined reconstruction".into()))?
        }
        Method::SingleTrace { prior, observable } => {
            let record = record_for(
                &components[observable.index()],
                times,
                config,
                *observable,
                trial,
            )?;
            let signal = fit_signal(&[record], &FitTemplate::qubit_generic())?;
            let system = build_coefficient_system(&signal, *prior, &r0)?;
            solve_model(&system)?.params.rebuild()
        }
        Method::TwoTrace { prior, observables } => {
            let mut pair = *observables;
            pair.sort_by_key(Observable::index);
            let records: Result<Vec<_>> = pair
                .iter()
                .map(|&obs| record_for(&components[obs.index()], times, config, obs, trial))
                .collect();
            let signal = fit_signal(&records?, &FitTemplate::qubit_generic())?;
            reconstruct_two_trace(&signal, *prior, &r0)?.params.rebuild()
        }
    };
    Ok(recon.relative_error(truth))
}

/// Run all trials of a benchmark scenario.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let truth = config.model.resolve()?;
    if config.r0.len() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "r0 has length {}, model dimension is {}",
            config.r0.len(),
            truth.dim()
        )));
    }
    let times = lds_times(config.n_times, config.t_max)?;
    let traj = propagate(&truth, &config.r0_vec(), &times)?;
    let components: Vec<Vec<f64>> = (0..truth.dim()).map(|i| traj.component(i)).collect();

    let trials: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(
            |trial| match run_trial(&truth, &components, &times, config, trial) {
                Ok(error) => TrialRecord {
                    trial,
                    error,
                    failure: None,
                },
                Err(e) => TrialRecord {
                    trial,
                    error: f64::INFINITY,
                    failure: Some(e.to_string()),
                },
            },
        )
        .collect();

    debug_assert_eq!(trials.len() as u64, config.trials);
    let distribution = ErrorDistribution::from_raw(trials.iter().map(|t| t.error).collect());
    Ok(ExperimentOutcome {
        distribution,
        trials,
    })
}

/// Aligned summary of several scenarios sharing one truth model.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub median: f64,
    pub p90: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,median,p90\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e}\n",
                row.label, row.median, row.p90
            ));
        }
        out
    }
}

/// A labelled scenario inside a comparison config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledConfig {
    pub label: String,
    #[serde(flatten)]
    pub config: ExperimentConfig,
}

/// Run several scenarios that share one truth model and tabulate their
/// medians and 90th percentiles.
pub fn compare_settings(configs: &[LabeledConfig]) -> Result<ComparisonTable> {
    if configs.is_empty() {
        return Err(Error::InvalidInput("no configurations to compare".into()));
    }
    let reference = configs[0].config.model.resolve()?;
    for lc in &configs[1..] {
        let model = lc.config.model.resolve()?;
        if model != reference {
            return Err(Error::InvalidInput(
                "compared configurations must share the model".into(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    for lc in configs {
        let outcome = run_experiment(&lc.config)?;
        rows.push(ComparisonRow {
            label: lc.label.clone(),
            median: outcome.distribution.median(),
            p90: outcome.distribution.percentile(90.0),
        });
    }
    Ok(ComparisonTable { rows })
}

/// Restrict a fitted signal to a subset of its components.
pub fn signal_subset(signal: &SignalModel, wanted: &[Observable]) -> Result<SignalModel> {
    let mut coeffs = Vec::with_capacity(wanted.len());
    let mut components = Vec::with_capacity(wanted.len());
    for &obs in wanted {
        let idx = signal
            .component_index(obs)
            .ok_or_else(|| Error::InvalidInput(format!("signal has no {obs} component")))?;
        coeffs.push(signal.coeffs[idx].clone());
        components.push(obs);
    }
    Ok(SignalModel {
        basis: signal.basis.clone(),
        coeffs,
        components,
        log_likelihood: signal.log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless_config(trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSource::builtin("model1"),
            r0: vec![0.0, 0.0, 1.0],
            observables: vec![Observable::X, Observable::Y, Observable::Z],
            t_max: 50.0,
            n_times: 400,
            n_repeats: None,
            trials,
            seed: 7,
            method: Method::Full,
        }
    }

    #[test]
    fn noiseless_full_method_is_exact() {
        let outcome = run_experiment(&noiseless_config(2)).unwrap();
        assert_eq!(outcome.trials.len(), 2);
        for t in &outcome.trials {
            assert!(t.error < 1e-6, "trial {} error {}", t.trial, t.error);
        }
    }

    #[test]
    fn distribution_summary_consistency() {
        let d = ErrorDistribution::from_raw(vec![0.4, 0.1, f64::INFINITY, 0.2]);
        assert_eq!(d.values()[0], 0.1);
        assert_eq!(d.failures(), 1);
        assert!((d.median() - 0.3).abs() < 1e-15);
        assert!((d.fraction_below(0.25) - 0.5).abs() < 1e-15);
        let curve = d.cumulative();
        assert_eq!(curve.len(), 3);
        assert!(curve
            .windows(2)
            .all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
        assert!(curve.last().unwrap().1 < 1.0);
    }

    #[test]
    fn config_validation() {
        let mut config = noiseless_config(1);
        config.observables = vec![Observable::X];
        assert!(config.validate().is_err());
        let mut config = noiseless_config(1);
        config.trials = 0;
        assert!(config.validate().is_err());
        let mut config = noiseless_config(1);
        config.method = Method::SingleTrace {
            prior: Prior::DephasingGeneralBasis,
            observable: Observable::Z,
        };
        assert!(config.validate().is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let config = noiseless_config(3);
        let text = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.trials, 3);
        assert!(matches!(back.method, Method::Full));
        assert!(matches!(back.model, ModelSource::Builtin { .. }));
    }
}
