//! End-to-end signal estimation on benchmark trajectories: noiseless
//! recovery of the eigenvalue-derived nonlinear parameters, round-trip
//! evaluation, and the shot-statistics consistency trend.

mod common;

use blochid_core::measurement::{derive_seed, lds_times, sample_record, Observable};
use blochid_core::models::{model1, z_start};
use blochid_core::propagation::{eigenstructure, propagate};
use blochid_core::signal::{fit_signal, FitTemplate};
use rayon::prelude::*;

/// Model 1 nonlinear truth from its eigenstructure: `(γ, ω, δ)` as decay
/// rates and angular frequency.
fn model1_truth() -> (f64, f64, f64) {
    let st = eigenstructure(&model1());
    let pair = &st.pairs[0];
    let real = &st.reals[0];
    (-pair.decay, pair.frequency, -real.rate)
}

#[test]
fn noiseless_model1_trace_recovers_eigen_parameters() {
    let m = model1();
    let (gamma, omega, delta) = model1_truth();
    let times = lds_times(1000, 50.0).unwrap();
    let traj = propagate(&m, &z_start(), &times).unwrap();
    let z = traj.component(2);
    let rec = sample_record(
        |t| z[times.partition_point(|x| *x < t)],
        &times,
        None,
        Observable::Z,
        0,
    )
    .unwrap();
    let model = fit_signal(&[rec], &FitTemplate::qubit_generic()).unwrap();
    let (g, w, d) = (
        model.basis[1].gamma,
        model.basis[1].omega,
        model.basis[3].gamma,
    );
    assert!((g - gamma).abs() / gamma < 1e-6, "γ = {g} vs {gamma}");
    assert!((w - omega).abs() / omega < 1e-6, "ω = {w} vs {omega}");
    assert!((d - delta).abs() / delta < 1e-6, "δ = {d} vs {delta}");

    // Round trip: the fitted signal reproduces the z component pointwise.
    let fitted = model.evaluate_component(0, &times);
    let max_dev = fitted
        .iter()
        .zip(&z)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_dev < 1e-6, "max deviation {max_dev}");
}

#[test]
fn shot_noise_trial_recovers_parameters_to_percent_level() {
    let m = model1();
    let (gamma, omega, delta) = model1_truth();
    let times = lds_times(1000, 50.0).unwrap();
    let traj = propagate(&m, &z_start(), &times).unwrap();
    let z = traj.component(2);
    let rec = sample_record(
        |t| z[times.partition_point(|x| *x < t)],
        &times,
        Some(1000),
        Observable::Z,
        derive_seed(11, 0, 2),
    )
    .unwrap();
    let model = fit_signal(&[rec], &FitTemplate::qubit_generic()).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(model.basis[1].omega, omega) < 0.05);
    assert!(rel(model.basis[1].gamma, gamma) < 0.5);
    assert!(rel(model.basis[3].gamma, delta) < 0.5);
}

#[test]
fn nonlinear_error_decreases_with_repetitions() {
    let m = model1();
    let (gamma, omega, delta) = model1_truth();
    let times = lds_times(600, 50.0).unwrap();
    let traj = propagate(&m, &z_start(), &times).unwrap();
    let z = traj.component(2);

    let median_err = |ne: u64, salt: u64| -> f64 {
        let mut errs: Vec<f64> = (0..50u64)
            .into_par_iter()
            .map(|trial| {
                let rec = sample_record(
                    |t| z[times.partition_point(|x| *x < t)],
                    &times,
                    Some(ne),
                    Observable::Z,
                    derive_seed(3111, trial, salt),
                )
                .unwrap();
                match fit_signal(&[rec], &FitTemplate::qubit_generic()) {
                    Ok(model) => {
                        let g = (model.basis[1].gamma - gamma) / gamma;
                        let w = (model.basis[1].omega - omega) / omega;
                        let d = (model.basis[3].gamma - delta) / delta;
                        (g * g + w * w + d * d).sqrt()
                    }
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[errs.len() / 2]
    };

    let e100 = median_err(100, 0);
    let e1000 = median_err(1000, 1);
    let e10000 = median_err(10000, 2);
    assert!(
        e100 >= e1000 && e1000 >= e10000,
        "medians not monotone: {e100:.4} {e1000:.4} {e10000:.4}"
    );
}
