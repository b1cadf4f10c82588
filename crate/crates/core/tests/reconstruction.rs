//! Reconstruction round trips at integration scale: noiseless exactness on
//! random generic physical models, and the shot-noise scaling trend.

mod common;

use std::time::Instant;

use blochid_core::lindblad::steady_state;
use blochid_core::measurement::{derive_seed, lds_times, sample_record, Observable};
use blochid_core::models::{model1, z_start};
use blochid_core::propagation::{eigenstructure, propagate, signal_form};
use blochid_core::recon_full::{reconstruct_full, Identifiability};
use blochid_core::signal::{fit_signal, FitTemplate, SignalModel};
use common::random_generic_setup;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const XYZ: [Observable; 3] = [Observable::X, Observable::Y, Observable::Z];

#[test]
fn noiseless_round_trip_on_random_generic_models() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (truth, r0) = random_generic_setup(&mut rng);
        let ss = steady_state(&truth).unwrap().point;
        let st = eigenstructure(&truth);
        let desc = signal_form(&st, &r0, &ss).unwrap();
        let signal = SignalModel::from_descriptor(&desc, &XYZ).unwrap();
        let rec = reconstruct_full(&signal, &r0).unwrap();
        assert_eq!(rec.identifiable, Identifiability::Full);
        let err = rec.model.as_ref().unwrap().relative_error(&truth);
        worst = worst.max(err);
    }
    assert!(worst < 1e-8, "worst round-trip error {worst}");
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "round-trip property took {elapsed:?}"
    );
}

/// One full-information shot-noise trial on Model 1.
fn model1_trial(n_times: usize, n_repeats: u64, seed: u64, trial: u64) -> f64 {
    let truth = model1();
    let r0 = z_start();
    let times = lds_times(n_times, 50.0).unwrap();
    let traj = propagate(&truth, &r0, &times).unwrap();
    let records: Vec<_> = XYZ
        .iter()
        .enumerate()
        .map(|(i, &obs)| {
            let vals = traj.component(i);
            sample_record(
                |t| vals[times.partition_point(|x| *x < t)],
                &times,
                Some(n_repeats),
                obs,
                derive_seed(seed, trial, i as u64),
            )
            .unwrap()
        })
        .collect();
    let Ok(signal) = fit_signal(&records, &FitTemplate::qubit_generic()) else {
        return f64::INFINITY;
    };
    match reconstruct_full(&signal, &r0) {
        Ok(rec) => rec
            .model
            .map_or(f64::INFINITY, |m| m.relative_error(&truth)),
        Err(_) => f64::INFINITY,
    }
}

#[test]
fn reconstruction_error_improves_with_repetitions() {
    let median = |ne: u64, salt: u64| -> f64 {
        let mut errs: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|trial| model1_trial(1000, ne, 555 + salt, trial))
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[errs.len() / 2]
    };
    let e1000 = median(1000, 0);
    let e5000 = median(5000, 1);
    assert!(
        e5000 < e1000,
        "median error did not improve: N_e=1000 → {e1000:.5}, N_e=5000 → {e5000:.5}"
    );
}
