//! Propagation against an independent adaptive Runge–Kutta oracle, and the
//! contraction property of physical models.

mod common;

use blochid_core::lindblad::{build_bloch, steady_state, BasisSet, BlochModel};
use blochid_core::measurement::lds_times;
use blochid_core::models::model1;
use blochid_core::propagation::{eigenstructure, propagate};
use common::{random_physical_model, random_physical_spec, rk_trajectory};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn model1_matches_rk_oracle() {
    let m = model1();
    let r0 = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let times = lds_times(400, 50.0).unwrap();
    let traj = propagate(&m, &r0, &times).unwrap();
    let oracle = rk_trajectory(m.a(), m.c(), &r0, &times, 1e-12);
    let mut max_dev = 0.0f64;
    for (k, y) in oracle.iter().enumerate() {
        for i in 0..3 {
            max_dev = max_dev.max((traj.states()[(i, k)] - y[i]).abs());
        }
    }
    assert!(max_dev < 1e-8, "max deviation {max_dev}");
}

#[test]
fn random_models_match_rk_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = random_physical_model(&mut rng);
        let slowest = eigenstructure(&m).slowest_rate().max(1e-4);
        let horizon = (3.0 / slowest).min(100.0);
        let r0 = DVector::from_fn(3, |_, _| rng.gen::<f64>() * 1.4 - 0.7);
        let times: Vec<f64> = (1..=40).map(|k| horizon * k as f64 / 40.0).collect();
        let traj = propagate(&m, &r0, &times).unwrap();
        let oracle = rk_trajectory(m.a(), m.c(), &r0, &times, 1e-12);
        for (k, y) in oracle.iter().enumerate() {
            for i in 0..3 {
                worst = worst.max((traj.states()[(i, k)] - y[i]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "worst deviation {worst}");
}

#[test]
fn physical_models_contract_the_bloch_ball() {
    // Unnormalised qubit coordinates: the physical state set is the unit
    // ball, and Lindblad-generated dynamics never leave it.
    let basis = BasisSet::generalized_gell_mann(2);
    let mut rng = ChaCha8Rng::seed_from_u64(7177);
    for _ in 0..40 {
        let spec = random_physical_spec(&mut rng, 1.2, 0.3);
        let built = build_bloch(&spec, &basis).unwrap();
        let m = BlochModel::new(built.a().clone(), built.c() * 2f64.sqrt()).unwrap();
        // Random state inside the ball.
        let r0 = loop {
            let v = DVector::from_fn(3, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            if v.norm() <= 1.0 {
                break v;
            }
        };
        let times: Vec<f64> = (0..=50).map(|k| 2.0 * k as f64).collect();
        let traj = propagate(&m, &r0, &times).unwrap();
        for k in 0..times.len() {
            let norm = traj.states().column(k).norm();
            assert!(
                norm <= 1.0 + 1e-9,
                "|r| = {norm} at t = {} for a physical model",
                times[k]
            );
        }
    }
}

#[test]
fn steady_state_residuals_are_tiny() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let m = random_physical_model(&mut rng);
        let ss = steady_state(&m).unwrap();
        let resid = (m.a() * &ss.point + m.c()).norm();
        assert!(resid < 1e-10, "steady-state residual {resid}");
    }
}
