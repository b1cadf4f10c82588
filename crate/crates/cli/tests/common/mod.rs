//! Shared test support: an independent adaptive Runge–Kutta oracle for the
//! Bloch ODE and a generator of random physical qubit models.

#![allow(dead_code)]

use blochid_core::lindblad::{build_bloch, BasisSet, BlochModel, LindbladSpec};
use blochid_core::linalg::{CMat, DMat, DVec};
use blochid_core::propagation::eigenstructure;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dormand–Prince 5(4) adaptive integration of `ṙ = A r + c` from `r(0)`,
/// reporting the state at each requested (ascending) time. Step control on
/// the embedded 4th-order error with absolute tolerance `tol`.
pub fn rk_trajectory(a: &DMat, c: &DVec, r0: &DVec, times: &[f64], tol: f64) -> Vec<DVec> {
    let f = |r: &DVec| a * r + c;

    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = r0.clone();
    let mut h: f64 = 1e-3;

    for &target in times {
        assert!(target >= t, "times must be ascending");
        while t < target {
            let mut step = h.min(target - t);
            loop {
                let (y5, err) = dp_step(&f, &y, step);
                let scale = tol * (1.0 + y.norm());
                if err <= scale || step < 1e-13 {
                    t += step;
                    y = y5;
                    // PI-ish growth, clamped.
                    let factor = if err > 0.0 {
                        0.9 * (scale / err).powf(0.2)
                    } else {
                        5.0
                    };
                    h = (step * factor.clamp(0.2, 5.0)).min(1.0);
                    break;
                }
                step *= 0.5 * (scale / err).powf(0.25).clamp(0.1, 0.7);
            }
        }
        out.push(y.clone());
    }
    out
}

fn dp_step<F>(f: &F, y: &DVec, h: f64) -> (DVec, f64)
where
    F: Fn(&DVec) -> DVec,
{
    // Dormand–Prince coefficients (autonomous right-hand side).
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (h / 5.0)));
    let k3 = f(&(y + &k1 * (3.0 * h / 40.0) + &k2 * (9.0 * h / 40.0)));
    let k4 = f(&(y + &k1 * (44.0 * h / 45.0) - &k2 * (56.0 * h / 15.0) + &k3 * (32.0 * h / 9.0)));
    let k5 = f(&(y
        + &k1 * (19372.0 * h / 6561.0)
        - &k2 * (25360.0 * h / 2187.0)
        + &k3 * (64448.0 * h / 6561.0)
        - &k4 * (212.0 * h / 729.0)));
    let k6 = f(&(y
        + &k1 * (9017.0 * h / 3168.0)
        - &k2 * (355.0 * h / 33.0)
        + &k3 * (46732.0 * h / 5247.0)
        + &k4 * (49.0 * h / 176.0)
        - &k5 * (5103.0 * h / 18656.0)));
    let y5 = y
        + &k1 * (35.0 * h / 384.0)
        + &k3 * (500.0 * h / 1113.0)
        + &k4 * (125.0 * h / 192.0)
        - &k5 * (2187.0 * h / 6784.0)
        + &k6 * (11.0 * h / 84.0);
    let k7 = f(&y5);
    let y4 = y
        + &k1 * (5179.0 * h / 57600.0)
        + &k3 * (7571.0 * h / 16695.0)
        + &k4 * (393.0 * h / 640.0)
        - &k5 * (92097.0 * h / 339200.0)
        + &k6 * (187.0 * h / 2100.0)
        + &k7 * (h / 40.0);
    let err = (&y5 - y4).norm();
    (y5, err)
}

/// Random physical qubit Lindblad spec: Gaussian Hamiltonian coefficients
/// and a positive semidefinite GKS matrix `f = G G†`.
pub fn random_physical_spec(rng: &mut ChaCha8Rng, h_scale: f64, f_scale: f64) -> LindbladSpec {
    let h = DVec::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal) * h_scale);
    let g = CMat::from_fn(3, 3, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * f_scale
    });
    let f = &g * g.adjoint();
    LindbladSpec::new(2, h, 0.0, f).expect("valid spec")
}

/// Random physical qubit model with the inhomogeneous term rescaled into
/// the unnormalised-Pauli convention (components bounded by the unit ball).
pub fn random_physical_model(rng: &mut ChaCha8Rng) -> BlochModel {
    let basis = BasisSet::generalized_gell_mann(2);
    let spec = random_physical_spec(rng, 1.2, 0.25);
    let m = build_bloch(&spec, &basis).expect("buildable");
    BlochModel::new(m.a().clone(), m.c() * 2f64.sqrt()).unwrap()
}

/// Random generic physical model with well-separated eigenvalues, a
/// moderately conditioned eigenbasis, and an initial state overlapping all
/// eigenvectors. Used for noiseless round-trip properties.
pub fn random_generic_setup(rng: &mut ChaCha8Rng) -> (BlochModel, DVec) {
    loop {
        let model = random_physical_model(rng);
        let st = eigenstructure(&model);
        if !st.is_generic() {
            continue;
        }
        let eigs = st.eigenvalues();
        let scale = model.a().norm().max(1e-12);
        let mut min_gap = f64::INFINITY;
        for i in 0..eigs.len() {
            for j in (i + 1)..eigs.len() {
                min_gap = min_gap.min((eigs[i] - eigs[j]).norm());
            }
        }
        if min_gap < 1e-3 * scale {
            continue;
        }
        // Slow enough that signals are observable, fast enough to decay.
        if st.slowest_rate() < 1e-4 {
            continue;
        }
        let r0 = DVector::from_fn(3, |_, _| rng.gen::<f64>() * 1.2 - 0.6);
        if r0.norm() > 0.95 {
            continue;
        }
        let ss = blochid_core::lindblad::steady_state(&model).unwrap().point;
        let st2 = eigenstructure(&model);
        let desc = blochid_core::propagation::signal_form(&st2, &r0, &ss).unwrap();
        if !desc.all_overlaps_nonzero() {
            continue;
        }
        return (model, r0);
    }
}
