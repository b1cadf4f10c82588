//! Built-in qubit benchmark models and the two structural model families.
//!
//! The families mirror the physically motivated priors used by the
//! partial-information reconstruction: dephasing along an arbitrary axis,
//! and dephasing plus relaxation along the measurement (z) basis. Each
//! family exists both as a Lindblad coefficient spec (compiled through
//! [`build_bloch`]) and as the explicit closed-form generator pair; tests
//! hold the two routes equal.

use num_complex::Complex64;

use crate::lindblad::{BlochModel, LindbladSpec};
use crate::linalg::{CMat, DMat, DVec};

/// Lindblad spec for a qubit with Hamiltonian `½(hx σx + hy σy + hz σz)`
/// and dephasing operator `(α σx + β σy + γ σz)/√2`, `axis = (α, β, γ)`.
pub fn dephasing_spec(h: [f64; 3], axis: [f64; 3]) -> LindbladSpec {
    let h_coeffs = DVec::from_column_slice(&h) / 2f64.sqrt();
    let f = CMat::from_fn(3, 3, |m, n| Complex64::new(axis[n] * axis[m], 0.0));
    LindbladSpec::new(2, h_coeffs, 0.0, f).expect("valid dephasing spec")
}

/// Closed-form generator pair of the dephasing family (`c = 0`).
pub fn dephasing_family(h: [f64; 3], axis: [f64; 3]) -> BlochModel {
    let [hx, hy, hz] = h;
    let [al, be, ga] = axis;
    let a = DMat::from_row_slice(
        3,
        3,
        &[
            -(be * be + ga * ga),
            -hz + al * be,
            hy + al * ga,
            hz + al * be,
            -(al * al + ga * ga),
            -hx + be * ga,
            -hy + al * ga,
            hx + be * ga,
            -(al * al + be * be),
        ],
    );
    BlochModel::new(a, DVec::zeros(3)).expect("finite entries")
}

/// Lindblad spec for a qubit with Hamiltonian `½ h·σ`, dephasing at rate
/// `Γ` along z, and relaxation channels `|0⟩⟨1|` at `γ₁` (emission) and
/// `|1⟩⟨0|` at `γ₂` (absorption).
pub fn relaxation_spec(h: [f64; 3], big_gamma: f64, gamma1: f64, gamma2: f64) -> LindbladSpec {
    let h_coeffs = DVec::from_column_slice(&h) / 2f64.sqrt();
    let mut f = CMat::zeros(3, 3);
    let sum = (gamma1 + gamma2) / 2.0;
    let diff = (gamma1 - gamma2) / 2.0;
    f[(0, 0)] = Complex64::new(sum, 0.0);
    f[(1, 1)] = Complex64::new(sum, 0.0);
    f[(2, 2)] = Complex64::new(2.0 * big_gamma, 0.0);
    f[(0, 1)] = Complex64::new(0.0, diff);
    f[(1, 0)] = Complex64::new(0.0, -diff);
    LindbladSpec::new(2, h_coeffs, 0.0, f).expect("valid relaxation spec")
}

/// Closed-form generator pair of the measurement-basis relaxation family:
/// transverse decay `Γ_eff` on x and y, longitudinal decay `γ_s` on z, and
/// inhomogeneous pumping `Δγ` along z.
pub fn relaxation_family(
    h: [f64; 3],
    gamma_eff: f64,
    gamma_sum: f64,
    delta_gamma: f64,
) -> BlochModel {
    let [hx, hy, hz] = h;
    let a = DMat::from_row_slice(
        3,
        3,
        &[
            -gamma_eff, -hz, hy, //
            hz, -gamma_eff, -hx, //
            -hy, hx, -gamma_sum,
        ],
    );
    let c = DVec::from_column_slice(&[0.0, 0.0, delta_gamma]);
    BlochModel::new(a, c).expect("finite entries")
}

/// Generic benchmark model: a slow real mode and a fast precession pair,
/// with a small inhomogeneous term.
pub fn model1() -> BlochModel {
    BlochModel::new(
        DMat::from_row_slice(
            3,
            3,
            &[
                -0.0650, -2.0000, 2.0300, //
                2.0000, -0.0650, -4.0000, //
                -1.9700, 4.0000, -0.0900,
            ],
        ),
        DVec::from_column_slice(&[-0.0424, 0.0, 0.0636]),
    )
    .expect("finite entries")
}

/// Dephasing benchmark model: the dephasing family at
/// `h = (2, 0, 2)`, `axis = (0.1, 0.2, 0.2)`.
pub fn model2() -> BlochModel {
    BlochModel::new(
        DMat::from_row_slice(
            3,
            3,
            &[
                -0.08, -1.98, 0.02, //
                2.02, -0.05, -1.96, //
                0.02, 2.04, -0.05,
            ],
        ),
        DVec::zeros(3),
    )
    .expect("finite entries")
}

/// The generating parameters of [`model2`]: `(h, axis)`.
pub fn model2_parameters() -> ([f64; 3], [f64; 3]) {
    ([2.0, 0.0, 2.0], [0.1, 0.2, 0.2])
}

/// Relaxation benchmark matrix, stored verbatim as a raw generator pair.
///
/// Kept exactly as printed for algebraic benchmarks (Laplace-domain
/// identification, coefficient traces). Note that this matrix is
/// dynamically unstable — it has a complex eigenvalue pair with positive
/// real part and a steady state outside the Bloch ball — so it cannot be
/// sampled by projective measurement; use [`model3_physical`] for
/// shot-noise benchmarks.
pub fn model3() -> BlochModel {
    BlochModel::new(
        DMat::from_row_slice(
            3,
            3,
            &[
                -0.25, -3.00, 2.0, //
                3.00, -0.25, -1.0, //
                -2.00, -1.00, 0.1,
            ],
        ),
        DVec::from_column_slice(&[0.0, 0.0, 0.1 / 2f64.sqrt()]),
    )
    .expect("finite entries")
}

/// Stable relaxation benchmark: the measurement-basis relaxation family at
/// `Γ_eff = 0.25`, `γ_s = 0.1`, `Δγ = 0.1/√2`, `h_z = 3`,
/// `h_x² + h_y² = 5` (placed at the `h_y = 0` gauge point).
///
/// This is the structurally consistent counterpart of [`model3`]: same
/// transverse/longitudinal decay scales and the same identifiable
/// parameter set, but contractive on the Bloch ball so that stroboscopic
/// sampling is well defined.
pub fn model3_physical() -> BlochModel {
    relaxation_family([5f64.sqrt(), 0.0, 3.0], 0.25, 0.1, 0.1 / 2f64.sqrt())
}

/// z-basis initial state `(0, 0, 1)`.
pub fn z_start() -> DVec {
    DVec::from_column_slice(&[0.0, 0.0, 1.0])
}

/// x-basis initial state `(1, 0, 0)`.
pub fn x_start() -> DVec {
    DVec::from_column_slice(&[1.0, 0.0, 0.0])
}

/// Look up a built-in benchmark model by CLI name.
pub fn builtin(name: &str) -> Option<BlochModel> {
    match name {
        "model1" => Some(model1()),
        "model2" => Some(model2()),
        "model3" => Some(model3()),
        "model3-physical" | "model3_physical" => Some(model3_physical()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{build_bloch, steady_state, BasisSet};
    use crate::propagation::{eigenstructure, propagate};
    use approx::assert_abs_diff_eq;

    #[test]
    fn model2_matches_both_construction_routes() {
        let (h, axis) = model2_parameters();
        let family = dephasing_family(h, axis);
        let printed = model2();
        assert!((family.a() - printed.a()).amax() < 1e-12);
        assert!(family.c().amax() < 1e-15);

        let basis = BasisSet::generalized_gell_mann(2);
        let built = build_bloch(&dephasing_spec(h, axis), &basis).unwrap();
        assert!((built.a() - printed.a()).amax() < 1e-12);
        assert!(built.c().amax() < 1e-12);
    }

    #[test]
    fn relaxation_routes_agree() {
        let h = [1.0, 2.0, 3.0];
        let (big_gamma, g1, g2) = (0.05, 0.08, 0.03);
        let basis = BasisSet::generalized_gell_mann(2);
        let built = build_bloch(&relaxation_spec(h, big_gamma, g1, g2), &basis).unwrap();

        let gamma_sum = g1 + g2;
        let gamma_eff = 2.0 * big_gamma + gamma_sum / 2.0;
        let delta_gamma = (g1 - g2) / 2f64.sqrt();
        let family = relaxation_family(h, gamma_eff, gamma_sum, delta_gamma);

        assert!((built.a() - family.a()).amax() < 1e-12);
        assert!((built.c() - family.c()).amax() < 1e-12);
        // Structure checks: equal transverse decay, longitudinal decay, and
        // the z-pumping term.
        assert_abs_diff_eq!(built.a()[(0, 0)], -gamma_eff, epsilon = 1e-12);
        assert_abs_diff_eq!(built.a()[(1, 1)], -gamma_eff, epsilon = 1e-12);
        assert_abs_diff_eq!(built.a()[(2, 2)], -gamma_sum, epsilon = 1e-12);
        assert_abs_diff_eq!(built.c()[2], delta_gamma, epsilon = 1e-12);
    }

    #[test]
    fn model3_kept_verbatim() {
        let m = model3();
        assert_abs_diff_eq!(m.a()[(2, 2)], 0.1, epsilon = 0.0);
        assert_abs_diff_eq!(m.a()[(2, 1)], -1.0, epsilon = 0.0);
        assert_abs_diff_eq!(m.c()[2], 0.1 / 2f64.sqrt(), epsilon = 0.0);
    }

    #[test]
    fn model3_raw_is_unstable() {
        let st = eigenstructure(&model3());
        let max_re = st
            .eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_re > 0.0, "expected an unstable mode, got {max_re}");
    }

    #[test]
    fn model3_physical_is_contractive_and_sampleable() {
        let m = model3_physical();
        let st = eigenstructure(&m);
        let max_re = st
            .eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_re < 0.0, "unstable mode {max_re}");
        let ss = steady_state(&m).unwrap().point;
        assert!(ss.norm() < 1.0, "steady state outside the ball: {ss}");
        // A z-basis start stays inside the unit ball over the benchmark
        // horizon, so projective-measurement probabilities are valid.
        let times: Vec<f64> = (0..=600).map(|k| k as f64 * 0.025).collect();
        let traj = propagate(&m, &z_start(), &times).unwrap();
        for k in 0..times.len() {
            let norm = traj.states().column(k).norm();
            assert!(norm <= 1.0 + 1e-9, "|r| = {norm} at t = {}", times[k]);
        }
    }

    #[test]
    fn model3_physical_matches_identifiable_set_of_raw() {
        let raw = model3();
        let phys = model3_physical();
        // Same transverse decay, |h_z|, and h_x²+h_y².
        assert_abs_diff_eq!(phys.a()[(0, 0)], raw.a()[(0, 0)], epsilon = 0.0);
        assert_abs_diff_eq!(phys.a()[(0, 1)], raw.a()[(0, 1)], epsilon = 0.0);
        let q_raw = raw.a()[(0, 2)].powi(2) + raw.a()[(1, 2)].powi(2);
        let q_phys = phys.a()[(0, 2)].powi(2) + phys.a()[(1, 2)].powi(2);
        assert_abs_diff_eq!(q_phys, q_raw, epsilon = 1e-12);
        assert_abs_diff_eq!(phys.c()[2], raw.c()[2], epsilon = 0.0);
    }

    #[test]
    fn builtin_lookup() {
        assert!(builtin("model1").is_some());
        assert!(builtin("model3-physical").is_some());
        assert!(builtin("nope").is_none());
    }
}
