//! Laplace-domain identification from partial state information.
//!
//! The Laplace transform of the Bloch equation, `s R(s) − r(0) = A R(s) +
//! c/s`, turns identification into algebra. With the full `R(s)` available
//! at `d+1` points the generator pair follows from one linear solve
//! ([`laplace_point_identify`]). With a single measured component the
//! fitted signal's rational transform supplies seven coefficients
//! (`C₀..C₃`, `D₁..D₃`); equating them with structural expressions in the
//! model parameters gives a small nonlinear system that a model-family
//! prior can make solvable ([`build_coefficient_system`], [`solve_model`]).
//! Two measured components constrain two numerators over a shared
//! denominator ([`reconstruct_two_trace`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::BlochModel;
use crate::linalg::{cubic_real_roots, faddeev_leverrier, poly_mul, DMat, DVec};
use crate::models::{dephasing_family, relaxation_family};
use crate::optim::NelderMead;
use crate::recon_full::Identifiability;
use crate::signal::{laplace_of, RationalSignal, SignalModel};

/// Residual (RMS over the coefficient equations, relative to the observed
/// scale) above which every solver start counts as failed.
const CONVERGENCE_THRESHOLD: f64 = 0.25;

/// Fixed seed for the deterministic multi-start perturbations.
const MULTISTART_SEED: u64 = 0x5eed_cafe;

/// Evaluate the Laplace transform `R(s) = (sI − A)⁻¹ (r0 + c/s)` of a
/// model trajectory. `s` must be non-zero and not an eigenvalue of `A`.
pub fn evaluate_model_laplace(model: &BlochModel, r0: &DVec, s: f64) -> Result<DVec> {
    if s == 0.0 {
        return Err(Error::InvalidInput("s must be non-zero".into()));
    }
    let d = model.dim();
    let shifted = DMat::identity(d, d) * s - model.a();
    let rhs = r0 + model.c() / s;
    shifted
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularC(format!("s = {s} is an eigenvalue of A")))
}

/// Exact identification of `T = (A, c)` from `d+1` Laplace-domain samples.
///
/// Builds `C` with columns `(s_k R(s_k); 1)` and `D` with columns
/// `s_k² R(s_k) − s_k r(0)`; then `D = T C` and `T = D C⁻¹` whenever `C`
/// is invertible.
pub fn laplace_point_identify<F>(oracle: F, s_points: &[f64], r0: &DVec) -> Result<BlochModel>
where
    F: Fn(f64) -> DVec,
{
    let d = r0.len();
    if s_points.len() != d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "need {} sample points for dimension {d}, got {}",
            d + 1,
            s_points.len()
        )));
    }
    for (i, a) in s_points.iter().enumerate() {
        for b in &s_points[i + 1..] {
            if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::SingularC(format!("repeated sample point s = {a}")));
            }
        }
    }

    let mut c_mat = DMat::zeros(d + 1, d + 1);
    let mut d_mat = DMat::zeros(d, d + 1);
    for (k, &s) in s_points.iter().enumerate() {
        let r = oracle(s);
        if r.len() != d {
            return Err(Error::DimensionMismatch(
                "oracle returned wrong dimension".into(),
            ));
        }
        for i in 0..d {
            c_mat[(i, k)] = s * r[i];
            d_mat[(i, k)] = s * s * r[i] - s * r0[i];
        }
        c_mat[(d, k)] = 1.0;
    }

    // T = D C⁻¹, computed as a minimum-norm least-squares solve so that a
    // statically trivial data set (D = 0, which forces C rank-deficient
    // because every column is (r0; 1)) identifies the zero generator.
    let svd = c_mat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank_tol = smax * 1e-12 * (d + 1) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol).count();
    if rank < d + 1 && d_mat.norm() > 1e-12 * (1.0 + smax) {
        return Err(Error::SingularC(
            "sample matrix C is singular for non-static data".into(),
        ));
    }
    let u = svd.u.as_ref().expect("svd with U");
    let v_t = svd.v_t.as_ref().expect("svd with V");
    // Tᵀ = C⁻ᵀ Dᵀ column by column through the pseudo-inverse.
    let mut t = DMat::zeros(d, d + 1);
    for row in 0..d {
        let rhs = d_mat.row(row).transpose();
        let mut sol = DVec::zeros(d + 1);
        for i in 0..=d {
            let s = svd.singular_values[i];
            if s > rank_tol {
                let coeff = v_t.row(i).transpose().dot(&rhs) / s;
                sol += u.column(i) * coeff;
            }
        }
        // Solve xᵀ C = dᵀ, i.e. Cᵀ x = d: pseudo-inverse of Cᵀ swaps U and V.
        for k in 0..=d {
            t[(row, k)] = sol[k];
        }
    }
    let residual = (&d_mat - &t * &c_mat).norm();
    if residual > 1e-6 * (1.0 + d_mat.norm()) {
        return Err(Error::SingularC(format!(
            "ill-conditioned sample matrix (residual {residual:.3e})"
        )));
    }
    let a = t.view((0, 0), (d, d)).into_owned();
    let c = DVec::from_fn(d, |i, _| t[(i, d)]);
    BlochModel::new(a, c)
}

/// Rational form of one trajectory component,
/// `R_i(s) = e_iᵀ adj(sI−A)(s r0 + c) / (s · det(sI−A))`,
/// expanded by the Faddeev–LeVerrier recursion. Monic denominator.
pub fn rational_coefficients(model: &BlochModel, component: usize, r0: &DVec) -> RationalSignal {
    let d = model.dim();
    assert!(component < d, "component out of range");
    let (charpoly, adj) = faddeev_leverrier(model.a());
    // numerator(s) = Σ_k s^k · (row_k·c) + Σ_k s^{k+1} · (row_k·r0)
    let mut numerator = vec![0.0; d + 1];
    for (k, n_k) in adj.iter().enumerate() {
        let row = n_k.row(component);
        let rc: f64 = row.iter().zip(model.c().iter()).map(|(a, b)| a * b).sum();
        let rr: f64 = row.iter().zip(r0.iter()).map(|(a, b)| a * b).sum();
        numerator[k] += rc;
        numerator[k + 1] += rr;
    }
    let denominator = poly_mul(&[0.0, 1.0], &charpoly);
    RationalSignal {
        numerator,
        denominator,
    }
}

/// The seven observable coefficients of a generic qubit trace,
/// `(C₀, C₁, C₂, C₃)` over `(D₁, D₂, D₃)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ObservedCoefficients {
    pub c: [f64; 4],
    pub d: [f64; 3],
}

impl ObservedCoefficients {
    pub fn from_rational(r: &RationalSignal) -> Result<Self> {
        let (c, d) = r.quartic_coefficients()?;
        Ok(Self { c, d })
    }

    fn scale(&self) -> f64 {
        let ss: f64 = self.c.iter().chain(self.d.iter()).map(|x| x * x).sum();
        1.0 + ss.sqrt()
    }
}

/// Structural coefficients of the z-trace of a general qubit model with
/// known initial state — the generic 6-equation system (plus the trivially
/// known `C₃ = r_z(0)`).
pub fn generic_coefficients(model: &BlochModel, r0: &DVec) -> ObservedCoefficients {
    assert_eq!(model.dim(), 3, "generic qubit system is 3-dimensional");
    let a = model.a();
    let c = model.c();
    let (rx, ry, rz) = (r0[0], r0[1], r0[2]);
    let (a11, a12, a13) = (a[(0, 0)], a[(0, 1)], a[(0, 2)]);
    let (a21, a22, a23) = (a[(1, 0)], a[(1, 1)], a[(1, 2)]);
    let (a31, a32, a33) = (a[(2, 0)], a[(2, 1)], a[(2, 2)]);
    let (c1, c2, c3) = (c[0], c[1], c[2]);

    let c0 = (a21 * a32 - a22 * a31) * c1 + (a12 * a31 - a11 * a32) * c2
        + (a11 * a22 - a12 * a21) * c3;
    let c1_coeff = a31 * c1 + a32 * c2 - (a11 + a22) * c3
        + (a32 * a21 - a31 * a22) * rx
        + (a31 * a12 - a32 * a11) * ry
        + (a11 * a22 - a12 * a21) * rz;
    let c2_coeff = c3 + a31 * rx + a32 * ry - (a11 + a22) * rz;
    let c3_coeff = rz;
    let d1 = a13 * a31 * a22 - a12 * a23 * a31 - a13 * a21 * a32 + a11 * a23 * a32
        + a12 * a21 * a33
        - a11 * a22 * a33;
    let d2 = -a12 * a21 - a13 * a31 - a23 * a32 + a22 * a33 + a11 * (a22 + a33);
    let d3 = -a11 - a22 - a33;
    ObservedCoefficients {
        c: [c0, c1_coeff, c2_coeff, c3_coeff],
        d: [d1, d2, d3],
    }
}

/// Structural model family assumed by a partial-information reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Fully general qubit generator: 12 unknowns, exposed only as the
    /// under-determined 6-equation system.
    GenericQubit,
    /// Unknown Hamiltonian plus dephasing along an unknown axis (6
    /// parameters, `c = 0`).
    DephasingGeneralBasis,
    /// Unknown Hamiltonian plus dephasing and relaxation along the
    /// measurement basis (6 parameters).
    RelaxationDephasingZ,
}

/// Initial-state variants with printed structural systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StartAxis {
    ZPlus,
    XPlus,
}

fn classify_start(r0: &DVec) -> Option<StartAxis> {
    let z = DVec::from_column_slice(&[0.0, 0.0, 1.0]);
    let x = DVec::from_column_slice(&[1.0, 0.0, 0.0]);
    if (r0 - z).norm() < 1e-9 {
        Some(StartAxis::ZPlus)
    } else if (r0 - x).norm() < 1e-9 {
        Some(StartAxis::XPlus)
    } else {
        None
    }
}

/// A single-trace coefficient-matching system: observed rational
/// coefficients on one side, a structural model family on the other.
#[derive(Clone, Debug)]
pub struct CoefficientSystem {
    pub observed: ObservedCoefficients,
    pub prior: Prior,
    pub initial_state: DVec,
    /// Bloch index of the measured component.
    pub observed_component: usize,
}

impl CoefficientSystem {
    /// Assemble a system directly from observed coefficients.
    pub fn from_observed(observed: ObservedCoefficients, prior: Prior, r0: DVec) -> Self {
        Self {
            observed,
            prior,
            initial_state: r0,
            observed_component: 2,
        }
    }

    /// Human-readable account of equation and unknown counts.
    pub fn describe(&self) -> String {
        match self.prior {
            Prior::GenericQubit => {
                "6 equations (C0..C2, D1..D3), 12 unknowns (9 in A, 3 in c): under-determined"
                    .into()
            }
            Prior::DephasingGeneralBasis => {
                "5 non-trivial equations (C1, C2, D1..D3; C0 = 0), 6 parameters with a \
                 1-parameter rotation gauge"
                    .into()
            }
            Prior::RelaxationDephasingZ => {
                "6 equations (C0..C2, D1..D3), 6 parameters with a 1-parameter rotation gauge"
                    .into()
            }
        }
    }
}

/// Structural coefficients of the dephasing family, z-trace from the
/// z-basis start: parameters `(hx, hy, hz, α, β, γ)` with `c = 0`.
pub fn dephasing_structural(h: [f64; 3], axis: [f64; 3]) -> ObservedCoefficients {
    let [hx, hy, hz] = h;
    let [al, be, ga] = axis;
    let s = al * al + be * be;
    let g2 = ga * ga;
    let c1 = hz * hz + g2 * (s + g2);
    let c2 = s + 2.0 * g2;
    let d1 = hz * hz * s + hy * hy * (al * al + g2) + hx * hx * (be * be + g2)
        - 2.0 * hx * hz * al * ga
        - 2.0 * hx * hy * al * be
        - 2.0 * hz * hy * be * ga;
    let d2 = hx * hx + hy * hy + hz * hz + s * s + g2 * (2.0 * s + g2);
    let d3 = 2.0 * (s + g2);
    ObservedCoefficients {
        c: [0.0, c1, c2, 1.0],
        d: [d1, d2, d3],
    }
}

/// Structural coefficients of the relaxation family for the z-basis or
/// x-basis start: parameters `(Γ_eff, γ_s, Δγ, hx, hy, hz)`.
///
/// The `D₂` expression is the exact specialisation of the generic system
/// to this family, `D₂ = Γ_eff² + 2Γ_eff γ_s + hx² + hy² + hz²`.
pub fn relaxation_structural(
    h: [f64; 3],
    gamma_eff: f64,
    gamma_sum: f64,
    delta_gamma: f64,
    start: bool, // true: z-basis start; false: x-basis start
) -> ObservedCoefficients {
    let [hx, hy, hz] = h;
    let g = gamma_eff;
    let p = g * g + hz * hz;
    let c0 = p * delta_gamma;
    let (c1, c2, c3) = if start {
        (
            2.0 * g * delta_gamma + p,
            delta_gamma + 2.0 * g,
            1.0,
        )
    } else {
        (
            2.0 * g * delta_gamma + hx * hz - hy * g,
            delta_gamma - hy,
            0.0,
        )
    };
    let d1 = gamma_sum * p + (hx * hx + hy * hy) * g;
    let d2 = g * g + 2.0 * g * gamma_sum + hx * hx + hy * hy + hz * hz;
    let d3 = 2.0 * g + gamma_sum;
    ObservedCoefficients {
        c: [c0, c1, c2, c3],
        d: [d1, d2, d3],
    }
}

/// Build a coefficient system from a fitted single-trace signal.
///
/// The signal must be a single component with the generic (non-polynomial)
/// basis; the prior/initial-state combination must be one with a printed
/// structural system: dephasing with the z-basis start, relaxation with the
/// z- or x-basis start, or the (under-determined) generic system for any
/// start.
pub fn build_coefficient_system(
    signal: &SignalModel,
    prior: Prior,
    r0: &DVec,
) -> Result<CoefficientSystem> {
    if signal.n_components() != 1 {
        return Err(Error::InvalidInput(format!(
            "single-trace system needs a 1-component signal, got {}",
            signal.n_components()
        )));
    }
    if r0.len() != 3 {
        return Err(Error::DimensionMismatch("qubit initial state expected".into()));
    }
    let start = classify_start(r0);
    match prior {
        Prior::GenericQubit => {}
        Prior::DephasingGeneralBasis => {
            if start != Some(StartAxis::ZPlus) {
                return Err(Error::UnsupportedPrior(
                    "dephasing prior has a structural system only for the z-basis start"
                        .into(),
                ));
            }
        }
        Prior::RelaxationDephasingZ => {
            if start.is_none() {
                return Err(Error::UnsupportedPrior(
                    "relaxation prior has structural systems only for z- or x-basis starts"
                        .into(),
                ));
            }
        }
    }
    let component = signal.components[0].index();
    if component != 2 {
        return Err(Error::UnsupportedPrior(
            "single-trace structural systems are written for the z component".into(),
        ));
    }
    let observed = ObservedCoefficients::from_rational(&laplace_of(signal, 0)?)?;
    Ok(CoefficientSystem {
        observed,
        prior,
        initial_state: r0.clone(),
        observed_component: component,
    })
}

/// Recovered structural parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParameterSet {
    Dephasing {
        hx: f64,
        hy: f64,
        hz: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    Relaxation {
        gamma_eff: f64,
        gamma_sum: f64,
        delta_gamma: f64,
        hx: f64,
        hy: f64,
        hz: f64,
    },
}

impl ParameterSet {
    pub fn rebuild(&self) -> BlochModel {
        match *self {
            ParameterSet::Dephasing {
                hx,
                hy,
                hz,
                alpha,
                beta,
                gamma,
            } => dephasing_family([hx, hy, hz], [alpha, beta, gamma]),
            ParameterSet::Relaxation {
                gamma_eff,
                gamma_sum,
                delta_gamma,
                hx,
                hy,
                hz,
            } => relaxation_family([hx, hy, hz], gamma_eff, gamma_sum, delta_gamma),
        }
    }

    fn to_vec(self) -> Vec<f64> {
        match self {
            ParameterSet::Dephasing {
                hx,
                hy,
                hz,
                alpha,
                beta,
                gamma,
            } => vec![hz, hx, gamma, alpha, beta, hy],
            ParameterSet::Relaxation {
                gamma_eff,
                gamma_sum,
                delta_gamma,
                hx,
                hy,
                hz,
            } => vec![gamma_eff, gamma_sum, delta_gamma, hz, hx, hy],
        }
    }

    /// Canonical representative of the discrete/gauge orbit: decay
    /// amplitudes non-negative, `h_z ≥ 0` via the compensated sign flips.
    fn canonicalize(&mut self) {
        match self {
            ParameterSet::Dephasing {
                hx,
                hy,
                hz,
                alpha,
                beta,
                gamma,
            } => {
                // Overall dephasing-operator sign is irrelevant.
                if *gamma < 0.0 || (*gamma == 0.0 && *alpha < 0.0) {
                    *alpha = -*alpha;
                    *beta = -*beta;
                    *gamma = -*gamma;
                }
                // (hz, α) → (−hz, −α) and (hx, α)→... the z-trace is
                // invariant under the reflection (hz, α) ↔ (−hz, −α) and
                // under β ↔ −β at the hy = 0 gauge.
                if *hy == 0.0 {
                    if *hz < 0.0 {
                        *hz = -*hz;
                        *alpha = -*alpha;
                    }
                    if *beta < 0.0 {
                        *beta = -*beta;
                    }
                    if *hx < 0.0 {
                        *hx = -*hx;
                        *alpha = -*alpha;
                        // Flipping hx is a π z-rotation combined with a
                        // reflection; at hy = 0 it maps α → −α.
                    }
                }
            }
            ParameterSet::Relaxation { hx, hy, hz, .. } => {
                if *hy == 0.0 {
                    if *hz < 0.0 {
                        *hz = -*hz;
                    }
                    if *hx < 0.0 {
                        *hx = -*hx;
                    }
                }
            }
        }
    }
}

/// Reflection through the coordinate plane orthogonal to `axis`, applied to
/// a family parameter set: the Hamiltonian components transform as a
/// pseudo-vector (all but `axis` negate) and the dephasing axis as a
/// vector (`axis` negates). Valid only when the reflection fixes both the
/// initial state and every observed component.
fn reflect_params(p: &ParameterSet, axis: usize) -> ParameterSet {
    let flip_h = |h: [f64; 3]| -> [f64; 3] {
        let mut out = [-h[0], -h[1], -h[2]];
        out[axis] = h[axis];
        out
    };
    match *p {
        ParameterSet::Dephasing {
            hx,
            hy,
            hz,
            alpha,
            beta,
            gamma,
        } => {
            let h = flip_h([hx, hy, hz]);
            let mut v = [alpha, beta, gamma];
            v[axis] = -v[axis];
            ParameterSet::Dephasing {
                hx: h[0],
                hy: h[1],
                hz: h[2],
                alpha: v[0],
                beta: v[1],
                gamma: v[2],
            }
        }
        ParameterSet::Relaxation {
            gamma_eff,
            gamma_sum,
            delta_gamma,
            hx,
            hy,
            hz,
        } => {
            let h = flip_h([hx, hy, hz]);
            // The inhomogeneous term lives on z; it negates only when the
            // z-axis itself is reflected.
            let dg = if axis == 2 { -delta_gamma } else { delta_gamma };
            ParameterSet::Relaxation {
                gamma_eff,
                gamma_sum,
                delta_gamma: dg,
                hx: h[0],
                hy: h[1],
                hz: h[2],
            }
        }
    }
}

/// Pick the canonical representative of the reflection orbit over the
/// axes that are neither observed nor populated in the initial state.
/// Such reflections leave every observed trace invariant, so the twins are
/// indistinguishable by construction.
fn canonicalize_reflections(p: &mut ParameterSet, observed: &[usize], r0: &DVec) {
    let allowed: Vec<usize> = (0..3)
        .filter(|axis| !observed.contains(axis) && r0[*axis].abs() < 1e-12)
        .collect();
    if allowed.is_empty() {
        return;
    }
    let key = |q: &ParameterSet| -> [f64; 6] {
        match *q {
            ParameterSet::Dephasing {
                hx,
                hy,
                hz,
                alpha,
                beta,
                gamma,
            } => [hz, hx, hy, gamma, alpha, beta],
            ParameterSet::Relaxation { hx, hy, hz, .. } => [hz, hx, hy, 0.0, 0.0, 0.0],
        }
    };
    let mut best = *p;
    for mask in 1u32..(1 << allowed.len()) {
        let mut cand = *p;
        for (bit, &axis) in allowed.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                cand = reflect_params(&cand, axis);
            }
        }
        if key(&cand) > key(&best) {
            best = cand;
        }
    }
    *p = best;
}

/// What a partial-information solve pinned down, and what it provably
/// could not.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GaugeReport {
    pub gauge_fixed: Vec<String>,
    pub identified: Vec<String>,
    pub unidentified: Vec<String>,
}

/// Solution of a coefficient-matching problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSolution {
    pub params: ParameterSet,
    pub gauge: GaugeReport,
    /// RMS residual of the coefficient equations, relative to the observed
    /// coefficient scale.
    pub residual: f64,
    pub identifiability: Identifiability,
    /// Runner-up parameter sets with their residuals.
    pub candidates: Vec<(ParameterSet, f64)>,
}

fn residual_rms(structural: &ObservedCoefficients, observed: &ObservedCoefficients) -> f64 {
    // Six matched equations: C0..C2 and D1..D3 (C3 is the known initial
    // value).
    let mut ss = 0.0;
    for k in 0..3 {
        ss += (structural.c[k] - observed.c[k]).powi(2);
    }
    for k in 0..3 {
        ss += (structural.d[k] - observed.d[k]).powi(2);
    }
    (ss / 6.0).sqrt()
}

fn dephasing_objective(v: &[f64], observed: &ObservedCoefficients) -> f64 {
    if v.iter().any(|x| x.abs() > 1e6) {
        return 1e30;
    }
    let s = dephasing_structural([v[1], 0.0, v[0]], [v[3], v[4], v[2]]);
    residual_rms(&s, observed)
}

fn relaxation_objective(
    v: &[f64],
    observed: &ObservedCoefficients,
    start: StartAxis,
    gauge_fixed_hy: bool,
) -> f64 {
    if v.iter().any(|x| x.abs() > 1e6) {
        return 1e30;
    }
    let hy = if gauge_fixed_hy { 0.0 } else { v[5] };
    let s = relaxation_structural(
        [v[4], hy, v[3]],
        v[0],
        v[1],
        v[2],
        start == StartAxis::ZPlus,
    );
    residual_rms(&s, observed)
}

/// Closed-form seed(s) for the dephasing system:
/// `γ² = C₂ − D₃/2`, `α²+β² = D₃ − C₂`, `h_z² = C₁ − γ²D₃/2`,
/// `h_x²+h_y² = D₂ − h_z² − (D₃/2)²`, and the relative azimuth from a
/// quadratic in `cos θ` supplied by `D₁`.
fn dephasing_seeds(obs: &ObservedCoefficients) -> Vec<Vec<f64>> {
    let [_, c1, c2, _] = obs.c;
    let [d1, d2, d3] = obs.d;
    let g2 = (c2 - d3 / 2.0).max(0.0);
    let gamma = g2.sqrt();
    let s = (d3 - c2).max(0.0);
    let hz2 = (c1 - g2 * d3 / 2.0).max(0.0);
    let hz = hz2.sqrt();
    let q = (d2 - hz2 - (d3 / 2.0).powi(2)).max(0.0);
    let hx = q.sqrt();

    let mut seeds = Vec::new();
    let qs = q * s;
    if qs > 1e-14 {
        let r = d1 - hz2 * s - q * g2;
        // qs·u² + 2γ h_z √(qs)·u + (R − qs) = 0.
        let b = 2.0 * gamma * hz * qs.sqrt();
        let disc = b * b - 4.0 * qs * (r - qs);
        if disc >= 0.0 {
            for sign in [1.0, -1.0] {
                let u = (-b + sign * disc.sqrt()) / (2.0 * qs);
                if u.abs() <= 1.0 + 1e-6 {
                    let u = u.clamp(-1.0, 1.0);
                    let alpha = s.sqrt() * u;
                    let beta = (s * (1.0 - u * u)).max(0.0).sqrt();
                    seeds.push(vec![hz, hx, gamma, alpha, beta]);
                }
            }
        }
    }
    if seeds.is_empty() {
        seeds.push(vec![hz, hx, gamma, s.sqrt(), 0.0]);
        seeds.push(vec![hz, hx, gamma, 0.0, s.sqrt()]);
    }
    seeds
}

/// Closed-form seeds for the relaxation system with the z-basis start:
/// eliminating `Δγ = C₂ − 2Γ`, `γ_s = D₃ − 2Γ` and
/// `h_z² + Γ² = C₁ − 2ΓΔγ + ...` reduces `C₀` to a cubic in `Γ_eff`:
/// `8Γ³ − 8C₂Γ² + 2(C₂² + C₁)Γ − (C₁C₂ − C₀) = 0`.
fn relaxation_seeds_z(obs: &ObservedCoefficients) -> Vec<Vec<f64>> {
    let [c0, c1, c2, _] = obs.c;
    let [_, d2, d3] = obs.d;
    let roots = cubic_real_roots(8.0, -8.0 * c2, 2.0 * (c2 * c2 + c1), -(c1 * c2 - c0));
    let mut seeds = Vec::new();
    for g in roots {
        let delta_gamma = c2 - 2.0 * g;
        let gamma_sum = d3 - 2.0 * g;
        let hz2 = (c1 - 2.0 * g * delta_gamma - g * g).max(0.0);
        let hz = hz2.sqrt();
        let q = (d2 - g * g - 2.0 * g * gamma_sum - hz2).max(0.0);
        seeds.push(vec![g, gamma_sum, delta_gamma, hz, q.sqrt()]);
    }
    if seeds.is_empty() {
        seeds.push(vec![d3 / 4.0, d3 / 2.0, c2 - d3 / 2.0, c1.abs().sqrt(), d2.abs().sqrt()]);
    }
    seeds
}

/// Heuristic seeds for the noise-sensitive x-basis-start relaxation
/// system: start from the `h_y = 0` reduction and let the solver move all
/// six parameters.
fn relaxation_seeds_x(obs: &ObservedCoefficients) -> Vec<Vec<f64>> {
    let [c0, c1, c2, _] = obs.c;
    let [_, d2, d3] = obs.d;
    let mut seeds = Vec::new();
    for frac in [0.1, 0.25, 0.4] {
        let g = frac * d3 / 2.0;
        let gamma_sum = d3 - 2.0 * g;
        let delta_gamma = c2; // hy ≈ 0 reduction
        let p = if delta_gamma.abs() > 1e-9 {
            (c0 / delta_gamma).max(0.0)
        } else {
            0.0
        };
        let hz = (p - g * g).max(0.0).sqrt();
        let hxhz = c1 - 2.0 * g * delta_gamma;
        let hx = if hz > 1e-9 { hxhz / hz } else { 0.0 };
        let q = (d2 - g * g - 2.0 * g * gamma_sum - hz * hz).max(0.0);
        let hy = (q - hx * hx).max(0.0).sqrt();
        for hy_sign in [1.0, -1.0] {
            seeds.push(vec![g, gamma_sum, delta_gamma, hz, hx, hy_sign * hy]);
        }
    }
    seeds
}

fn multistart_perturbations(seeds: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    if seeds.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MULTISTART_SEED);
    let mut out: Vec<Vec<f64>> = seeds.to_vec();
    let base = seeds.first().cloned().unwrap_or_default();
    for _ in 0..count {
        let parent = &seeds[rng.gen_range(0..seeds.len())];
        let v: Vec<f64> = parent
            .iter()
            .map(|&x| {
                let factor = 1.0 + 0.2 * (rng.gen::<f64>() * 2.0 - 1.0);
                let shift = 0.05 * (rng.gen::<f64>() * 2.0 - 1.0) * (1.0 + base[0].abs());
                x * factor + shift
            })
            .collect();
        out.push(v);
    }
    out
}

fn dephasing_gauge_report() -> GaugeReport {
    GaugeReport {
        gauge_fixed: vec![
            "hy = 0: azimuth reference attached to the transverse Hamiltonian".into(),
        ],
        identified: vec![
            "hz (up to a simultaneous sign flip with α)".into(),
            "hx² + hy²".into(),
            "γ (axial dephasing component)".into(),
            "α² + β² (transverse dephasing power)".into(),
            "relative azimuth between Hamiltonian and dephasing axis".into(),
        ],
        unidentified: vec![
            "absolute azimuth: the z-trace is invariant under simultaneous z-rotation \
             of (hx, hy) and (α, β)"
                .into(),
            "sign of β (reflection through the gauge plane)".into(),
        ],
    }
}

fn relaxation_gauge_report(start: StartAxis) -> GaugeReport {
    match start {
        StartAxis::ZPlus => GaugeReport {
            gauge_fixed: vec!["hy = 0".into()],
            identified: vec![
                "Γ_eff".into(),
                "γ_s".into(),
                "Δγ".into(),
                "|hz|".into(),
                "hx² + hy²".into(),
            ],
            unidentified: vec![
                "absolute azimuth of (hx, hy)".into(),
                "sign of hz".into(),
            ],
        },
        StartAxis::XPlus => GaugeReport {
            gauge_fixed: vec![],
            identified: vec![
                "all six parameters in principle (the x-basis start breaks the rotation \
                 symmetry); the system is noise-sensitive and may converge to an \
                 incorrect model"
                    .into(),
            ],
            unidentified: vec![],
        },
    }
}

/// Solve a single-trace coefficient system under its structural prior.
///
/// Least-squares over the six coefficient equations with unit weights,
/// seeded by the analytic solutions plus 16 perturbed starts. The gauge
/// convention `hy = 0` is applied where the prior has the z-rotation
/// symmetry; genuinely distinct solutions within tolerance surface as
/// [`Error::AmbiguousSolution`], and uniformly bad fits as
/// [`Error::NoConvergence`].
pub fn solve_model(system: &CoefficientSystem) -> Result<ModelSolution> {
    let obs = &system.observed;
    let scale = obs.scale();
    match system.prior {
        Prior::GenericQubit => Err(Error::UnsupportedPrior(format!(
            "cannot solve the generic single-trace system: {}",
            system.describe()
        ))),
        Prior::DephasingGeneralBasis => {
            let seeds = multistart_perturbations(&dephasing_seeds(obs), 16);
            let objective = |v: &[f64]| dephasing_objective(v, obs);
            let refined = refine_all(&seeds, &objective, scale);
            let to_params = |v: &[f64]| {
                let mut p = ParameterSet::Dephasing {
                    hx: v[1],
                    hy: 0.0,
                    hz: v[0],
                    alpha: v[3],
                    beta: v[4],
                    gamma: v[2],
                };
                p.canonicalize();
                p
            };
            finish_solve(
                refined,
                to_params,
                scale,
                dephasing_gauge_report(),
                Identifiability::GaugeOrbit,
            )
        }
        Prior::RelaxationDephasingZ => {
            let start = classify_start(&system.initial_state).ok_or_else(|| {
                Error::UnsupportedPrior("relaxation prior needs a z- or x-basis start".into())
            })?;
            let (seeds, gauge_hy) = match start {
                StartAxis::ZPlus => (relaxation_seeds_z(obs), true),
                StartAxis::XPlus => (relaxation_seeds_x(obs), false),
            };
            let seeds = multistart_perturbations(&seeds, 16);
            let objective = |v: &[f64]| relaxation_objective(v, obs, start, gauge_hy);
            let refined = refine_all(&seeds, &objective, scale);
            let to_params = move |v: &[f64]| {
                let mut p = ParameterSet::Relaxation {
                    gamma_eff: v[0],
                    gamma_sum: v[1],
                    delta_gamma: v[2],
                    hz: v[3],
                    hx: v[4],
                    hy: if gauge_hy { 0.0 } else { v[5] },
                };
                p.canonicalize();
                p
            };
            finish_solve(
                refined,
                to_params,
                scale,
                relaxation_gauge_report(start),
                if start == StartAxis::ZPlus {
                    Identifiability::GaugeOrbit
                } else {
                    Identifiability::Full
                },
            )
        }
    }
}

fn refine_all<F>(seeds: &[Vec<f64>], objective: &F, scale: f64) -> Vec<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let nm = NelderMead {
        max_iters: 3000,
        x_tol: 1e-13,
        f_tol: 1e-18,
    };
    let mut refined = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let step: Vec<f64> = seed
            .iter()
            .map(|&x| (0.2 * x.abs()).max(0.02 * scale.sqrt()))
            .collect();
        let out = nm.minimize(objective, seed, &step);
        // Second descent with a tight simplex to polish the optimum.
        let polish_step: Vec<f64> = out.x.iter().map(|&x| (1e-6 * x.abs()).max(1e-9)).collect();
        let polished = nm.minimize(objective, &out.x, &polish_step);
        refined.push((polished.x, polished.value));
    }
    refined.sort_by(|a, b| a.1.total_cmp(&b.1));
    refined
}

fn finish_solve<F>(
    refined: Vec<(Vec<f64>, f64)>,
    to_params: F,
    scale: f64,
    gauge: GaugeReport,
    identifiability: Identifiability,
) -> Result<ModelSolution>
where
    F: Fn(&[f64]) -> ParameterSet,
{
    let Some((best_v, best_res)) = refined.first().cloned() else {
        return Err(Error::NoConvergence {
            residual: f64::INFINITY,
            threshold: CONVERGENCE_THRESHOLD * scale,
        });
    };
    if best_res > CONVERGENCE_THRESHOLD * scale {
        return Err(Error::NoConvergence {
            residual: best_res,
            threshold: CONVERGENCE_THRESHOLD * scale,
        });
    }
    let best_params = to_params(&best_v);
    // Collect distinct runner-up solutions that fit essentially as well.
    let close_cutoff = best_res * 1.05 + 1e-12 * scale;
    let mut candidates: Vec<(ParameterSet, f64)> = Vec::new();
    let best_vec = best_params.to_vec();
    for (v, res) in refined.iter().skip(1) {
        if *res > close_cutoff {
            break;
        }
        let p = to_params(v);
        let pv = p.to_vec();
        let dist: f64 = pv
            .iter()
            .zip(best_vec.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let distinct_from_all = dist > 1e-5 * scale
            && candidates.iter().all(|(q, _)| {
                let qv = q.to_vec();
                let d: f64 = pv
                    .iter()
                    .zip(qv.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                d > 1e-5 * scale
            });
        if distinct_from_all {
            candidates.push((p, *res));
        }
    }
    if !candidates.is_empty() {
        return Err(Error::AmbiguousSolution {
            candidates: candidates.len() + 1,
        });
    }
    Ok(ModelSolution {
        params: best_params,
        gauge,
        residual: best_res,
        identifiability,
        candidates,
    })
}

/// Reconstruct a model-family parameter set from two jointly fitted traces.
///
/// Both traces share the quartic denominator; the numerator coefficients of
/// each plus the shared denominator are matched against the structural
/// family by least squares, with the same seeding and failure semantics as
/// [`solve_model`]. Observing an x or y component breaks the z-rotation
/// gauge, so all six family parameters are in play.
pub fn reconstruct_two_trace(
    signal: &SignalModel,
    prior: Prior,
    r0: &DVec,
) -> Result<ModelSolution> {
    if signal.n_components() != 2 {
        return Err(Error::InvalidInput(format!(
            "two-trace reconstruction needs exactly 2 components, got {}",
            signal.n_components()
        )));
    }
    if prior == Prior::GenericQubit {
        return Err(Error::UnsupportedPrior(
            "two traces still under-determine the fully generic qubit".into(),
        ));
    }
    let comp_indices: Vec<usize> = signal.components.iter().map(|o| o.index()).collect();
    if comp_indices[0] == comp_indices[1] {
        return Err(Error::InvalidInput("duplicate trace components".into()));
    }
    let mut observed: Vec<ObservedCoefficients> = Vec::with_capacity(2);
    for k in 0..2 {
        observed.push(ObservedCoefficients::from_rational(&laplace_of(signal, k)?)?);
    }
    let scale = 1.0 + observed.iter().map(|o| o.scale() - 1.0).sum::<f64>();

    // Stacked residual: per trace the numerator C₀..C₃, plus the shared
    // denominator D₁..D₃ once.
    let residual_of_model = |model: &BlochModel| -> f64 {
        let mut ss = 0.0;
        let mut n_terms = 0;
        for (k, &comp) in comp_indices.iter().enumerate() {
            let rat = rational_coefficients(model, comp, r0);
            let Ok((c, d)) = rat.quartic_coefficients() else {
                return 1e30;
            };
            for i in 0..4 {
                ss += (c[i] - observed[k].c[i]).powi(2);
                n_terms += 1;
            }
            if k == 0 {
                for i in 0..3 {
                    ss += (d[i] - observed[k].d[i]).powi(2);
                    n_terms += 3;
                }
            }
        }
        (ss / n_terms as f64).sqrt()
    };

    let has_z = comp_indices.contains(&2);
    let (seeds, is_dephasing): (Vec<Vec<f64>>, bool) = match prior {
        Prior::DephasingGeneralBasis => {
            let mut seeds = if has_z {
                let z_idx = comp_indices.iter().position(|&c| c == 2).unwrap();
                dephasing_seeds(&observed[z_idx])
                    .into_iter()
                    .map(|v| vec![v[1], 0.0, v[0], v[3], v[4], v[2]]) // (hx,hy,hz,α,β,γ)
                    .collect()
            } else {
                Vec::new()
            };
            seeds.extend(dephasing_pattern_seeds(&observed[0]));
            (seeds, true)
        }
        Prior::RelaxationDephasingZ => {
            let mut seeds = if has_z {
                let z_idx = comp_indices.iter().position(|&c| c == 2).unwrap();
                relaxation_seeds_z(&observed[z_idx])
                    .into_iter()
                    .map(|v| vec![v[0], v[1], v[2], v[3], v[4], 0.0])
                    .collect()
            } else {
                Vec::new()
            };
            seeds.extend(relaxation_pattern_seeds(&observed[0]));
            (seeds, false)
        }
        Prior::GenericQubit => unreachable!(),
    };

    let objective = |v: &[f64]| -> f64 {
        if v.iter().any(|x| x.abs() > 1e6) {
            return 1e30;
        }
        let model = if is_dephasing {
            dephasing_family([v[0], v[1], v[2]], [v[3], v[4], v[5]])
        } else {
            relaxation_family([v[3], v[4], v[5]], v[0], v[1], v[2])
        };
        residual_of_model(&model)
    };

    let seeds = multistart_perturbations(&seeds, 16);
    let refined = refine_all(&seeds, &objective, scale);
    let to_params = |v: &[f64]| {
        let mut p = if is_dephasing {
            ParameterSet::Dephasing {
                hx: v[0],
                hy: v[1],
                hz: v[2],
                alpha: v[3],
                beta: v[4],
                gamma: v[5],
            }
        } else {
            ParameterSet::Relaxation {
                gamma_eff: v[0],
                gamma_sum: v[1],
                delta_gamma: v[2],
                hx: v[3],
                hy: v[4],
                hz: v[5],
            }
        };
        canonicalize_reflections(&mut p, &comp_indices, r0);
        if let ParameterSet::Dephasing { alpha, beta, gamma, .. } = &mut p {
            // Overall sign of the dephasing axis is irrelevant.
            if *gamma < 0.0 || (*gamma == 0.0 && *alpha < 0.0) {
                *alpha = -*alpha;
                *beta = -*beta;
                *gamma = -*gamma;
            }
        }
        p
    };
    let gauge = GaugeReport {
        gauge_fixed: vec![],
        identified: vec![
            "both numerators and the shared denominator; the second observable breaks \
             the z-rotation symmetry"
                .into(),
        ],
        unidentified: vec!["overall sign of the dephasing axis".into()],
    };
    finish_solve(refined, to_params, scale, gauge, Identifiability::Full)
}

/// Direction-pattern seeds for two-trace dephasing when no z-trace is
/// available: magnitudes from the denominator, directions from a small
/// pattern set.
fn dephasing_pattern_seeds(obs: &ObservedCoefficients) -> Vec<Vec<f64>> {
    let [_, d2, d3] = obs.d;
    let total = (d3 / 2.0).max(0.0); // α²+β²+γ²
    let h_mag = (d2 - total * total).max(0.0).sqrt();
    let v_mag = total.sqrt();
    let dirs: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [std::f64::consts::FRAC_1_SQRT_2, 0.0, std::f64::consts::FRAC_1_SQRT_2],
        [0.577_350_269_189_625_8; 3],
        [0.0, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    ];
    let mut seeds = Vec::new();
    for hd in &dirs {
        for vd in &dirs {
            seeds.push(vec![
                h_mag * hd[0],
                h_mag * hd[1],
                h_mag * hd[2],
                v_mag * vd[0],
                v_mag * vd[1],
                v_mag * vd[2],
            ]);
        }
    }
    seeds
}

fn relaxation_pattern_seeds(obs: &ObservedCoefficients) -> Vec<Vec<f64>> {
    let [_, c1, c2, _] = obs.c;
    let [_, d2, d3] = obs.d;
    let mut seeds = Vec::new();
    for frac in [0.15, 0.3, 0.45] {
        let g = frac * d3 / 2.0;
        let gamma_sum = d3 - 2.0 * g;
        let delta_gamma = c2 - 2.0 * g;
        let hz2 = (c1 - 2.0 * g * delta_gamma - g * g).max(0.0);
        let q = (d2 - g * g - 2.0 * g * gamma_sum - hz2).max(0.0);
        let hz = hz2.sqrt();
        let hq = q.sqrt();
        seeds.push(vec![g, gamma_sum, delta_gamma, hq, 0.0, hz]);
        seeds.push(vec![g, gamma_sum, delta_gamma, 0.0, hq, hz]);
        seeds.push(vec![
            g,
            gamma_sum,
            delta_gamma,
            hq * std::f64::consts::FRAC_1_SQRT_2,
            hq * std::f64::consts::FRAC_1_SQRT_2,
            hz,
        ]);
    }
    seeds
}
