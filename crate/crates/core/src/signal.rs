//! Signal-parameter estimation for stroboscopic records.
//!
//! A record is fitted to a linear combination of basis functions — a
//! constant, damped sinusoid pairs `e^{−γt}(cos ωt, sin ωt)` and pure
//! exponentials `e^{−δt}` — by orthogonal projection for the linear
//! coefficients and multi-start simplex descent for the nonlinear
//! parameters, maximising the (marginalised Gaussian) log-likelihood.
//! Records fitted jointly share nonlinear parameters. The Laplace transform
//! of a fitted signal is a rational function used by the partial-information
//! reconstruction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{poly_add, poly_eval, poly_mul, DMat, DVec};
use crate::measurement::{MeasurementRecord, Observable};
use crate::optim::NelderMead;
use crate::propagation::SignalDescriptor;

/// Design-matrix condition number above which a fit is declared degenerate.
const DEGENERATE_COND: f64 = 1e10;

/// Functional form of one basis function. Decay rates are stored positive:
/// the signal carries `e^{−γt}`, and the eigenvalue mapping `−δ`, `−γ ± iω`
/// happens at the reconstruction boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Constant,
    DampedCos,
    DampedSin,
    Exponential,
    PolyDampedExp,
    PolyDampedCos,
    PolyDampedSin,
}

/// One basis function `t^degree · e^{−gamma·t} · trig(omega·t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisFn {
    pub kind: BasisKind,
    pub gamma: f64,
    pub omega: f64,
    #[serde(default)]
    pub degree: usize,
}

impl BasisFn {
    pub fn constant() -> Self {
        Self {
            kind: BasisKind::Constant,
            gamma: 0.0,
            omega: 0.0,
            degree: 0,
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let env = (-self.gamma * t).exp();
        match self.kind {
            BasisKind::Constant => 1.0,
            BasisKind::DampedCos => env * (self.omega * t).cos(),
            BasisKind::DampedSin => env * (self.omega * t).sin(),
            BasisKind::Exponential => env,
            BasisKind::PolyDampedExp => t.powi(self.degree as i32) * env,
            BasisKind::PolyDampedCos => {
                t.powi(self.degree as i32) * env * (self.omega * t).cos()
            }
            BasisKind::PolyDampedSin => {
                t.powi(self.degree as i32) * env * (self.omega * t).sin()
            }
        }
    }

    fn is_polynomial(&self) -> bool {
        matches!(
            self.kind,
            BasisKind::PolyDampedExp | BasisKind::PolyDampedCos | BasisKind::PolyDampedSin
        )
    }
}

/// Basis shape for fitting: `pairs` damped-sinusoid pairs, `exponentials`
/// pure exponentials, and optionally a constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitTemplate {
    pub pairs: usize,
    pub exponentials: usize,
    pub constant: bool,
}

impl FitTemplate {
    /// The generic qubit template: one damped-sinusoid pair, one
    /// exponential, and a constant.
    pub fn qubit_generic() -> Self {
        Self {
            pairs: 1,
            exponentials: 1,
            constant: true,
        }
    }

    pub fn n_nonlinear(&self) -> usize {
        2 * self.pairs + self.exponentials
    }

    pub fn n_basis(&self) -> usize {
        usize::from(self.constant) + 2 * self.pairs + self.exponentials
    }

    /// Basis functions at nonlinear parameters
    /// `θ = [γ_1..γ_p, ω_1..ω_p, δ_1..δ_q]`.
    fn instantiate(&self, theta: &[f64]) -> Vec<BasisFn> {
        assert_eq!(theta.len(), self.n_nonlinear());
        let mut basis = Vec::with_capacity(self.n_basis());
        if self.constant {
            basis.push(BasisFn::constant());
        }
        for i in 0..self.pairs {
            let gamma = theta[i];
            let omega = theta[self.pairs + i];
            basis.push(BasisFn {
                kind: BasisKind::DampedCos,
                gamma,
                omega,
                degree: 0,
            });
            basis.push(BasisFn {
                kind: BasisKind::DampedSin,
                gamma,
                omega,
                degree: 0,
            });
        }
        for j in 0..self.exponentials {
            basis.push(BasisFn {
                kind: BasisKind::Exponential,
                gamma: theta[2 * self.pairs + j],
                omega: 0.0,
                degree: 0,
            });
        }
        basis
    }
}

/// A fitted (or exactly constructed) multi-component signal model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalModel {
    pub basis: Vec<BasisFn>,
    /// One coefficient vector per component, each of length `basis.len()`.
    #[serde(with = "coeff_lists")]
    pub coeffs: Vec<DVec>,
    /// Component labels parallel to `coeffs`.
    pub components: Vec<Observable>,
    /// Marginalised Gaussian log-likelihood at the optimum, up to an
    /// additive constant. Zero for exactly constructed models.
    #[serde(rename = "loglik")]
    pub log_likelihood: f64,
}

impl SignalModel {
    pub fn n_components(&self) -> usize {
        self.coeffs.len()
    }

    /// Index of a component by observable label.
    pub fn component_index(&self, obs: Observable) -> Option<usize> {
        self.components.iter().position(|&o| o == obs)
    }

    pub fn evaluate_component(&self, component: usize, times: &[f64]) -> Vec<f64> {
        let coeff = &self.coeffs[component];
        times
            .iter()
            .map(|&t| {
                self.basis
                    .iter()
                    .zip(coeff.iter())
                    .map(|(b, &a)| a * b.evaluate(t))
                    .sum()
            })
            .collect()
    }

    pub fn has_polynomial_terms(&self) -> bool {
        self.basis.iter().any(BasisFn::is_polynomial)
    }

    /// Exact signal model from a closed-form descriptor (no fitting).
    pub fn from_descriptor(desc: &SignalDescriptor, components: &[Observable]) -> Result<Self> {
        let d = desc.dim();
        if components.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} component labels for a {d}-component descriptor",
                components.len()
            )));
        }
        let mut basis = vec![BasisFn::constant()];
        let mut columns: Vec<DVec> = vec![desc.constant.clone()];
        for term in &desc.terms {
            let gamma = -term.decay;
            if term.frequency == 0.0 {
                basis.push(BasisFn {
                    kind: if term.degree == 0 {
                        BasisKind::Exponential
                    } else {
                        BasisKind::PolyDampedExp
                    },
                    gamma,
                    omega: 0.0,
                    degree: term.degree,
                });
                columns.push(term.cos_coeff.clone());
            } else {
                basis.push(BasisFn {
                    kind: if term.degree == 0 {
                        BasisKind::DampedCos
                    } else {
                        BasisKind::PolyDampedCos
                    },
                    gamma,
                    omega: term.frequency,
                    degree: term.degree,
                });
                columns.push(term.cos_coeff.clone());
                basis.push(BasisFn {
                    kind: if term.degree == 0 {
                        BasisKind::DampedSin
                    } else {
                        BasisKind::PolyDampedSin
                    },
                    gamma,
                    omega: term.frequency,
                    degree: term.degree,
                });
                columns.push(term.sin_coeff.clone());
            }
        }
        let coeffs = (0..d)
            .map(|i| DVec::from_fn(basis.len(), |k, _| columns[k][i]))
            .collect();
        Ok(Self {
            basis,
            coeffs,
            components: components.to_vec(),
            log_likelihood: 0.0,
        })
    }
}

/// Coefficient vectors as plain nested arrays in JSON.
mod coeff_lists {
    use super::DVec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVec], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = v.iter().map(|x| x.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVec>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(DVec::from_vec).collect())
    }
}

/// Evaluate all components at the given times; rows are components.
pub fn evaluate_signal(model: &SignalModel, times: &[f64]) -> DMat {
    let mut out = DMat::zeros(model.n_components(), times.len());
    for c in 0..model.n_components() {
        let vals = model.evaluate_component(c, times);
        for (k, v) in vals.into_iter().enumerate() {
            out[(c, k)] = v;
        }
    }
    out
}

fn design_matrix(basis: &[BasisFn], times: &[f64]) -> DMat {
    DMat::from_fn(times.len(), basis.len(), |i, j| basis[j].evaluate(times[i]))
}

/// Fast least-squares via the normal equations; `None` when the Gram
/// matrix is not positive definite (degenerate basis). At the solution
/// `‖y − Ga‖² = ‖y‖² − aᵀGᵀy`.
fn gram_solve(g: &DMat, ys: &[&[f64]]) -> Option<(Vec<DVec>, f64)> {
    let gram = g.transpose() * g;
    let chol = gram.cholesky()?;
    let mut coeffs = Vec::with_capacity(ys.len());
    let mut rss = 0.0;
    for y in ys {
        let yv = DVec::from_column_slice(y);
        let gty = g.transpose() * &yv;
        let a = chol.solve(&gty);
        rss += (yv.norm_squared() - a.dot(&gty)).max(0.0);
        coeffs.push(a);
    }
    Some((coeffs, rss))
}

/// Least-squares solve for all records sharing one design matrix; returns
/// coefficient vectors, the summed squared residual, and the condition
/// number of the design matrix.
fn project_group(g: &DMat, ys: &[&[f64]]) -> (Vec<DVec>, f64, f64) {
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with U");
    let v_t = svd.v_t.as_ref().expect("svd with V");
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-13;
    let cond = if svd.singular_values.min() > 0.0 {
        smax / svd.singular_values.min()
    } else {
        f64::INFINITY
    };
    let mut coeffs = Vec::with_capacity(ys.len());
    let mut rss = 0.0;
    for y in ys {
        let yv = DVec::from_column_slice(y);
        let mut a = DVec::zeros(g.ncols());
        let mut projected = 0.0;
        for i in 0..svd.singular_values.len() {
            let s = svd.singular_values[i];
            if s <= cutoff {
                continue;
            }
            let uy = u.column(i).dot(&yv);
            projected += uy * uy;
            a += v_t.row(i).transpose() * (uy / s);
        }
        rss += (yv.norm_squared() - projected).max(0.0);
        coeffs.push(a);
    }
    (coeffs, rss, cond)
}

/// Group records by identical time grids so the design matrix is built once
/// per group.
fn time_groups<'a>(records: &'a [MeasurementRecord]) -> Vec<(Vec<f64>, Vec<usize>)> {
    let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        if let Some(g) = groups.iter_mut().find(|(t, _)| t == &rec.times) {
            g.1.push(idx);
        } else {
            groups.push((rec.times.clone(), vec![idx]));
        }
    }
    groups
}

fn total_rss(
    template: &FitTemplate,
    theta: &[f64],
    records: &[MeasurementRecord],
    groups: &[(Vec<f64>, Vec<usize>)],
) -> f64 {
    let basis = template.instantiate(theta);
    let mut rss = 0.0;
    for (times, members) in groups {
        let g = design_matrix(&basis, times);
        let ys: Vec<&[f64]> = members
            .iter()
            .map(|&i| records[i].estimates.as_slice())
            .collect();
        let group_rss = match gram_solve(&g, &ys) {
            Some((_, r)) => r,
            // Degenerate basis at this θ: fall back to the rank-revealing
            // projection.
            None => project_group(&g, &ys).1,
        };
        rss += group_rss;
    }
    rss
}

struct Bounds {
    rate_max: f64,
    omega_max: f64,
}

impl Bounds {
    fn penalty(&self, template: &FitTemplate, theta: &[f64]) -> Option<f64> {
        let p = template.pairs;
        for i in 0..p {
            let gamma = theta[i];
            let omega = theta[p + i];
            if !(0.0..=self.rate_max).contains(&gamma) {
                return Some(1e30 * (1.0 + gamma.abs()));
            }
            if !(omega > 0.0 && omega <= self.omega_max) {
                return Some(1e30 * (1.0 + omega.abs()));
            }
        }
        for j in 0..template.exponentials {
            let delta = theta[2 * p + j];
            if !(0.0..=self.rate_max).contains(&delta) {
                return Some(1e30 * (1.0 + delta.abs()));
            }
        }
        None
    }
}

/// Direct (Lomb-style) periodogram over an ω grid, summed across records;
/// returns the top local maxima, strongest first.
fn periodogram_peaks(
    records: &[MeasurementRecord],
    omega_max: f64,
    n_grid: usize,
    n_peaks: usize,
) -> Vec<f64> {
    let mut power = vec![0.0f64; n_grid];
    let omegas: Vec<f64> = (1..=n_grid)
        .map(|k| omega_max * k as f64 / n_grid as f64)
        .collect();
    for rec in records {
        let n = rec.len();
        if n == 0 {
            continue;
        }
        let mean = rec.estimates.iter().sum::<f64>() / n as f64;
        for (gi, &w) in omegas.iter().enumerate() {
            let (mut sc, mut ss) = (0.0, 0.0);
            for (t, y) in rec.times.iter().zip(&rec.estimates) {
                let (s, c) = (w * t).sin_cos();
                let v = y - mean;
                sc += v * c;
                ss += v * s;
            }
            power[gi] += (sc * sc + ss * ss) / n as f64;
        }
    }
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 1..n_grid.saturating_sub(1) {
        if power[i] > power[i - 1] && power[i] >= power[i + 1] {
            peaks.push((power[i], omegas[i]));
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    let min_sep = 3.0 * omega_max / n_grid as f64;
    for (_, w) in peaks {
        if out.iter().all(|&q: &f64| (q - w).abs() > min_sep) {
            out.push(w);
        }
        if out.len() == n_peaks {
            break;
        }
    }
    if out.is_empty() {
        out.push(omega_max / 4.0);
    }
    out
}

/// Crude decay-rate candidates from the envelope ratio of detrended data
/// halves plus horizon-scaled defaults.
fn decay_candidates(records: &[MeasurementRecord], horizon: f64) -> Vec<f64> {
    let mut first = (0.0f64, 0usize);
    let mut second = (0.0f64, 0usize);
    for rec in records {
        let n = rec.len();
        let mean = rec.estimates.iter().sum::<f64>() / n.max(1) as f64;
        for (t, y) in rec.times.iter().zip(&rec.estimates) {
            let v = (y - mean) * (y - mean);
            if *t < horizon / 2.0 {
                first.0 += v;
                first.1 += 1;
            } else {
                second.0 += v;
                second.1 += 1;
            }
        }
    }
    let mut cands = vec![0.5 / horizon, 2.0 / horizon, 8.0 / horizon];
    if first.1 > 0 && second.1 > 0 && first.0 > 0.0 && second.0 > 0.0 {
        let rms1 = (first.0 / first.1 as f64).sqrt();
        let rms2 = (second.0 / second.1 as f64).sqrt();
        let est = (2.0 * (rms1 / rms2).max(1e-6).ln() / horizon)
            .clamp(0.05 / horizon, 20.0 / horizon);
        cands.push(est);
    }
    cands
}

/// Gauss–Newton/Levenberg polish of the nonlinear parameters using a
/// finite-difference Jacobian of the stacked (linear-solved) residual.
fn polish(
    template: &FitTemplate,
    theta: &mut Vec<f64>,
    records: &[MeasurementRecord],
    groups: &[(Vec<f64>, Vec<usize>)],
    bounds: &Bounds,
) {
    let n = theta.len();
    let residual_vec = |th: &[f64]| -> Option<DVec> {
        if bounds.penalty(template, th).is_some() {
            return None;
        }
        let basis = template.instantiate(th);
        let mut stacked: Vec<f64> = Vec::new();
        for (times, members) in groups {
            let g = design_matrix(&basis, times);
            let ys: Vec<&[f64]> = members
                .iter()
                .map(|&i| records[i].estimates.as_slice())
                .collect();
            let (coeffs, _) = gram_solve(&g, &ys)?;
            for (a, y) in coeffs.iter().zip(&ys) {
                let fit = &g * a;
                for (k, &yk) in y.iter().enumerate() {
                    stacked.push(yk - fit[k]);
                }
            }
        }
        Some(DVec::from_vec(stacked))
    };

    let Some(mut r0) = residual_vec(theta) else { return };
    let mut rss0 = r0.norm_squared();
    let mut lambda = 1e-10;
    for _ in 0..10 {
        let m = r0.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        let mut ok = true;
        for j in 0..n {
            let h = 1e-6 * (1e-3 + theta[j].abs());
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            match (residual_vec(&plus), residual_vec(&minus)) {
                (Some(rp), Some(rm)) => {
                    let col = (rp - rm) / (2.0 * h);
                    jac.set_column(j, &col);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            return;
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r0;
        let mut improved = false;
        for _ in 0..6 {
            let damped = &jtj + DMatrix::identity(n, n) * (lambda * (1.0 + jtj.trace()));
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(&x, &dx)| x + dx)
                .collect();
            if let Some(rc) = residual_vec(&cand) {
                let rss_c = rc.norm_squared();
                if rss_c < rss0 {
                    *theta = cand;
                    r0 = rc;
                    let rel = (rss0 - rss_c) / rss0.max(1e-300);
                    rss0 = rss_c;
                    lambda = (lambda / 10.0).max(1e-14);
                    improved = true;
                    if rel < 1e-14 {
                        return;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            return;
        }
    }
}

/// Fit one or more jointly recorded traces to a basis template.
///
/// Linear coefficients are obtained by orthogonal projection at fixed
/// nonlinear parameters; the nonlinear parameters by a coarse
/// periodogram/decay grid followed by 8 simplex restarts and a
/// Gauss–Newton polish. Records fitted together share `(γ, ω, δ)`.
pub fn fit_signal(records: &[MeasurementRecord], template: &FitTemplate) -> Result<SignalModel> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to fit".into()));
    }
    let m_total: usize = records.iter().map(MeasurementRecord::len).sum();
    let n_free = template.n_nonlinear() + template.n_basis() * records.len();
    if m_total < 2 * n_free {
        return Err(Error::InvalidInput(format!(
            "{m_total} samples cannot determine {n_free} free parameters"
        )));
    }

    let horizon = records
        .iter()
        .map(MeasurementRecord::horizon)
        .fold(0.0, f64::max);
    if horizon <= 0.0 {
        return Err(Error::InvalidInput("records have zero horizon".into()));
    }
    let n_max = records.iter().map(MeasurementRecord::len).max().unwrap();
    let omega_max = std::f64::consts::PI * n_max as f64 / horizon;
    let bounds = Bounds {
        rate_max: 10.0 * omega_max,
        omega_max,
    };
    let groups = time_groups(records);

    // No nonlinear parameters: a single projection.
    if template.n_nonlinear() == 0 {
        let theta: Vec<f64> = Vec::new();
        return finish_fit(template, &theta, records, &groups, m_total);
    }

    // Coarse candidate grid.
    let n_grid = (2 * n_max).clamp(256, 2048);
    let omega_cands = periodogram_peaks(records, omega_max, n_grid, 3);
    let rate_cands = decay_candidates(records, horizon);

    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    let p = template.pairs;
    let q = template.exponentials;
    for gi in &rate_cands {
        for di in &rate_cands {
            for wi in &omega_cands {
                let mut theta = Vec::with_capacity(template.n_nonlinear());
                for k in 0..p {
                    theta.push(*gi * (1.0 + 0.3 * k as f64));
                }
                for k in 0..p {
                    // Distinct frequencies per pair, strongest peak first.
                    let w = omega_cands.get(k).copied().unwrap_or(wi * (1.0 + k as f64));
                    if k == 0 {
                        theta.push(*wi);
                    } else {
                        theta.push(w);
                    }
                }
                for k in 0..q {
                    theta.push(*di * (1.0 + 0.5 * k as f64));
                }
                if bounds.penalty(template, &theta).is_some() {
                    continue;
                }
                let rss = total_rss(template, &theta, records, &groups);
                seeds.push((rss, theta));
                if p == 0 {
                    break; // ω loop is irrelevant without pairs
                }
            }
            if p == 0 && q == 0 {
                break;
            }
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.truncate(8);
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no admissible starting point".into()));
    }

    let nm = NelderMead {
        max_iters: 400,
        x_tol: 1e-9,
        f_tol: 1e-17,
    };
    let objective = |theta: &[f64]| -> f64 {
        if let Some(pen) = bounds.penalty(template, theta) {
            return pen;
        }
        total_rss(template, theta, records, &groups)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, seed) in &seeds {
        let step: Vec<f64> = seed
            .iter()
            .map(|&x| (0.25 * x.abs()).max(0.1 / horizon))
            .collect();
        let out = nm.minimize(&objective, seed, &step);
        if best.as_ref().map_or(true, |(b, _)| out.value < *b) {
            best = Some((out.value, out.x));
        }
    }
    let (_, mut theta) = best.expect("at least one start");
    polish(template, &mut theta, records, &groups, &bounds);

    finish_fit(template, &theta, records, &groups, m_total)
}

fn finish_fit(
    template: &FitTemplate,
    theta: &[f64],
    records: &[MeasurementRecord],
    groups: &[(Vec<f64>, Vec<usize>)],
    m_total: usize,
) -> Result<SignalModel> {
    let basis = template.instantiate(theta);
    let mut coeffs: Vec<Option<DVec>> = vec![None; records.len()];
    let mut rss = 0.0;
    let mut worst_cond: f64 = 1.0;
    for (times, members) in groups {
        let g = design_matrix(&basis, times);
        let ys: Vec<&[f64]> = members
            .iter()
            .map(|&i| records[i].estimates.as_slice())
            .collect();
        let (group_coeffs, group_rss, cond) = project_group(&g, &ys);
        worst_cond = worst_cond.max(cond);
        rss += group_rss;
        for (&idx, a) in members.iter().zip(group_coeffs) {
            coeffs[idx] = Some(a);
        }
    }

    if worst_cond > DEGENERATE_COND {
        return Err(Error::FitDegenerate(format!(
            "design matrix condition {worst_cond:.2e}; collinear basis functions \
             (e.g. δ ≈ γ with ω ≈ 0) — refit with a merged single-exponential template"
        )));
    }

    // Shot-noise floor of the joint record set.
    let noise_floor = {
        let total_var: f64 = records
            .iter()
            .map(|r| r.noise_floor().powi(2) * r.len() as f64)
            .sum();
        (total_var / m_total as f64).sqrt()
    };
    let data_rms = {
        let ss: f64 = records
            .iter()
            .flat_map(|r| r.estimates.iter())
            .map(|y| y * y)
            .sum();
        (ss / m_total as f64).sqrt()
    };
    let residual_rms = (rss / m_total as f64).sqrt();
    let threshold = 10.0 * noise_floor.max(1e-7 * data_rms.max(1e-12));
    if residual_rms > threshold {
        return Err(Error::FitFailed {
            residual: residual_rms,
            threshold,
        });
    }

    let log_likelihood = -0.5 * m_total as f64 * (rss / m_total as f64 + 1e-300).ln();
    Ok(SignalModel {
        basis,
        coeffs: coeffs.into_iter().map(Option::unwrap).collect(),
        components: records.iter().map(|r| r.observable).collect(),
        log_likelihood,
    })
}

/// Laplace transform of one component of a signal model, as a rational
/// function of `s` with ascending coefficient lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalSignal {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalSignal {
    pub fn evaluate(&self, s: f64) -> f64 {
        poly_eval(&self.numerator, s) / poly_eval(&self.denominator, s)
    }

    /// Extract `(C₀..C₃, D₁..D₃)` from the generic-qubit rational form
    /// `(C₃s³ + C₂s² + C₁s + C₀) / (s⁴ + D₃s³ + D₂s² + D₁s)`.
    pub fn quartic_coefficients(&self) -> Result<([f64; 4], [f64; 3])> {
        if self.denominator.len() != 5 {
            return Err(Error::UnsupportedBasis(format!(
                "denominator degree {} (expected 4)",
                self.denominator.len().saturating_sub(1)
            )));
        }
        let lead = self.denominator[4];
        if lead == 0.0 {
            return Err(Error::UnsupportedBasis("non-monic denominator".into()));
        }
        let scale = self.denominator.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if self.denominator[0].abs() > 1e-9 * scale.max(1.0) {
            return Err(Error::UnsupportedBasis(
                "denominator lacks the 1/s pole".into(),
            ));
        }
        let mut c = [0.0; 4];
        for (i, slot) in c.iter_mut().enumerate() {
            *slot = self.numerator.get(i).copied().unwrap_or(0.0) / lead;
        }
        let d = [
            self.denominator[1] / lead,
            self.denominator[2] / lead,
            self.denominator[3] / lead,
        ];
        Ok((c, d))
    }
}

/// Laplace transform of one component of the signal by exact
/// partial-fraction recombination over the common denominator
/// `s · Π((s+γ)²+ω²) · Π(s+δ)`.
///
/// Polynomial-envelope (Jordan) terms are rejected.
pub fn laplace_of(model: &SignalModel, component: usize) -> Result<RationalSignal> {
    if component >= model.n_components() {
        return Err(Error::DimensionMismatch(format!(
            "component {component} of {}",
            model.n_components()
        )));
    }
    if model.has_polynomial_terms() {
        return Err(Error::UnsupportedBasis(
            "polynomial-envelope terms have no generic rational form".into(),
        ));
    }
    let coeff = &model.coeffs[component];

    // Collect distinct pair and exponential factors.
    let mut pair_keys: Vec<(f64, f64)> = Vec::new();
    let mut exp_keys: Vec<f64> = Vec::new();
    let mut has_constant = false;
    for b in &model.basis {
        match b.kind {
            BasisKind::Constant => has_constant = true,
            BasisKind::DampedCos | BasisKind::DampedSin => {
                if !pair_keys
                    .iter()
                    .any(|&(g, w)| g == b.gamma && w == b.omega)
                {
                    pair_keys.push((b.gamma, b.omega));
                }
            }
            BasisKind::Exponential => {
                if !exp_keys.iter().any(|&d| d == b.gamma) {
                    exp_keys.push(b.gamma);
                }
            }
            _ => unreachable!("polynomial terms rejected above"),
        }
    }
    let _ = has_constant;

    // Factor polynomials: s, (s+γ)²+ω², (s+δ).
    let s_factor = vec![0.0, 1.0];
    let pair_factors: Vec<Vec<f64>> = pair_keys
        .iter()
        .map(|&(g, w)| vec![g * g + w * w, 2.0 * g, 1.0])
        .collect();
    let exp_factors: Vec<Vec<f64>> = exp_keys.iter().map(|&d| vec![d, 1.0]).collect();

    let mut denominator = s_factor.clone();
    for f in &pair_factors {
        denominator = poly_mul(&denominator, f);
    }
    for f in &exp_factors {
        denominator = poly_mul(&denominator, f);
    }

    // Product of all factors except the listed ones.
    let cofactor = |skip_s: bool, skip_pair: Option<usize>, skip_exp: Option<usize>| -> Vec<f64> {
        let mut acc = if skip_s { vec![1.0] } else { s_factor.clone() };
        for (i, f) in pair_factors.iter().enumerate() {
            if Some(i) != skip_pair {
                acc = poly_mul(&acc, f);
            }
        }
        for (j, f) in exp_factors.iter().enumerate() {
            if Some(j) != skip_exp {
                acc = poly_mul(&acc, f);
            }
        }
        acc
    };

    let mut numerator = vec![0.0; denominator.len().saturating_sub(1).max(1)];
    for (b, &a) in model.basis.iter().zip(coeff.iter()) {
        if a == 0.0 {
            continue;
        }
        let contribution = match b.kind {
            BasisKind::Constant => {
                // a/s over the common denominator.
                cofactor(true, None, None)
                    .iter()
                    .map(|x| a * x)
                    .collect::<Vec<f64>>()
            }
            BasisKind::DampedCos => {
                let idx = pair_keys
                    .iter()
                    .position(|&(g, w)| g == b.gamma && w == b.omega)
                    .unwrap();
                let co = cofactor(false, Some(idx), None);
                poly_mul(&[b.gamma, 1.0], &co)
                    .iter()
                    .map(|x| a * x)
                    .collect()
            }
            BasisKind::DampedSin => {
                let idx = pair_keys
                    .iter()
                    .position(|&(g, w)| g == b.gamma && w == b.omega)
                    .unwrap();
                cofactor(false, Some(idx), None)
                    .iter()
                    .map(|x| a * b.omega * x)
                    .collect()
            }
            BasisKind::Exponential => {
                let idx = exp_keys.iter().position(|&d| d == b.gamma).unwrap();
                cofactor(false, None, Some(idx))
                    .iter()
                    .map(|x| a * x)
                    .collect()
            }
            _ => unreachable!(),
        };
        numerator = poly_add(&numerator, &contribution);
    }

    Ok(RationalSignal {
        numerator,
        denominator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{lds_times, sample_record};
    use approx::assert_abs_diff_eq;

    fn single_component_model(
        template: &FitTemplate,
        theta: &[f64],
        coeffs: &[f64],
    ) -> SignalModel {
        let basis = template.instantiate(theta);
        SignalModel {
            basis,
            coeffs: vec![DVec::from_column_slice(coeffs)],
            components: vec![Observable::Z],
            log_likelihood: 0.0,
        }
    }

    #[test]
    fn constant_record_projects_exactly() {
        let times = lds_times(50, 10.0).unwrap();
        let rec = sample_record(|_| 0.5, &times, None, Observable::Z, 0).unwrap();
        let template = FitTemplate {
            pairs: 0,
            exponentials: 0,
            constant: true,
        };
        let model = fit_signal(&[rec], &template).unwrap();
        assert_eq!(model.basis.len(), 1);
        assert_abs_diff_eq!(model.coeffs[0][0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn evaluate_trivials() {
        let template = FitTemplate::qubit_generic();
        // a₀ = 1 only.
        let m = single_component_model(&template, &[0.1, 2.0, 0.3], &[1.0, 0.0, 0.0, 0.0]);
        let vals = m.evaluate_component(0, &[0.0, 1.0, 5.0]);
        assert!(vals.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // cos term at the origin.
        let m = single_component_model(&template, &[0.1, 2.0, 0.3], &[0.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(m.evaluate_component(0, &[0.0])[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn noiseless_damped_sinusoid_recovery() {
        let (gamma, omega, delta) = (0.0854, 4.899, 0.0492);
        let f = |t: f64| {
            -0.1 + 0.55 * (-gamma * t).exp() * (omega * t).cos()
                + 0.15 * (-gamma * t).exp() * (omega * t).sin()
                + 0.25 * (-delta * t).exp()
        };
        let times = lds_times(600, 50.0).unwrap();
        let rec = sample_record(f, &times, None, Observable::Z, 0).unwrap();
        let model = fit_signal(&[rec], &FitTemplate::qubit_generic()).unwrap();
        let (g, w, d) = (
            model.basis[1].gamma,
            model.basis[1].omega,
            model.basis[3].gamma,
        );
        assert!((g - gamma).abs() / gamma < 1e-6, "γ = {g}");
        assert!((w - omega).abs() / omega < 1e-6, "ω = {w}");
        assert!((d - delta).abs() / delta < 1e-6, "δ = {d}");
        assert_abs_diff_eq!(model.coeffs[0][0], -0.1, epsilon = 1e-7);
        assert_abs_diff_eq!(model.coeffs[0][1], 0.55, epsilon = 1e-7);
    }

    #[test]
    fn joint_fit_shares_nonlinear_parameters() {
        let (gamma, omega, delta) = (0.1, 3.0, 0.05);
        let times = lds_times(400, 30.0).unwrap();
        let f1 = |t: f64| 0.8 * (-gamma * t).exp() * (omega * t).cos();
        let f2 =
            |t: f64| 0.5 * (-gamma * t).exp() * (omega * t).sin() - 0.4 * (-delta * t).exp();
        let r1 = sample_record(f1, &times, None, Observable::X, 0).unwrap();
        let r2 = sample_record(f2, &times, None, Observable::Y, 0).unwrap();
        let model = fit_signal(&[r1, r2], &FitTemplate::qubit_generic()).unwrap();
        assert_eq!(model.n_components(), 2);
        assert!((model.basis[1].omega - omega).abs() < 1e-5);
        assert_abs_diff_eq!(model.coeffs[0][1], 0.8, epsilon = 1e-6);
        assert_abs_diff_eq!(model.coeffs[1][2], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(model.coeffs[1][3], -0.4, epsilon = 1e-6);
    }

    #[test]
    fn residual_orthogonal_to_basis() {
        let times = lds_times(500, 40.0).unwrap();
        let f = |t: f64| 0.7 * (-0.08 * t).exp() * (2.4 * t).cos() + 0.2 * (-0.05 * t).exp();
        let rec = sample_record(f, &times, Some(1000), Observable::Z, 42).unwrap();
        let model = fit_signal(&[rec.clone()], &FitTemplate::qubit_generic()).unwrap();
        let g = design_matrix(&model.basis, &rec.times);
        let fit = &g * &model.coeffs[0];
        let resid = DVec::from_column_slice(&rec.estimates) - fit;
        let data_norm = DVec::from_column_slice(&rec.estimates).norm();
        for j in 0..g.ncols() {
            let ip = g.column(j).dot(&resid) / g.column(j).norm().max(1e-300);
            assert!(
                ip.abs() < 1e-9 * data_norm,
                "residual not orthogonal to basis column {j}: {ip}"
            );
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let times = lds_times(5, 10.0).unwrap();
        let rec = sample_record(|_| 0.3, &times, None, Observable::Z, 0).unwrap();
        assert!(fit_signal(&[rec], &FitTemplate::qubit_generic()).is_err());
    }

    #[test]
    fn laplace_constant_only_matches_closed_form() {
        let template = FitTemplate::qubit_generic();
        let m = single_component_model(&template, &[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0, 0.0]);
        let r = laplace_of(&m, 0).unwrap();
        let (c, d) = r.quartic_coefficients().unwrap();
        // a₀ = 1, (γ, ω, δ) = (1, 2, 3).
        assert_abs_diff_eq!(c[0], 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[3], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[0], 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn laplace_pure_exponential_identity() {
        let template = FitTemplate::qubit_generic();
        let (gamma, omega, delta) = (0.7, 1.9, 0.4);
        let m = single_component_model(&template, &[gamma, omega, delta], &[0.0, 0.0, 0.0, 1.0]);
        let r = laplace_of(&m, 0).unwrap();
        for s in [0.3, 1.0, 2.5, 7.0] {
            assert_abs_diff_eq!(r.evaluate(s), 1.0 / (s + delta), epsilon = 1e-12);
        }
    }

    #[test]
    fn laplace_zero_coefficients() {
        let template = FitTemplate::qubit_generic();
        let m = single_component_model(&template, &[0.5, 1.0, 0.2], &[0.0; 4]);
        let r = laplace_of(&m, 0).unwrap();
        assert!(r.numerator.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplace_closed_form_identities() {
        // The recombined coefficients must satisfy the closed forms
        // C₀ = a₀δ(γ²+ω²), C₁ = a₀(γ²+2γδ+ω²) + a₁δγ + a₂δω + a₃(γ²+ω²),
        // C₂ = a₀(δ+2γ) + a₁(γ+δ) + a₂ω + 2γa₃, C₃ = a₀+a₁+a₃,
        // D₁ = δ(γ²+ω²), D₂ = 2γδ+γ²+ω², D₃ = 2γ+δ.
        let template = FitTemplate::qubit_generic();
        let cases = [
            ([0.3, 2.2, 0.15], [0.4, -0.7, 0.2, 0.5]),
            ([1.0, 0.5, 2.0], [1.0, 1.0, 1.0, 1.0]),
            ([0.05, 4.9, 0.08], [-0.2, 0.9, -0.3, 0.6]),
        ];
        for (theta, a) in cases {
            let m = single_component_model(&template, &theta, &a);
            let (c, d) = laplace_of(&m, 0).unwrap().quartic_coefficients().unwrap();
            let (g, w, dl) = (theta[0], theta[1], theta[2]);
            let (a0, a1, a2, a3) = (a[0], a[1], a[2], a[3]);
            assert_abs_diff_eq!(c[0], a0 * dl * (g * g + w * w), epsilon = 1e-12);
            assert_abs_diff_eq!(
                c[1],
                a0 * (g * g + 2.0 * g * dl + w * w) + a1 * dl * g + a2 * dl * w
                    + a3 * (g * g + w * w),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                c[2],
                a0 * (dl + 2.0 * g) + a1 * (g + dl) + a2 * w + 2.0 * g * a3,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(c[3], a0 + a1 + a3, epsilon = 1e-12);
            assert_abs_diff_eq!(d[0], dl * (g * g + w * w), epsilon = 1e-12);
            assert_abs_diff_eq!(d[1], 2.0 * g * dl + g * g + w * w, epsilon = 1e-12);
            assert_abs_diff_eq!(d[2], 2.0 * g + dl, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplace_rejects_polynomial_terms() {
        let basis = vec![
            BasisFn::constant(),
            BasisFn {
                kind: BasisKind::PolyDampedExp,
                gamma: 0.4,
                omega: 0.0,
                degree: 1,
            },
        ];
        let m = SignalModel {
            basis,
            coeffs: vec![DVec::from_column_slice(&[1.0, 1.0])],
            components: vec![Observable::Z],
            log_likelihood: 0.0,
        };
        assert!(matches!(
            laplace_of(&m, 0),
            Err(Error::UnsupportedBasis(_))
        ));
    }

    #[test]
    fn degenerate_design_detected() {
        // δ = γ with ω = 0 makes the damped-cosine and exponential columns
        // identical.
        let template = FitTemplate::qubit_generic();
        let times = lds_times(100, 20.0).unwrap();
        let basis = template.instantiate(&[0.5, 1e-14, 0.5]);
        let g = design_matrix(&basis, &times);
        let ys = vec![vec![0.0f64; times.len()]];
        let refs: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
        let (_, _, cond) = project_group(&g, &refs);
        assert!(cond > DEGENERATE_COND);
    }

    #[test]
    fn signal_model_json_shape() {
        let template = FitTemplate::qubit_generic();
        let m = single_component_model(&template, &[0.1, 2.0, 0.3], &[1.0, 0.5, 0.0, -0.2]);
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["basis"][1]["kind"], "damped_cos");
        assert!(v["basis"][1]["gamma"].as_f64().is_some());
        assert!(v["loglik"].as_f64().is_some());
        assert_eq!(v["coeffs"][0][1], 0.5);
    }
}
