//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type DMat = DMatrix<f64>;
pub type DVec = DVector<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Lift a real matrix into complex entries.
pub fn to_complex(m: &DMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Real part of a complex matrix.
pub fn real_part(m: &CMat) -> DMat {
    m.map(|z| z.re)
}

/// Largest absolute imaginary entry.
pub fn max_imag(m: &CMat) -> f64 {
    m.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

/// Max absolute deviation of `m` from its conjugate transpose.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis of the (numerical) null space of a complex matrix.
///
/// Columns of the returned vectors are right singular vectors whose singular
/// values fall at or below `tol`.
pub fn null_space(m: &CMat, tol: f64) -> Vec<CVec> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd computed with V");
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            basis.push(v_t.row(i).adjoint());
        }
    }
    basis
}

/// Numerical rank of a complex matrix at the given singular-value tolerance.
pub fn rank(m: &CMat, tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// 2-norm condition number of a complex matrix (infinite if singular).
pub fn condition_number(m: &CMat) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of a Hermitian complex matrix.
///
/// Uses the real symmetric embedding `[[Re, -Im], [Im, Re]]`, whose spectrum
/// is the Hermitian spectrum doubled.
pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let mut embed = DMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = m[(i, j)];
            embed[(i, j)] = z.re;
            embed[(i + d, j + d)] = z.re;
            embed[(i, j + d)] = -z.im;
            embed[(i + d, j)] = z.im;
        }
    }
    embed.symmetric_eigen().eigenvalues.min()
}

/// Eigenvalues of a real square matrix.
///
/// Uses the real Schur iteration with a bounded iteration count; exactly
/// degenerate inputs (for which the shifted QR iteration can fail to
/// deflate) fall back to Durand–Kerner iteration on the characteristic
/// polynomial.
pub fn eigenvalues(a: &DMat) -> Vec<Complex64> {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "square matrix required");
    let scale = a.amax();
    if scale == 0.0 {
        return vec![Complex64::new(0.0, 0.0); d];
    }
    if let Some(schur) = a.clone().try_schur(f64::EPSILON, 100 * d) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    durand_kerner(&char_poly(a))
}

fn poly_eval_complex(p: &[f64], z: Complex64) -> Complex64 {
    p.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Durand–Kerner (Weierstrass) root iteration for a monic polynomial with
/// ascending real coefficients.
fn durand_kerner(p: &[f64]) -> Vec<Complex64> {
    let d = p.len() - 1;
    let radius = 1.0 + p[..d].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let mut roots: Vec<Complex64> = (0..d)
        .map(|k| {
            Complex64::from_polar(
                0.6 * radius,
                2.0 * std::f64::consts::PI * k as f64 / d as f64 + 0.43,
            )
        })
        .collect();
    for _ in 0..600 {
        let mut step_max = 0.0f64;
        for i in 0..d {
            let zi = roots[i];
            let mut denom = Complex64::new(1.0, 0.0);
            for (j, zj) in roots.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let step = poly_eval_complex(p, zi) / denom;
            roots[i] = zi - step;
            step_max = step_max.max(step.norm());
        }
        if step_max < 1e-15 * radius {
            break;
        }
    }
    // The iteration keeps conjugate symmetry only approximately; snap tiny
    // imaginary parts.
    for r in roots.iter_mut() {
        if r.im.abs() < 1e-10 * radius {
            r.im = 0.0;
        }
    }
    roots
}

/// Real roots of the cubic `a x³ + b x² + c x + d`, by the closed-form
/// (trigonometric/Cardano) method with a Newton polish.
pub fn cubic_real_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    if a == 0.0 {
        // Quadratic fallback.
        if b == 0.0 {
            if c == 0.0 {
                return Vec::new();
            }
            return vec![-d / c];
        }
        let disc = c * c - 4.0 * b * d;
        if disc < 0.0 {
            return Vec::new();
        }
        let sq = disc.sqrt();
        return vec![(-c + sq) / (2.0 * b), (-c - sq) / (2.0 * b)];
    }
    let b = b / a;
    let c = c / a;
    let d = d / a;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let scale = 1.0 + p.abs().max(q.abs());
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    let mut roots = if disc.abs() <= 1e-14 * scale * scale {
        if p.abs() <= 1e-10 * scale {
            vec![shift]
        } else {
            vec![3.0 * q / p + shift, -3.0 * q / (2.0 * p) + shift]
        }
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        vec![u + v + shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    };
    // Two Newton steps on the original (normalised) cubic.
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let f = ((*r + b) * *r + c) * *r + d;
            let df = (3.0 * *r + 2.0 * b) * *r + c;
            if df.abs() > 1e-300 {
                *r -= f / df;
            }
        }
    }
    roots
}

/// Matrix exponential by scaling and squaring with a Taylor core.
///
/// The argument is scaled by `2^-k` until its max-norm is at most 1/2, the
/// exponential of the scaled matrix is summed to machine precision (18
/// Horner terms), and the result squared `k` times. Handles the zero and
/// near-zero cases exactly.
pub fn matrix_exp(a: &DMat) -> DMat {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "square matrix required");
    let norm = a.amax();
    if norm == 0.0 {
        return DMat::identity(d, d);
    }
    let k = (norm / 0.5).log2().ceil().max(0.0) as i32;
    let scaled = a / 2f64.powi(k);
    // exp(B) = I + B(I + B/2 (I + B/3 (...))) with 18 terms.
    let mut acc = DMat::identity(d, d);
    for n in (1..=18).rev() {
        acc = DMat::identity(d, d) + &scaled * acc / n as f64;
    }
    for _ in 0..k {
        acc = &acc * &acc;
    }
    acc
}

/// Characteristic polynomial of a real matrix, ascending coefficients.
///
/// Returns `p` with `det(sI - A) = p[0] + p[1] s + ... + p[d] s^d`, `p[d] = 1`.
pub fn char_poly(a: &DMat) -> Vec<f64> {
    let (p, _) = faddeev_leverrier(a);
    p
}

/// Faddeev–LeVerrier recursion.
///
/// Returns `(p, n)` where `p` are the ascending characteristic-polynomial
/// coefficients of `det(sI - A)` and `n[k]` the matrix coefficients of the
/// adjugate, `adj(sI - A) = Σ_k s^k n[k]` for `k = 0..d-1`, so that
/// `(sI - A)^{-1} = adj(sI - A) / det(sI - A)`.
pub fn faddeev_leverrier(a: &DMat) -> (Vec<f64>, Vec<DMat>) {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "square matrix required");
    let mut coeffs = vec![0.0; d + 1];
    coeffs[d] = 1.0;
    let mut adj = vec![DMat::zeros(d, d); d];
    let mut m = DMat::identity(d, d);
    for k in 1..=d {
        // m holds M_k; coefficient of s^{d-k} in the adjugate.
        adj[d - k] = m.clone();
        let am = a * &m;
        let c = -am.trace() / k as f64;
        coeffs[d - k] = c;
        if k < d {
            m = am + DMat::identity(d, d) * c;
        }
    }
    (coeffs, adj)
}

/// Multiply two polynomials given by ascending coefficient lists.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Add polynomials of possibly different lengths (ascending coefficients).
pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Evaluate an ascending-coefficient polynomial by Horner's rule.
pub fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn char_poly_matches_eigenvalues() {
        let a = DMat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, -1.0]);
        let p = char_poly(&a);
        // (s-2)(s-3)(s+1) = s^3 - 4 s^2 + s + 6
        assert_abs_diff_eq!(p[3], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn adjugate_reconstructs_resolvent() {
        let a = DMat::from_row_slice(3, 3, &[0.5, -1.0, 0.2, 1.0, 0.1, 0.0, 0.0, 0.3, -0.7]);
        let (p, adj) = faddeev_leverrier(&a);
        let s = 1.7;
        let resolvent = (DMat::identity(3, 3) * s - &a)
            .try_inverse()
            .expect("s is not an eigenvalue");
        let mut num = DMat::zeros(3, 3);
        let mut sk = 1.0;
        for m in &adj {
            num += m * sk;
            sk *= s;
        }
        let den = poly_eval(&p, s);
        let diff = (&num / den - resolvent).norm();
        assert!(diff < 1e-12, "resolvent mismatch: {diff}");
    }

    #[test]
    fn matrix_exp_zero_and_rotation() {
        let e = matrix_exp(&DMat::zeros(3, 3));
        assert!((e - DMat::identity(3, 3)).amax() < 1e-15);

        // Planar rotation generator: exp(tW) is the rotation by ωt.
        let w = 1.3;
        let g = DMat::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
        for t in [0.0, 0.4, 2.0, 17.0] {
            let e = matrix_exp(&(&g * t));
            assert_abs_diff_eq!(e[(0, 0)], (w * t).cos(), epsilon = 1e-13);
            assert_abs_diff_eq!(e[(1, 0)], (w * t).sin(), epsilon = 1e-13);
        }

        // Nilpotent block: exp picks up the polynomial part exactly.
        let n = DMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exp(&(&n * 3.5));
        assert_abs_diff_eq!(e[(0, 1)], 3.5, epsilon = 1e-14);
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let m = to_complex(&DMat::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ));
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.len(), 1);
        assert_abs_diff_eq!(ns[0][2].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hermitian_min_eigenvalue() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(-2.0, 0.0);
        m[(0, 1)] = Complex64::new(0.0, 0.5);
        m[(1, 0)] = Complex64::new(0.0, -0.5);
        // eigenvalues of [[1, i/2], [-i/2, -2]]: (-1/2) ± sqrt(9/4 + 1/4)
        let expect = -0.5 - (2.5f64).sqrt();
        assert_abs_diff_eq!(min_hermitian_eigenvalue(&m), expect, epsilon = 1e-10);
    }

    #[test]
    fn poly_ops() {
        let p = poly_mul(&[1.0, 1.0], &[-2.0, 1.0]); // (1+s)(s-2) = -2 - s + s^2
        assert_eq!(p, vec![-2.0, -1.0, 1.0]);
        assert_eq!(poly_add(&[1.0], &[0.0, 2.0]), vec![1.0, 2.0]);
        assert_abs_diff_eq!(poly_eval(&[1.0, 2.0, 3.0], 2.0), 17.0);
    }
}
