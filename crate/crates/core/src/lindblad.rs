//! Lindblad-form dynamics compiled into affine Bloch-equation form.
//!
//! An N-level Markovian master equation is specified by Hamiltonian
//! coefficients `h` and a Hermitian GKS coefficient matrix `f` over a
//! trace-zero Hermitian operator basis. Expanding the density matrix in that
//! basis turns the master equation into `ṙ = A r + c` with a real
//! `(N²−1)×(N²−1)` matrix `A` and real vector `c` — the identification
//! target for everything downstream.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermiticity_defect, min_hermitian_eigenvalue, CMat, DMat, DVec};

/// Entry tolerance for declaring `f` Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Lower bound on the minimum eigenvalue of `f` for a physical spec.
/// Slightly negative so rank-deficient (pure dephasing) specs pass under
/// floating-point noise.
pub const PHYSICALITY_TOL: f64 = -1e-10;

/// Residual bound for accepting a steady-state solution.
pub const STEADY_STATE_TOL: f64 = 1e-10;

/// Orthonormal Hermitian operator basis with the identity in the last slot.
///
/// The first `N²−1` elements are trace-zero and orthonormal under
/// `Tr(X†Y)`; the last is `I/√N`. For `N = 2` the ordering is the
/// normalised Pauli triple `(σx, σy, σz)/√2`.
#[derive(Clone, Debug)]
pub struct BasisSet {
    dim: usize,
    elements: Vec<CMat>,
}

impl BasisSet {
    /// Generalised Gell-Mann basis, normalised to `Tr(σ_m σ_n) = δ_mn`.
    ///
    /// Ordering: symmetric pair elements `(e_jk + e_kj)/√2` for `j < k` in
    /// lexicographic order, then the antisymmetric elements
    /// `−i(e_jk − e_kj)/√2`, then the diagonal elements, identity last.
    pub fn generalized_gell_mann(dim: usize) -> Self {
        assert!(dim >= 2, "Hilbert-space dimension must be at least 2");
        let n = dim;
        let mut elements = Vec::with_capacity(n * n);
        let inv_sqrt2 = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        for j in 0..n {
            for k in (j + 1)..n {
                let mut m = CMat::zeros(n, n);
                m[(j, k)] = inv_sqrt2;
                m[(k, j)] = inv_sqrt2;
                elements.push(m);
            }
        }
        for j in 0..n {
            for k in (j + 1)..n {
                let mut m = CMat::zeros(n, n);
                m[(j, k)] = Complex64::new(0.0, -1.0) * inv_sqrt2;
                m[(k, j)] = Complex64::new(0.0, 1.0) * inv_sqrt2;
                elements.push(m);
            }
        }
        for l in 1..n {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut m = CMat::zeros(n, n);
            for j in 0..l {
                m[(j, j)] = Complex64::new(norm, 0.0);
            }
            m[(l, l)] = Complex64::new(-(l as f64) * norm, 0.0);
            elements.push(m);
        }
        let ident = CMat::identity(n, n) * Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        elements.push(ident);
        Self { dim, elements }
    }

    /// Hilbert-space dimension N.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis elements, N².
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, k: usize) -> &CMat {
        &self.elements[k]
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }
}

/// Coefficient data of a Lindblad master equation.
///
/// `h` holds the Hamiltonian coefficients in the trace-zero orthonormal
/// basis (angular-frequency units with ħ = 1), `h0` the physically
/// irrelevant identity component, and `f` the Hermitian GKS coefficient
/// matrix (rate units). Dissipation operators are identified with the
/// trace-zero basis elements themselves.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    dim: usize,
    h: DVec,
    h0: f64,
    f: CMat,
}

impl LindbladSpec {
    pub fn new(dim: usize, h: DVec, h0: f64, f: CMat) -> Result<Self> {
        let d = dim * dim - 1;
        if dim < 2 {
            return Err(Error::InvalidInput("dimension must be at least 2".into()));
        }
        if h.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "h has length {}, expected {}",
                h.len(),
                d
            )));
        }
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "f is {}x{}, expected {}x{}",
                f.nrows(),
                f.ncols(),
                d,
                d
            )));
        }
        let defect = hermiticity_defect(&f);
        if defect > HERMITICITY_TOL {
            return Err(Error::NonHermitianF {
                max_asymmetry: defect,
            });
        }
        Ok(Self { dim, h, h0, f })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> &DVec {
        &self.h
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn f(&self) -> &CMat {
        &self.f
    }

    /// Hamiltonian as an N×N Hermitian matrix in the given basis.
    pub fn hamiltonian(&self, basis: &BasisSet) -> CMat {
        let n = self.dim;
        let mut ham = CMat::zeros(n, n);
        for (k, hk) in self.h.iter().enumerate() {
            ham += basis.element(k) * Complex64::new(*hk, 0.0);
        }
        ham += basis.element(basis.len() - 1) * Complex64::new(self.h0, 0.0);
        ham
    }
}

/// Real affine generator of the Bloch equation `ṙ = A r + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochModel {
    a: DMat,
    c: DVec,
}

impl BlochModel {
    /// Wrap a generator pair, checking shape and finiteness only.
    pub fn new(a: DMat, c: DVec) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.len() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {}",
                c.len(),
                a.nrows()
            )));
        }
        if a.iter().chain(c.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "A and c entries must be finite".into(),
            ));
        }
        Ok(Self { a, c })
    }

    /// Bloch-vector dimension d = N²−1.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMat {
        &self.a
    }

    pub fn c(&self) -> &DVec {
        &self.c
    }

    /// Relative Hilbert-Schmidt distance to another generator pair,
    /// `(‖Â−A‖_F + ‖ĉ−c‖) / (‖A‖_F + ‖c‖)`.
    pub fn relative_error(&self, other: &BlochModel) -> f64 {
        let num = (&self.a - &other.a).norm() + (&self.c - &other.c).norm();
        let den = other.a.norm() + other.c.norm();
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    }
}

impl Serialize for BlochModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let a: Vec<Vec<f64>> = (0..self.a.nrows())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect();
        let c: Vec<f64> = self.c.iter().copied().collect();
        BlochModelRepr { a, c }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlochModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BlochModelRepr::deserialize(deserializer)?;
        let d = repr.a.len();
        if repr.a.iter().any(|row| row.len() != d) {
            return Err(serde::de::Error::custom("A must be square, row-major"));
        }
        let a = DMat::from_row_iterator(d, d, repr.a.into_iter().flatten());
        let c = DVec::from_vec(repr.c);
        BlochModel::new(a, c).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct BlochModelRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
}

/// JSON shape of a [`LindbladSpec`]: real/imaginary parts of `f` row-major.
#[derive(Serialize, Deserialize)]
struct LindbladSpecRepr {
    dim: usize,
    h: Vec<f64>,
    #[serde(default)]
    h0: f64,
    f_re: Vec<Vec<f64>>,
    f_im: Vec<Vec<f64>>,
}

impl Serialize for LindbladSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.f.nrows();
        let f_re = (0..d)
            .map(|i| self.f.row(i).iter().map(|z| z.re).collect())
            .collect();
        let f_im = (0..d)
            .map(|i| self.f.row(i).iter().map(|z| z.im).collect())
            .collect();
        LindbladSpecRepr {
            dim: self.dim,
            h: self.h.iter().copied().collect(),
            h0: self.h0,
            f_re,
            f_im,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LindbladSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = LindbladSpecRepr::deserialize(deserializer)?;
        let d = repr.dim * repr.dim - 1;
        if repr.f_re.len() != d || repr.f_im.len() != d {
            return Err(serde::de::Error::custom("f_re/f_im must be (N²−1)×(N²−1)"));
        }
        let f = CMat::from_fn(d, d, |i, j| Complex64::new(repr.f_re[i][j], repr.f_im[i][j]));
        LindbladSpec::new(repr.dim, DVec::from_vec(repr.h), repr.h0, f)
            .map_err(serde::de::Error::custom)
    }
}

/// Compile a Lindblad spec into Bloch form.
///
/// Applies the master-equation generator to each basis element and projects
/// back onto the basis:
/// `G_mn = Tr(σ_m · [−i[H, σ_n] + Σ f_kl (σ_l σ_n σ_k − ½{σ_k σ_l, σ_n})])`.
/// The trace-zero block of `G` is `A`; the identity column divided by `√N`
/// is `c`. The identity *row* of `G` must vanish (trace preservation), which
/// is asserted during construction.
pub fn build_bloch(spec: &LindbladSpec, basis: &BasisSet) -> Result<BlochModel> {
    let n = spec.dim();
    if basis.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis is for dimension {}, spec has dimension {}",
            basis.dim(),
            n
        )));
    }
    if basis.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} elements, expected {}",
            basis.len(),
            n * n
        )));
    }
    let defect = hermiticity_defect(spec.f());
    if defect > HERMITICITY_TOL {
        return Err(Error::NonHermitianF {
            max_asymmetry: defect,
        });
    }

    let d = n * n - 1;
    let ham = spec.hamiltonian(basis);
    let i_unit = Complex64::new(0.0, 1.0);
    let half = Complex64::new(0.5, 0.0);

    // Precompute dissipator products σ_k σ_l over the trace-zero block.
    let mut products: Vec<Vec<CMat>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut row = Vec::with_capacity(d);
        for l in 0..d {
            row.push(basis.element(k) * basis.element(l));
        }
        products.push(row);
    }

    let full = n * n;
    let mut generator = DMatrix::zeros(full, full);
    let scale = 1.0 + spec.h.amax() + spec.f.camax();
    for col in 0..full {
        let x = basis.element(col);
        let mut lx = (&ham * x - x * &ham) * (-i_unit);
        for k in 0..d {
            for l in 0..d {
                let fkl = spec.f[(k, l)];
                if fkl.norm_sqr() == 0.0 {
                    continue;
                }
                let sandwich = basis.element(l) * x * basis.element(k);
                let anti = &products[k][l] * x + x * &products[k][l];
                lx += (sandwich - anti * half) * fkl;
            }
        }
        for row in 0..full {
            let tr: Complex64 = (basis.element(row).adjoint() * &lx).trace();
            debug_assert!(
                tr.im.abs() <= 1e-10 * scale,
                "generator entry has imaginary residue {}",
                tr.im
            );
            generator[(row, col)] = tr.re;
        }
    }

    // Trace preservation is structural: the identity row of the generator
    // must vanish.
    let last = full - 1;
    let trace_row_max = generator.row(last).amax();
    assert!(
        trace_row_max <= 1e-10 * scale,
        "trace-preservation row violated: {trace_row_max:.3e}"
    );

    let a = generator.view((0, 0), (d, d)).into_owned();
    let c = generator.view((0, last), (d, 1)).into_owned() / (n as f64).sqrt();
    BlochModel::new(a, DVector::from_column_slice(c.as_slice()))
}

/// Check positivity of the GKS coefficient matrix.
///
/// Returns the verdict together with the smallest eigenvalue of `f`; the
/// spec is physical iff that eigenvalue is at least [`PHYSICALITY_TOL`].
pub fn is_physical(spec: &LindbladSpec) -> (bool, f64) {
    let min_eig = min_hermitian_eigenvalue(spec.f());
    (min_eig >= PHYSICALITY_TOL, min_eig)
}

/// A steady-state solution set of `A r + c = 0`.
///
/// `point` is a particular solution (minimum norm); `null_basis` spans
/// `null(A)`, so the full solution set is `point + span(null_basis)`. The
/// basis is empty when `A` is invertible.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub point: DVec,
    pub null_basis: Vec<DVec>,
}

impl SteadyState {
    pub fn is_unique(&self) -> bool {
        self.null_basis.is_empty()
    }
}

/// Solve `0 = A r_ss + c` for the steady state(s).
///
/// Errors with [`Error::SteadyStateInconsistent`] when `c ∉ range(A)` beyond
/// tolerance, which signals corrupted input — it cannot occur for models
/// built from physical specs.
pub fn steady_state(model: &BlochModel) -> Result<SteadyState> {
    let d = model.dim();
    let svd = model.a().clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank_tol = smax * 1e-12 * d as f64;

    let u = svd.u.as_ref().expect("svd with U");
    let v_t = svd.v_t.as_ref().expect("svd with V");

    // Minimum-norm particular solution of A r = -c via the pseudo-inverse.
    let rhs = -model.c();
    let mut point = DVec::zeros(d);
    for i in 0..d {
        let s = svd.singular_values[i];
        if s > rank_tol {
            let coeff = u.column(i).dot(&rhs) / s;
            point += v_t.row(i).transpose() * coeff;
        }
    }

    let residual = (model.a() * &point + model.c()).norm();
    if residual > STEADY_STATE_TOL * (1.0 + model.c().norm()) {
        return Err(Error::SteadyStateInconsistent { residual });
    }

    let mut null_basis = Vec::new();
    for i in 0..d {
        if svd.singular_values[i] <= rank_tol {
            null_basis.push(v_t.row(i).transpose());
        }
    }
    Ok(SteadyState { point, null_basis })
}

/// Wrap a printed qubit generator pair verbatim. No physicality check.
pub fn embed_qubit_model(a: &DMat, c: &DVec) -> Result<BlochModel> {
    if a.nrows() != 3 || a.ncols() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "expected a 3x3 matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if c.len() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "expected a 3-vector, got length {}",
            c.len()
        )));
    }
    BlochModel::new(a.clone(), c.clone())
}
