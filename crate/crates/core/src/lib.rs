//! Identification of Markovian open-system dynamics from stroboscopic data.
//!
//! The crate models an N-level system whose density matrix evolves under a
//! Lindblad master equation. In a trace-zero Hermitian operator basis the
//! dynamics reduce to the affine Bloch equation `ṙ = A r + c`, and the goal
//! throughout is to recover the generator pair `(A, c)` — equivalently the
//! Hamiltonian and decoherence coefficients — from simulated measurement
//! records.
//!
//! The pipeline is organised as:
//!
//! - [`lindblad`]: Lindblad coefficient data compiled into [`lindblad::BlochModel`],
//!   physicality checks, steady states.
//! - [`propagation`]: exact trajectories `r(t) = r_ss + e^{tA}(r(0) − r_ss)`,
//!   eigenstructure analysis including the non-diagonalisable qubit taxonomy,
//!   and closed-form signal synthesis.
//! - [`measurement`]: low-discrepancy stroboscopic sampling and binomial
//!   shot-noise measurement records.
//! - [`signal`]: maximum-likelihood fitting of records to damped-sinusoid /
//!   multi-exponential bases, and Laplace transforms of fitted signals.
//! - [`recon_full`]: generator recovery from full Bloch-vector signal fits,
//!   including the degenerate (Jordan) qubit cases.
//! - [`recon_partial`]: Laplace-domain identification from one or two
//!   measured components under a structural model prior.
//! - [`models`]: the built-in qubit benchmark generators.

pub mod error;
pub mod lindblad;
pub mod linalg;
pub mod measurement;
pub mod models;
pub mod propagation;
pub mod recon_full;
pub mod recon_partial;
pub mod signal;

mod optim;

pub use error::{Error, Result};
pub use lindblad::{build_bloch, embed_qubit_model, is_physical, steady_state};
pub use lindblad::{BasisSet, BlochModel, LindbladSpec, SteadyState};
pub use measurement::{lds_times, sample_record, MeasurementRecord, Observable};
pub use propagation::{eigenstructure, propagate, signal_form};
pub use propagation::{CaseLabel, EigenStructure, SignalDescriptor, Trajectory};
pub use recon_full::{reconstruct_full, reconstruct_jordan, Identifiability, ReconstructionResult};
pub use recon_partial::{
    build_coefficient_system, laplace_point_identify, reconstruct_two_trace, solve_model,
    CoefficientSystem, ModelSolution, ParameterSet, Prior,
};
pub use signal::{evaluate_signal, fit_signal, laplace_of, FitTemplate, RationalSignal, SignalModel};
