//! Simulation and analysis of a single photon split over two homodyne-detected modes.
//!
//! The pipeline runs state preparation ([`fock`]), lossy dual homodyne
//! sampling ([`homodyne`], [`sampler`]), maximum-likelihood reconstruction of
//! the two-mode density matrix ([`maxlik`]), Wigner-function cuts ([`wigner`])
//! and threshold-discriminated Bell correlations ([`bell`]).
//!
//! Data-parallel loops use rayon when the default `parallel` feature is on and
//! fall back to sequential iteration otherwise; results are identical either way.

pub mod bell;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod maxlik;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod wigner;

pub use error::{Error, Result};
pub use fock::{
    apply_loss, beam_splitter_unitary, fidelity, make_input_state, make_true_state, phase_average,
    BeamSplitterSpec, FockCutoff, LossMode, ModelSpec, SingleModeDensityMatrix, TwoModeDensityMatrix,
};
pub use homodyne::{joint_pdf, JointDensity, PhaseSetting, PovmSet, QuadBin};
pub use bell::{analytic_correlation, correlation_curve, discriminate, BellConfig, BellCurve};
pub use maxlik::{reconstruct, ReconConfig, Reconstruction};
pub use sampler::{QuadratureSample, QuadratureSampler, RunConfig};
pub use wigner::{two_mode_wigner, PhasePoint4, Plane, WignerGrid};
