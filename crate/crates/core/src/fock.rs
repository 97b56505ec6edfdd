//! Truncated Fock-space states and channels for two optical modes.
//!
//! Two-mode operators are stored densely as `(n_max+1)² × (n_max+1)²` complex
//! matrices with the basis index `|k, l⟩ ↦ k·(n_max+1) + l` (mode A major).
//! The element `ρ_klmn = ⟨k_A, l_B| ρ |m_A, n_B⟩`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Photon-number cap per mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub const DEFAULT: FockCutoff = FockCutoff(5);

    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::param("n_max", "photon-number cutoff must be at least 1"));
        }
        Ok(FockCutoff(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    /// Single-mode dimension `n_max + 1`.
    pub fn dim(self) -> usize {
        self.0 + 1
    }

    pub fn two_mode_dim(self) -> usize {
        self.dim() * self.dim()
    }

    #[inline]
    pub fn index(self, k: usize, l: usize) -> usize {
        k * self.dim() + l
    }

    #[inline]
    pub fn split(self, idx: usize) -> (usize, usize) {
        (idx / self.dim(), idx % self.dim())
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        FockCutoff::new(n)
    }
}

impl From<FockCutoff> for usize {
    fn from(c: FockCutoff) -> usize {
        c.0
    }
}

/// Real beam-splitter amplitudes with `τ² + ρ² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterSpec {
    tau: f64,
    rho: f64,
    // kept verbatim so JSON round trips are exact
    tau_squared: f64,
}

impl BeamSplitterSpec {
    pub fn new(tau: f64, rho: f64) -> Result<Self> {
        if !(tau >= 0.0 && rho >= 0.0) {
            return Err(Error::param("tau", "amplitudes must be non-negative"));
        }
        if ((tau * tau + rho * rho) - 1.0).abs() > 1e-12 {
            return Err(Error::param("tau", format!("tau² + rho² = {} ≠ 1", tau * tau + rho * rho)));
        }
        Ok(Self { tau, rho, tau_squared: tau * tau })
    }

    /// Build from the intensity transmission `τ²`.
    pub fn from_transmission(tau_squared: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau_squared) {
            return Err(Error::param("tau_squared", format!("{tau_squared} is outside [0, 1]")));
        }
        Ok(Self { tau: tau_squared.sqrt(), rho: (1.0 - tau_squared).sqrt(), tau_squared })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn transmission(&self) -> f64 {
        self.tau_squared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleModeDensityMatrix {
    elements: DMatrix<Complex64>,
}

impl SingleModeDensityMatrix {
    pub fn from_matrix(elements: DMatrix<Complex64>) -> Result<Self> {
        if !elements.is_square() {
            return Err(Error::Dimension { expected: elements.nrows(), got: elements.ncols() });
        }
        check_density(&elements)?;
        Ok(Self { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    /// Bernoulli photon loss with survival probability `eta`.
    pub fn apply_loss(&self, eta: f64) -> Result<Self> {
        check_loss_eta(eta)?;
        let d = self.dim();
        let mut out = DMatrix::from_element(d, d, ZERO);
        for m in 0..d {
            for n in 0..d {
                let mut acc = ZERO;
                for k in 0..d - m.max(n) {
                    acc += self.elements[(m + k, n + k)] * bernoulli_coefficient(m, n, k, eta);
                }
                out[(m, n)] = acc;
            }
        }
        Ok(Self { elements: out })
    }
}

/// `√(C(m+k,k) C(n+k,k)) η^{(m+n)/2} (1−η)^k`, the weight moving `ρ_{m+k,n+k}` to `ρ_{mn}` under loss.
pub fn bernoulli_coefficient(m: usize, n: usize, k: usize, eta: f64) -> f64 {
    (binomial(m + k, k) * binomial(n + k, k)).sqrt()
        * eta.powf(0.5 * (m + n) as f64)
        * (1.0 - eta).powi(k as i32)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn check_loss_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", format!("loss efficiency {eta} is outside (0, 1]")));
    }
    Ok(())
}

fn check_density(m: &DMatrix<Complex64>) -> Result<()> {
    let herm = hermiticity_error(m);
    if herm > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} ≠ 1")));
    }
    let min_eig = min_eigenvalue(m);
    if min_eig < -PSD_TOL {
        return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

pub(crate) fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    hermitize(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Dense two-mode density matrix `ρ_klmn` over the truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeDensityMatrix {
    cutoff: FockCutoff,
    elements: DMatrix<Complex64>,
}

impl TwoModeDensityMatrix {
    /// Validated constructor: Hermitian, unit trace and PSD within tolerance.
    pub fn from_matrix(cutoff: FockCutoff, elements: DMatrix<Complex64>) -> Result<Self> {
        let dim = cutoff.two_mode_dim();
        if elements.nrows() != dim || elements.ncols() != dim {
            return Err(Error::Dimension { expected: dim, got: elements.nrows() });
        }
        check_density(&elements)?;
        Ok(Self { cutoff, elements })
    }

    /// Construct without validation; callers guarantee the invariants by construction.
    pub(crate) fn from_matrix_unchecked(cutoff: FockCutoff, elements: DMatrix<Complex64>) -> Self {
        debug_assert_eq!(elements.nrows(), cutoff.two_mode_dim());
        Self { cutoff, elements }
    }

    pub fn vacuum(cutoff: FockCutoff) -> Self {
        Self::basis_state(cutoff, 0, 0)
    }

    pub fn basis_state(cutoff: FockCutoff, k: usize, l: usize) -> Self {
        let d = cutoff.two_mode_dim();
        let mut m = DMatrix::from_element(d, d, ZERO);
        let i = cutoff.index(k, l);
        m[(i, i)] = ONE;
        Self { cutoff, elements: m }
    }

    /// Identity over the full truncated space, normalized.
    pub fn maximally_mixed(cutoff: FockCutoff) -> Self {
        let d = cutoff.two_mode_dim();
        let m = DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0));
        Self { cutoff, elements: m }
    }

    /// Pure state from amplitudes indexed `k·(n_max+1) + l`; the vector is normalized here.
    pub fn pure(cutoff: FockCutoff, amplitudes: &[Complex64]) -> Result<Self> {
        let d = cutoff.two_mode_dim();
        if amplitudes.len() != d {
            return Err(Error::Dimension { expected: d, got: amplitudes.len() });
        }
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::param("amplitudes", "zero vector"));
        }
        let v = v / Complex64::new(norm, 0.0);
        Ok(Self { cutoff, elements: &v * v.adjoint() })
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.elements
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, m: usize, n: usize) -> Complex64 {
        self.elements[(self.cutoff.index(k, l), self.cutoff.index(m, n))]
    }

    pub fn trace(&self) -> Complex64 {
        self.elements.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.elements)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.elements)
    }

    pub fn validate(&self) -> Result<()> {
        check_density(&self.elements)
    }

    /// Largest total photon number `k+l` (or `m+n`) carrying a non-zero element.
    pub fn max_sector(&self) -> usize {
        let d = self.cutoff.two_mode_dim();
        let mut best = 0;
        for i in 0..d {
            for j in 0..d {
                if self.elements[(i, j)] != ZERO {
                    let (k, l) = self.cutoff.split(i);
                    let (m, n) = self.cutoff.split(j);
                    best = best.max(k + l).max(m + n);
                }
            }
        }
        best
    }

    /// Whether every element with `k+l ≠ m+n` is exactly zero.
    pub fn is_sector_supported(&self) -> bool {
        self.off_sector_norm() == 0.0
    }

    /// Largest magnitude among elements with `k+l ≠ m+n`.
    pub fn off_sector_norm(&self) -> f64 {
        let d = self.cutoff.two_mode_dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                if sector(self.cutoff, i) != sector(self.cutoff, j) {
                    worst = worst.max(self.elements[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// Non-zero elements as `(k, l, m, n, ρ_klmn)`.
    pub fn nonzero_entries(&self) -> Vec<(usize, usize, usize, usize, Complex64)> {
        let d = self.cutoff.two_mode_dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let v = self.elements[(i, j)];
                if v != ZERO {
                    let (k, l) = self.cutoff.split(i);
                    let (m, n) = self.cutoff.split(j);
                    out.push((k, l, m, n, v));
                }
            }
        }
        out
    }

    /// Reduced single-mode state of mode A.
    pub fn reduced_a(&self) -> DMatrix<Complex64> {
        let d = self.cutoff.dim();
        DMatrix::from_fn(d, d, |k, m| (0..d).map(|l| self.get(k, l, m, l)).sum())
    }

    pub fn reduced_b(&self) -> DMatrix<Complex64> {
        let d = self.cutoff.dim();
        DMatrix::from_fn(d, d, |l, n| (0..d).map(|k| self.get(k, l, k, n)).sum())
    }

    /// Max-norm distance between two states of the same cutoff.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.elements - &other.elements).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn sector(cutoff: FockCutoff, idx: usize) -> usize {
    let (k, l) = cutoff.split(idx);
    k + l
}

/// JSON form of a two-mode state: nested row arrays for the real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDocument {
    pub n_max: usize,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl From<&TwoModeDensityMatrix> for StateDocument {
    fn from(s: &TwoModeDensityMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            s.elements.row_iter().map(|r| r.iter().map(f).collect()).collect()
        };
        StateDocument { n_max: s.cutoff.n_max(), real: rows(|z| z.re), imag: rows(|z| z.im) }
    }
}

impl TryFrom<StateDocument> for TwoModeDensityMatrix {
    type Error = Error;
    fn try_from(doc: StateDocument) -> Result<Self> {
        let cutoff = FockCutoff::new(doc.n_max)?;
        let d = cutoff.two_mode_dim();
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !shape_ok(&doc.real) || !shape_ok(&doc.imag) {
            return Err(Error::Dimension { expected: d, got: doc.real.len() });
        }
        let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(doc.real[i][j], doc.imag[i][j]));
        TwoModeDensityMatrix::from_matrix(cutoff, m)
    }
}

impl Serialize for TwoModeDensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoModeDensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = StateDocument::deserialize(d)?;
        TwoModeDensityMatrix::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Preparation and detection parameters of the simulated experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct ModelSpec {
    pub eta_prep: f64,
    pub eta_det: f64,
    pub bs: BeamSplitterSpec,
    pub cutoff: FockCutoff,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    eta_prep: f64,
    eta_det: f64,
    tau_squared: f64,
    #[serde(default = "default_n_max")]
    n_max: usize,
}

fn default_n_max() -> usize {
    FockCutoff::DEFAULT.n_max()
}

impl TryFrom<ModelDocument> for ModelSpec {
    type Error = Error;
    fn try_from(d: ModelDocument) -> Result<Self> {
        ModelSpec::new(d.eta_prep, d.eta_det, d.tau_squared, FockCutoff::new(d.n_max)?)
    }
}

impl From<ModelSpec> for ModelDocument {
    fn from(m: ModelSpec) -> Self {
        ModelDocument {
            eta_prep: m.eta_prep,
            eta_det: m.eta_det,
            tau_squared: m.bs.transmission(),
            n_max: m.cutoff.n_max(),
        }
    }
}

impl ModelSpec {
    pub fn new(eta_prep: f64, eta_det: f64, tau_squared: f64, cutoff: FockCutoff) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_prep) {
            return Err(Error::param("eta_prep", format!("{eta_prep} is outside [0, 1]")));
        }
        if !(eta_det > 0.0 && eta_det <= 1.0) {
            return Err(Error::param("eta_det", format!("{eta_det} is outside (0, 1]")));
        }
        let bs = BeamSplitterSpec::from_transmission(tau_squared)?;
        Ok(Self { eta_prep, eta_det, bs, cutoff })
    }

    /// Parameters matching the symmetric-splitter run: η = 0.64, η_det = 0.86, τ² = 0.5.
    pub fn symmetric_experiment() -> Self {
        Self::new(0.64, 0.86, 0.5, FockCutoff::DEFAULT).expect("constant model is valid")
    }

    /// Overall single-photon survival `η·η_det`.
    pub fn eta_eff(&self) -> f64 {
        self.eta_prep * self.eta_det
    }

    pub fn with_eta_det(self, eta_det: f64) -> Result<Self> {
        Self::new(self.eta_prep, eta_det, self.bs.transmission(), self.cutoff)
    }
}

/// `η|1⟩⟨1| + (1−η)|0⟩⟨0|` truncated at `cutoff`.
pub fn make_input_state(eta_prep: f64, cutoff: FockCutoff) -> Result<SingleModeDensityMatrix> {
    if !(0.0..=1.0).contains(&eta_prep) {
        return Err(Error::param("eta_prep", format!("{eta_prep} is outside [0, 1]")));
    }
    let d = cutoff.dim();
    let mut m = DMatrix::from_element(d, d, ZERO);
    m[(0, 0)] = Complex64::new(1.0 - eta_prep, 0.0);
    m[(1, 1)] = Complex64::new(eta_prep, 0.0);
    Ok(SingleModeDensityMatrix { elements: m })
}

/// Fock-basis beam-splitter matrix. Columns `|k,l⟩` with `k+l > n_max` lose
/// amplitude to truncated states and are not unitary; see [`Self::is_exact`].
#[derive(Debug, Clone)]
pub struct BeamSplitterUnitary {
    cutoff: FockCutoff,
    matrix: DMatrix<f64>,
}

impl BeamSplitterUnitary {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    /// ⟨p,q|U|k,l⟩
    pub fn element(&self, p: usize, q: usize, k: usize, l: usize) -> f64 {
        self.matrix[(self.cutoff.index(p, q), self.cutoff.index(k, l))]
    }

    /// Rows and columns with `k+l ≤ n_max` are free of truncation error.
    pub fn is_exact(&self, k: usize, l: usize) -> bool {
        k + l <= self.cutoff.n_max()
    }
}

/// Beam splitter acting as `a₁† ↦ τ a_A† − ρ a_B†`, `a₂† ↦ ρ a_A† + τ a_B†`,
/// so that `U|1,0⟩ = τ|1,0⟩ − ρ|0,1⟩`.
pub fn beam_splitter_unitary(bs: BeamSplitterSpec, cutoff: FockCutoff) -> BeamSplitterUnitary {
    let (tau, rho) = (bs.tau, bs.rho);
    let d = cutoff.dim();
    let dim = cutoff.two_mode_dim();
    let mut u = DMatrix::zeros(dim, dim);
    for k in 0..d {
        for l in 0..d {
            let total = k + l;
            let norm_in = (factorial(k) * factorial(l)).sqrt();
            // (τa† − ρb†)^k (ρa† + τb†)^l |0⟩ expanded in powers of a†
            for p in 0..=total.min(cutoff.n_max()) {
                let q = total - p;
                if q > cutoff.n_max() {
                    continue;
                }
                let mut amp = 0.0;
                for i in 0..=k.min(p) {
                    let j = p - i;
                    if j > l {
                        continue;
                    }
                    amp += binomial(k, i)
                        * binomial(l, j)
                        * tau.powi((i + l - j) as i32)
                        * (-rho).powi((k - i) as i32)
                        * rho.powi(j as i32);
                }
                u[(cutoff.index(p, q), cutoff.index(k, l))] =
                    amp * (factorial(p) * factorial(q)).sqrt() / norm_in;
            }
        }
    }
    BeamSplitterUnitary { cutoff, matrix: u }
}

/// `U ρ U†`; rejects states with support above the cutoff's complete sectors.
pub fn apply_beam_splitter(
    state: &TwoModeDensityMatrix,
    bs: BeamSplitterSpec,
) -> Result<TwoModeDensityMatrix> {
    let cutoff = state.cutoff;
    let top = state.max_sector();
    if top > cutoff.n_max() {
        return Err(Error::Truncation { sector: top, n_max: cutoff.n_max() });
    }
    let u = beam_splitter_unitary(bs, cutoff).matrix.map(|x| Complex64::new(x, 0.0));
    let out = &u * &state.elements * u.adjoint();
    Ok(TwoModeDensityMatrix { cutoff, elements: hermitize(&out) })
}

/// `U (ρ_in ⊗ |0⟩⟨0|) U†`, optionally followed by detector loss `η_det` on both modes.
pub fn make_true_state(model: &ModelSpec, include_detection_loss: bool) -> TwoModeDensityMatrix {
    let cutoff = model.cutoff;
    let input = make_input_state(model.eta_prep, cutoff).expect("ModelSpec is validated");
    let dim = cutoff.two_mode_dim();
    let mut product = DMatrix::from_element(dim, dim, ZERO);
    for k in 0..cutoff.dim() {
        for m in 0..cutoff.dim() {
            product[(cutoff.index(k, 0), cutoff.index(m, 0))] = input.get(k, m);
        }
    }
    let product = TwoModeDensityMatrix { cutoff, elements: product };
    let out = apply_beam_splitter(&product, model.bs).expect("input has at most one photon");
    if include_detection_loss {
        apply_loss(&out, model.eta_det, LossMode::Both).expect("ModelSpec is validated")
    } else {
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    A,
    B,
    Both,
}

/// Bernoulli photon loss on the selected mode(s).
pub fn apply_loss(
    state: &TwoModeDensityMatrix,
    eta: f64,
    mode: LossMode,
) -> Result<TwoModeDensityMatrix> {
    check_loss_eta(eta)?;
    let out = match mode {
        LossMode::A => loss_on_mode(state, eta, true),
        LossMode::B => loss_on_mode(state, eta, false),
        LossMode::Both => loss_on_mode(&loss_on_mode(state, eta, true), eta, false),
    };
    Ok(out)
}

fn loss_on_mode(state: &TwoModeDensityMatrix, eta: f64, mode_a: bool) -> TwoModeDensityMatrix {
    if eta == 1.0 {
        return state.clone();
    }
    let c = state.cutoff;
    let d = c.dim();
    let dim = c.two_mode_dim();
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for i in 0..dim {
        let (k, l) = c.split(i);
        for j in 0..dim {
            let (m, n) = c.split(j);
            let mut acc = ZERO;
            if mode_a {
                for s in 0..d - k.max(m) {
                    acc += state.get(k + s, l, m + s, n) * bernoulli_coefficient(k, m, s, eta);
                }
            } else {
                for s in 0..d - l.max(n) {
                    acc += state.get(k, l + s, m, n + s) * bernoulli_coefficient(l, n, s, eta);
                }
            }
            out[(i, j)] = acc;
        }
    }
    TwoModeDensityMatrix { cutoff: c, elements: out }
}

/// Zero every element with `k+l ≠ m+n`.
pub fn phase_average(state: &TwoModeDensityMatrix) -> TwoModeDensityMatrix {
    let c = state.cutoff;
    let mut m = state.elements.clone();
    project_sectors(c, &mut m);
    TwoModeDensityMatrix { cutoff: c, elements: m }
}

pub(crate) fn project_sectors(c: FockCutoff, m: &mut DMatrix<Complex64>) {
    let dim = c.two_mode_dim();
    for i in 0..dim {
        for j in 0..dim {
            if sector(c, i) != sector(c, j) {
                m[(i, j)] = ZERO;
            }
        }
    }
}

fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = hermitize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(Tr √(√a b √a))²`, clamped to `[0, 1]`.
pub fn fidelity(a: &TwoModeDensityMatrix, b: &TwoModeDensityMatrix) -> Result<f64> {
    if a.cutoff != b.cutoff {
        return Err(Error::Dimension {
            expected: a.cutoff.two_mode_dim(),
            got: b.cutoff.two_mode_dim(),
        });
    }
    let sa = psd_sqrt(&a.elements);
    let inner = hermitize(&(&sa * &b.elements * &sa));
    let root_sum: f64 = inner.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Random density matrix `G G† / Tr` with `G` a `dim × rank` matrix of uniform complex entries.
pub fn random_density_matrix<R: Rng + ?Sized>(
    cutoff: FockCutoff,
    rank: usize,
    rng: &mut R,
) -> TwoModeDensityMatrix {
    let dim = cutoff.two_mode_dim();
    let g = DMatrix::from_fn(dim, rank.max(1), |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut m = &g * g.adjoint();
    let tr = m.trace();
    m /= tr;
    TwoModeDensityMatrix { cutoff, elements: hermitize(&m) }
}
