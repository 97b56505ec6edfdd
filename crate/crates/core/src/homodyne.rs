//! Quadrature wavefunctions, homodyne POVM elements and the joint quadrature density.
//!
//! Quadratures are in shot-noise units with vacuum variance 1/2, i.e.
//! `ψ₀(x) = π^{-1/4} e^{-x²/2}`. A detector with local-oscillator phase θ has
//! point elements `⟨m|Π(θ, x)|n⟩ = e^{i(n−m)θ} ψ_m(x) ψ_n(x)`. Alice's phase is
//! `θ_A = δθ` and Bob's is `θ_B = 0`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::ops::{AddAssign, Mul};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    apply_loss, bernoulli_coefficient, make_input_state, make_true_state, phase_average, sector,
    FockCutoff, LossMode, ModelSpec, TwoModeDensityMatrix,
};
use crate::par;
use crate::quadrature;

/// Absolute tolerance for bin overlap integrals.
pub const BIN_TOL: f64 = 1e-10;

/// Relative local-oscillator phase `δθ = θ_A − θ_B`, wrapped to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSetting {
    delta_theta: f64,
}

impl PhaseSetting {
    pub fn new(delta_theta: f64) -> Self {
        Self { delta_theta: wrap_phase(delta_theta) }
    }

    pub fn delta_theta(self) -> f64 {
        self.delta_theta
    }
}

pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Quadrature interval `[lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBin {
    pub lo: f64,
    pub hi: f64,
}

impl QuadBin {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::param("bin", format!("need lo < hi, got [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }
}

/// Bins delimited by strictly increasing `edges`.
pub fn bins_from_edges(edges: &[f64]) -> Result<Vec<QuadBin>> {
    if edges.len() < 2 {
        return Err(Error::param("quad_edges", "need at least two edges"));
    }
    edges.windows(2).map(|w| QuadBin::new(w[0], w[1])).collect()
}

/// Normalized Hermite function `ψ_n(x)` via the three-term recurrence.
pub fn fock_wavefunction(n: usize, x: f64) -> f64 {
    let mut out = vec![0.0; n + 1];
    fock_wavefunctions(x, &mut out);
    out[n]
}

/// Fill `out[n] = ψ_n(x)` for `n < out.len()`.
pub fn fock_wavefunctions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// Real symmetric matrix `∫_bin ψ_m ψ_n dx`.
pub fn overlap_matrix(bin: QuadBin, cutoff: FockCutoff) -> DMatrix<f64> {
    let d = cutoff.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|m| (m..d).map(move |n| (m, n))).collect();
    let integrand = (pairs.len(), |x: f64, out: &mut [f64]| {
        let mut psi = vec![0.0; d];
        fock_wavefunctions(x, &mut psi);
        for (o, &(m, n)) in out.iter_mut().zip(&pairs) {
            *o = psi[m] * psi[n];
        }
    });
    let vals = quadrature::integrate(&integrand, bin.lo, bin.hi, BIN_TOL);
    let mut out = DMatrix::zeros(d, d);
    for (&(m, n), v) in pairs.iter().zip(vals) {
        out[(m, n)] = v;
        out[(n, m)] = v;
    }
    out
}

fn with_phase(real: &DMatrix<f64>, theta: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(real.nrows(), real.ncols(), |m, n| {
        Complex64::from_polar(real[(m, n)], (n as f64 - m as f64) * theta)
    })
}

/// `⟨m|Π|n⟩ = e^{i(n−m)θ} ∫_bin ψ_m ψ_n dx`.
pub fn ideal_povm_element(theta: f64, bin: QuadBin, cutoff: FockCutoff) -> DMatrix<Complex64> {
    with_phase(&overlap_matrix(bin, cutoff), theta)
}

/// Adjoint of the Bernoulli loss channel, so that `Tr[ρ L†(Π)] = Tr[L(ρ) Π]`.
///
/// Within the cutoff this is exact: an adjusted entry `(m+k, n+k)` only draws on
/// the ideal entry `(m, n)` below it.
pub fn loss_adjoint<T>(element: &DMatrix<T>, eta: f64) -> Result<DMatrix<T>>
where
    T: nalgebra::Scalar + Copy + Zero + Mul<f64, Output = T> + AddAssign,
{
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta_det", format!("{eta} is outside (0, 1]")));
    }
    let d = element.nrows();
    let mut out = DMatrix::from_element(d, d, T::zero());
    for m in 0..d {
        for n in 0..d {
            let v = element[(m, n)];
            for k in 0..d - m.max(n) {
                out[(m + k, n + k)] += v * bernoulli_coefficient(m, n, k, eta);
            }
        }
    }
    Ok(out)
}

/// Ideal element with the detector inefficiency folded in.
pub fn adjusted_povm_element(
    theta: f64,
    bin: QuadBin,
    eta_det: f64,
    cutoff: FockCutoff,
) -> Result<DMatrix<Complex64>> {
    loss_adjoint(&ideal_povm_element(theta, bin, cutoff), eta_det)
}

/// Pointwise element `e^{i(n−m)θ} ψ_m(x) ψ_n(x)`.
pub fn point_povm_element(theta: f64, x: f64, cutoff: FockCutoff) -> DMatrix<Complex64> {
    let mut psi = vec![0.0; cutoff.dim()];
    fock_wavefunctions(x, &mut psi);
    let real = DMatrix::from_fn(cutoff.dim(), cutoff.dim(), |m, n| psi[m] * psi[n]);
    with_phase(&real, theta)
}

/// Joint quadrature density of a fixed state, prepared once for repeated evaluation.
///
/// The state is phase-averaged and then degraded by `eta_det` on both modes;
/// by duality this equals evaluating the loss-adjusted point elements on the
/// original state.
#[derive(Debug, Clone)]
pub struct JointDensity {
    cutoff: FockCutoff,
    entries: Vec<(usize, usize, usize, usize, Complex64)>,
}

impl JointDensity {
    pub fn new(state: &TwoModeDensityMatrix, eta_det: f64) -> Result<Self> {
        let averaged = phase_average(state);
        let lossy = apply_loss(&averaged, eta_det, LossMode::Both)?;
        Ok(Self { cutoff: state.cutoff(), entries: lossy.nonzero_entries() })
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    /// `(k, l, m, n, ρ_klmn)` of the detected (lossy, phase-averaged) state.
    pub fn entries(&self) -> &[(usize, usize, usize, usize, Complex64)] {
        &self.entries
    }

    pub fn eval(&self, delta_theta: f64, x_a: f64, x_b: f64) -> f64 {
        let d = self.cutoff.dim();
        let mut pa = vec![0.0; d];
        let mut pb = vec![0.0; d];
        fock_wavefunctions(x_a, &mut pa);
        fock_wavefunctions(x_b, &mut pb);
        self.eval_with(delta_theta, &pa, &pb)
    }

    /// Same as [`Self::eval`] with precomputed wavefunction values.
    pub fn eval_with(&self, delta_theta: f64, psi_a: &[f64], psi_b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(k, l, m, n, v) in &self.entries {
            let phase = Complex64::from_polar(1.0, (k as f64 - m as f64) * delta_theta);
            acc += (v * phase).re * psi_a[k] * psi_a[m] * psi_b[l] * psi_b[n];
        }
        acc.max(0.0)
    }

    /// Unnormalized single-mode coefficients `C_ln` so that the density of `x_b`
    /// at fixed `x_a` is `Σ_ln C_ln ψ_l(x_b) ψ_n(x_b)`.
    pub fn conditional_b(&self, delta_theta: f64, psi_a: &[f64]) -> DMatrix<Complex64> {
        let d = self.cutoff.dim();
        let mut c = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for &(k, l, m, n, v) in &self.entries {
            let phase = Complex64::from_polar(1.0, (k as f64 - m as f64) * delta_theta);
            c[(l, n)] += v * phase * (psi_a[k] * psi_a[m]);
        }
        c
    }

    /// Reduced state of mode A; its diagonal in a `ψ_k²` expansion gives the
    /// phase-independent marginal of `x_a`.
    pub fn marginal_a(&self) -> DMatrix<Complex64> {
        let d = self.cutoff.dim();
        let mut c = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for &(k, l, m, n, v) in &self.entries {
            if l == n {
                c[(k, m)] += v;
            }
        }
        c
    }

    pub fn marginal_b(&self) -> DMatrix<Complex64> {
        let d = self.cutoff.dim();
        let mut c = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for &(k, l, m, n, v) in &self.entries {
            if k == m {
                c[(l, n)] += v;
            }
        }
        c
    }
}

/// Evaluate `Σ_mn C_mn ψ_m(x) ψ_n(x)` (real part).
pub fn single_mode_density(coeffs: &DMatrix<Complex64>, x: f64) -> f64 {
    let d = coeffs.nrows();
    let mut psi = vec![0.0; d];
    fock_wavefunctions(x, &mut psi);
    let mut acc = 0.0;
    for m in 0..d {
        for n in 0..d {
            acc += coeffs[(m, n)].re * psi[m] * psi[n];
        }
    }
    acc
}

/// `pr_δθ(x_a, x_b) = Tr[ρ (Π_A(δθ, x_a) ⊗ Π_B(0, x_b))]` with loss-adjusted point elements.
pub fn joint_pdf(
    state: &TwoModeDensityMatrix,
    phase: PhaseSetting,
    x_a: f64,
    x_b: f64,
    eta_det: f64,
) -> Result<f64> {
    Ok(JointDensity::new(state, eta_det)?.eval(phase.delta_theta(), x_a, x_b))
}

/// Density of the symmetric-splitter measurement at `δθ = π/2` alongside the
/// input state's Husimi function `Q(α) = ⟨α|ρ'|α⟩/π` at `α = x_a + i x_b`,
/// where `ρ'` is the input mixture after detector loss.
pub fn q_function_check(model: &ModelSpec, x_a: f64, x_b: f64) -> Result<(f64, f64)> {
    if (model.bs.transmission() - 0.5).abs() > 1e-12 {
        return Err(Error::param("tau_squared", "Q-function identity needs a symmetric splitter"));
    }
    let state = make_true_state(model, false);
    let pdf = joint_pdf(&state, PhaseSetting::new(PI / 2.0), x_a, x_b, model.eta_det)?;
    let input = make_input_state(model.eta_prep, model.cutoff)?.apply_loss(model.eta_det)?;
    Ok((pdf, husimi_q(input.matrix(), Complex64::new(x_a, x_b))))
}

/// `⟨α|ρ|α⟩/π` for a single-mode density matrix.
pub fn husimi_q(rho: &DMatrix<Complex64>, alpha: Complex64) -> f64 {
    let d = rho.nrows();
    // ⟨n|α⟩ = e^{-|α|²/2} αⁿ/√n!
    let mut amp = Vec::with_capacity(d);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..d {
        if n > 0 {
            cur = cur * alpha / (n as f64).sqrt();
        }
        amp.push(cur);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..d {
        for n in 0..d {
            acc += amp[m].conj() * rho[(m, n)] * amp[n];
        }
    }
    acc.re / PI
}

/// Key identifying a cached [`PovmSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmKey {
    pub n_max: usize,
    pub eta_det: f64,
    #[serde(with = "edge_list")]
    pub quad_edges: Vec<f64>,
    pub phase_bins: usize,
}

/// Loss-adjusted, phase-averaged two-mode POVM over (phase bin, A bin, B bin).
///
/// Elements are stored factored: one real adjusted overlap table per
/// quadrature bin plus per-phase-bin factors `⟨e^{idθ}⟩` averaged over the bin
/// width. [`PovmSet::element`] expands an element on demand; the
/// sector-violating entries (`k+l ≠ m+n`) are zero because the total phase is
/// random.
#[derive(Debug, Clone)]
pub struct PovmSet {
    cutoff: FockCutoff,
    eta_det: f64,
    quad_edges: Vec<f64>,
    quad_bins: Vec<QuadBin>,
    phase_bins: usize,
    tables: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PovmCacheFile {
    key: PovmKey,
    tables: Vec<Vec<f64>>,
}

impl PovmSet {
    pub fn build(cutoff: FockCutoff, eta_det: f64, phase_bins: usize, quad_edges: &[f64]) -> Result<Self> {
        if phase_bins == 0 {
            return Err(Error::param("phase_bins", "need at least one phase bin"));
        }
        if !(eta_det > 0.0 && eta_det <= 1.0) {
            return Err(Error::param("eta_det", format!("{eta_det} is outside (0, 1]")));
        }
        let quad_bins = bins_from_edges(quad_edges)?;
        let tables = par::map_indexed(quad_bins.len(), |i| {
            loss_adjoint(&overlap_matrix(quad_bins[i], cutoff), eta_det).expect("eta checked")
        });
        Ok(Self { cutoff, eta_det, quad_edges: quad_edges.to_vec(), quad_bins, phase_bins, tables })
    }

    pub fn key(&self) -> PovmKey {
        PovmKey {
            n_max: self.cutoff.n_max(),
            eta_det: self.eta_det,
            quad_edges: self.quad_edges.clone(),
            phase_bins: self.phase_bins,
        }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn eta_det(&self) -> f64 {
        self.eta_det
    }

    pub fn quad_bins(&self) -> &[QuadBin] {
        &self.quad_bins
    }

    pub fn quad_edges(&self) -> &[f64] {
        &self.quad_edges
    }

    pub fn n_phase(&self) -> usize {
        self.phase_bins
    }

    pub fn n_quad(&self) -> usize {
        self.quad_bins.len()
    }

    pub fn len(&self) -> usize {
        self.phase_bins * self.n_quad() * self.n_quad()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phase_width(&self) -> f64 {
        TAU / self.phase_bins as f64
    }

    /// Centre of phase bin `p`.
    pub fn phase_setting(&self, p: usize) -> PhaseSetting {
        PhaseSetting::new((p as f64 + 0.5) * self.phase_width())
    }

    /// Phase bin containing `delta_theta`.
    pub fn phase_bin_of(&self, delta_theta: f64) -> usize {
        ((wrap_phase(delta_theta) / self.phase_width()) as usize).min(self.phase_bins - 1)
    }

    /// Quadrature bin containing `x` (edges are half-open `[lo, hi)`).
    pub fn quad_bin_of(&self, x: f64) -> Option<usize> {
        let idx = self.quad_edges.partition_point(|&e| e <= x);
        if idx == 0 || idx > self.quad_bins.len() {
            None
        } else {
            Some(idx - 1)
        }
    }

    /// Flat index of `(p, a, b)`.
    pub fn flat_index(&self, p: usize, a: usize, b: usize) -> usize {
        (p * self.n_quad() + a) * self.n_quad() + b
    }

    /// Adjusted overlap table of quadrature bin `a` (phase zero).
    pub fn table(&self, a: usize) -> &DMatrix<f64> {
        &self.tables[a]
    }

    /// `⟨e^{idθ}⟩` over phase bin `p` for photon-number difference `d`.
    pub fn phase_factor(&self, p: usize, d: i64) -> Complex64 {
        let w = self.phase_width();
        let centre = self.phase_setting(p).delta_theta();
        let half = 0.5 * d as f64 * w;
        let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
        Complex64::from_polar(sinc, d as f64 * centre)
    }

    /// Alice's single-mode element in phase bin `p`, quadrature bin `a`.
    pub fn element_a(&self, p: usize, a: usize) -> DMatrix<Complex64> {
        let t = &self.tables[a];
        DMatrix::from_fn(t.nrows(), t.ncols(), |m, n| {
            self.phase_factor(p, n as i64 - m as i64) * t[(m, n)]
        })
    }

    /// Bob's single-mode element (local-oscillator phase zero).
    pub fn element_b(&self, b: usize) -> DMatrix<Complex64> {
        self.tables[b].map(|v| Complex64::new(v, 0.0))
    }

    /// Dense two-mode element `Π_(p,a,b)` with off-sector entries removed.
    pub fn element(&self, p: usize, a: usize, b: usize) -> DMatrix<Complex64> {
        let c = self.cutoff;
        let ea = self.element_a(p, a);
        let eb = self.element_b(b);
        let dim = c.two_mode_dim();
        DMatrix::from_fn(dim, dim, |i, j| {
            if sector(c, i) != sector(c, j) {
                return Complex64::new(0.0, 0.0);
            }
            let (k, l) = c.split(i);
            let (m, n) = c.split(j);
            ea[(k, m)] * eb[(l, n)]
        })
    }

    /// Bin probabilities `Tr[ρ Π_j]` for every `j` in flat order.
    pub fn probabilities(&self, state: &TwoModeDensityMatrix) -> Vec<f64> {
        let entries = phase_average(state).nonzero_entries();
        let nq = self.n_quad();
        let per_phase = par::map_indexed(self.phase_bins, |p| {
            let mut out = vec![0.0; nq * nq];
            for &(k, l, m, n, v) in &entries {
                // ⟨m|Π_A|k⟩ ⟨n|Π_B|l⟩
                let w = v * self.phase_factor(p, k as i64 - m as i64);
                for a in 0..nq {
                    let ta = w * self.tables[a][(m, k)];
                    for b in 0..nq {
                        out[a * nq + b] += ta.re * self.tables[b][(n, l)];
                    }
                }
            }
            out
        });
        per_phase.concat()
    }

    /// Largest deviation of `Σ_(a,b) Π_(p,a,b)` from the identity over all phase bins.
    pub fn completeness_error(&self) -> f64 {
        let dim = self.cutoff.two_mode_dim();
        let mut worst = 0.0f64;
        for p in 0..self.phase_bins {
            let sum_a = (0..self.n_quad()).fold(DMatrix::zeros(self.cutoff.dim(), self.cutoff.dim()), |acc, a| {
                acc + self.element_a(p, a)
            });
            let sum_b = (0..self.n_quad()).fold(DMatrix::zeros(self.cutoff.dim(), self.cutoff.dim()), |acc, b| {
                acc + self.element_b(b)
            });
            for i in 0..dim {
                for j in 0..dim {
                    let (k, l) = self.cutoff.split(i);
                    let (m, n) = self.cutoff.split(j);
                    let v = if sector(self.cutoff, i) == sector(self.cutoff, j) {
                        sum_a[(k, m)] * sum_b[(l, n)]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((v - target).norm());
                }
            }
        }
        worst
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PovmCacheFile {
            key: self.key(),
            tables: self.tables.iter().map(|t| t.as_slice().to_vec()).collect(),
        };
        let text = serde_json::to_string(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Read a cached set, failing unless its key equals `expected`.
    pub fn load(path: &Path, expected: &PovmKey) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PovmCacheFile = serde_json::from_str(&text)?;
        if &file.key != expected {
            return Err(Error::Cache(format!("{} was built for {:?}", path.display(), file.key)));
        }
        let cutoff = FockCutoff::new(file.key.n_max)?;
        let d = cutoff.dim();
        let quad_bins = bins_from_edges(&file.key.quad_edges)?;
        if file.tables.len() != quad_bins.len() || file.tables.iter().any(|t| t.len() != d * d) {
            return Err(Error::Cache(format!("{} has malformed tables", path.display())));
        }
        Ok(Self {
            cutoff,
            eta_det: file.key.eta_det,
            quad_edges: file.key.quad_edges.clone(),
            quad_bins,
            phase_bins: file.key.phase_bins,
            tables: file.tables.into_iter().map(|t| DMatrix::from_vec(d, d, t)).collect(),
        })
    }

    /// Load from `path` when its key matches, otherwise build and write it.
    pub fn load_or_build(
        path: &Path,
        cutoff: FockCutoff,
        eta_det: f64,
        phase_bins: usize,
        quad_edges: &[f64],
    ) -> Result<Self> {
        let key = PovmKey { n_max: cutoff.n_max(), eta_det, quad_edges: quad_edges.to_vec(), phase_bins };
        if path.exists() {
            if let Ok(set) = Self::load(path, &key) {
                return Ok(set);
            }
        }
        let set = Self::build(cutoff, eta_det, phase_bins, quad_edges)?;
        set.save(path)?;
        Ok(set)
    }
}

impl PartialEq for PovmSet {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
            && self.tables.iter().zip(&other.tables).all(|(a, b)| {
                a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Bin edges in JSON, with infinite tails written as the strings `"-inf"` / `"inf"`.
pub mod edge_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Edge {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(edges: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Edge> = edges
            .iter()
            .map(|&e| match e {
                e if e == f64::INFINITY => Edge::Named("inf".into()),
                e if e == f64::NEG_INFINITY => Edge::Named("-inf".into()),
                e => Edge::Finite(e),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Edge>::deserialize(d)?;
        v.into_iter()
            .map(|e| match e {
                Edge::Finite(x) => Ok(x),
                Edge::Named(s) if s == "inf" => Ok(f64::INFINITY),
                Edge::Named(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
                Edge::Named(s) => Err(serde::de::Error::custom(format!("bad bin edge `{s}`"))),
            })
            .collect()
    }
}
