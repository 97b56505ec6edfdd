//! Maximum-likelihood reconstruction of the two-mode density matrix from binned
//! quadrature data, using the iteration `ρ ← N[R(ρ) ρ R(ρ)]` with
//! `R(ρ) = Σ_j (f_j / Tr[ρΠ_j]) Π_j`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hermitize, phase_average, sector, FockCutoff, ModelSpec, TwoModeDensityMatrix};
use crate::homodyne::{edge_list, PovmSet};
use crate::par;
use crate::sampler::QuadratureSample;

/// A decrease of the log-likelihood smaller than this is treated as round-off.
pub const MONOTONE_TOL: f64 = 1e-10;
const MAX_DILUTION_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub n_max: usize,
    pub eta_det: f64,
    pub phase_bins: usize,
    #[serde(with = "edge_list")]
    pub quad_edges: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood gain of one iteration drops below this.
    pub tol: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            n_max: FockCutoff::DEFAULT.n_max(),
            eta_det: 1.0,
            phase_bins: 12,
            quad_edges: default_quad_edges(),
            max_iterations: 2000,
            tol: 1e-9,
        }
    }
}

/// 40 equal bins on `[−5, 5]` plus two half-infinite tails.
pub fn default_quad_edges() -> Vec<f64> {
    let mut e = vec![f64::NEG_INFINITY];
    e.extend((0..=40).map(|i| -5.0 + 0.25 * i as f64));
    e.push(f64::INFINITY);
    e
}

impl ReconConfig {
    pub fn for_model(model: &ModelSpec) -> Self {
        Self { n_max: model.cutoff.n_max(), eta_det: model.eta_det, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        FockCutoff::new(self.n_max)?;
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return Err(Error::param("eta_det", format!("{} is outside (0, 1]", self.eta_det)));
        }
        if self.phase_bins == 0 {
            return Err(Error::param("phase_bins", "must be at least 1"));
        }
        if self.quad_edges.len() < 2 || self.quad_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("quad_edges", "edges must be strictly increasing"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> Result<FockCutoff> {
        FockCutoff::new(self.n_max)
    }

    pub fn build_povm(&self) -> Result<Arc<PovmSet>> {
        self.validate()?;
        Ok(Arc::new(PovmSet::build(self.cutoff()?, self.eta_det, self.phase_bins, &self.quad_edges)?))
    }
}

/// Counts `f_j` over the bins of a [`PovmSet`], in its flat order. Fractional counts are allowed.
#[derive(Debug, Clone)]
pub struct Histogram {
    povm: Arc<PovmSet>,
    counts: Vec<f64>,
}

impl Histogram {
    pub fn from_counts(povm: Arc<PovmSet>, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != povm.len() {
            return Err(Error::Dimension { expected: povm.len(), got: counts.len() });
        }
        if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::param("counts", "counts must be finite and non-negative"));
        }
        Ok(Self { povm, counts })
    }

    pub fn povm(&self) -> &PovmSet {
        &self.povm
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        par::pairwise_sum(&self.counts)
    }
}

/// Assign every sample to its (phase bin, A bin, B bin).
pub fn bin_data(samples: &[QuadratureSample], povm: Arc<PovmSet>) -> Histogram {
    let mut counts = vec![0.0; povm.len()];
    for s in samples {
        let p = povm.phase_bin_of(s.delta_theta);
        if let (Some(a), Some(b)) = (povm.quad_bin_of(s.x_a), povm.quad_bin_of(s.x_b)) {
            counts[povm.flat_index(p, a, b)] += 1.0;
        }
    }
    Histogram { povm, counts }
}

fn check_cutoff(state: &TwoModeDensityMatrix, hist: &Histogram) -> Result<()> {
    if state.cutoff() != hist.povm.cutoff() {
        return Err(Error::Dimension {
            expected: hist.povm.cutoff().two_mode_dim(),
            got: state.cutoff().two_mode_dim(),
        });
    }
    Ok(())
}

fn likelihood_from_probs(probs: &[f64], hist: &Histogram) -> Result<f64> {
    let nq2 = hist.povm.n_quad() * hist.povm.n_quad();
    let per_phase = par::map_indexed(hist.povm.n_phase(), |p| {
        let mut terms = Vec::with_capacity(nq2);
        for j in p * nq2..(p + 1) * nq2 {
            let f = hist.counts[j];
            if f > 0.0 {
                if !(probs[j] > 0.0) {
                    return Err(Error::DegenerateSupport { bin: j, count: f, prob: probs[j] });
                }
                terms.push(f * probs[j].ln());
            }
        }
        Ok(par::pairwise_sum(&terms))
    });
    let parts = per_phase.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(par::pairwise_sum(&parts))
}

/// `Σ_j f_j ln Tr[ρ Π_j]`; empty bins contribute nothing.
pub fn log_likelihood(state: &TwoModeDensityMatrix, hist: &Histogram) -> Result<f64> {
    check_cutoff(state, hist)?;
    likelihood_from_probs(&hist.povm.probabilities(state), hist)
}

/// Sector-diagonal index pairs `(i, j)` with `k+l = m+n`, unpacked.
fn sector_pairs(c: FockCutoff) -> Vec<(usize, usize, [usize; 4])> {
    let dim = c.two_mode_dim();
    let mut out = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            if sector(c, i) == sector(c, j) {
                let (k, l) = c.split(i);
                let (m, n) = c.split(j);
                out.push((i, j, [k, l, m, n]));
            }
        }
    }
    out
}

/// `R = Σ_j w_j Π_j` restricted to sector-diagonal entries.
fn r_operator(povm: &PovmSet, weights: &[f64], pairs: &[(usize, usize, [usize; 4])]) -> DMatrix<Complex64> {
    let c = povm.cutoff();
    let d = c.dim();
    let nq = povm.n_quad();
    let per_phase = par::map_indexed(povm.n_phase(), |p| {
        // G_a[l][n] = Σ_b w_(p,a,b) T_b[l][n]
        let mut g = vec![0.0; nq * d * d];
        for a in 0..nq {
            let ga = &mut g[a * d * d..(a + 1) * d * d];
            for b in 0..nq {
                let w = weights[povm.flat_index(p, a, b)];
                if w == 0.0 {
                    continue;
                }
                let tb = povm.table(b);
                for l in 0..d {
                    for n in 0..d {
                        ga[l * d + n] += w * tb[(l, n)];
                    }
                }
            }
        }
        let mut r = DMatrix::from_element(c.two_mode_dim(), c.two_mode_dim(), Complex64::new(0.0, 0.0));
        for &(i, j, [k, l, m, n]) in pairs {
            let mut acc = 0.0;
            for a in 0..nq {
                acc += povm.table(a)[(k, m)] * g[a * d * d + l * d + n];
            }
            r[(i, j)] = povm.phase_factor(p, m as i64 - k as i64) * acc;
        }
        r
    });
    par::pairwise_reduce(per_phase, |a, b| a + b).expect("at least one phase bin")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
    /// Log-likelihood gain of each accepted iteration.
    pub deltas: Vec<f64>,
    /// Iterations that needed a diluted step `(I + εR)ρ(I + εR)`.
    pub diluted_iterations: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reconstruction {
    pub state: TwoModeDensityMatrix,
    pub diagnostics: Diagnostics,
}

/// Reconstruct starting from the normalized identity.
pub fn reconstruct(hist: &Histogram, config: &ReconConfig) -> Result<Reconstruction> {
    reconstruct_from(hist, config, TwoModeDensityMatrix::maximally_mixed(hist.povm.cutoff()))
}

fn normalized_sandwich(op: &DMatrix<Complex64>, rho: &DMatrix<Complex64>, c: FockCutoff) -> TwoModeDensityMatrix {
    let mut next = hermitize(&(op * rho * op));
    let tr = next.trace().re;
    next /= Complex64::new(tr, 0.0);
    phase_average(&TwoModeDensityMatrix::from_matrix_unchecked(c, next))
}

/// Reconstruct starting from `initial` (projected onto the photon-number sectors first).
pub fn reconstruct_from(
    hist: &Histogram,
    config: &ReconConfig,
    initial: TwoModeDensityMatrix,
) -> Result<Reconstruction> {
    config.validate()?;
    check_cutoff(&initial, hist)?;
    if !(hist.total() > 0.0) {
        return Err(Error::param("histogram", "no counts to reconstruct from"));
    }
    let c = hist.povm.cutoff();
    let pairs = sector_pairs(c);
    let identity = DMatrix::<Complex64>::identity(c.two_mode_dim(), c.two_mode_dim());

    let mut rho = phase_average(&initial);
    let mut probs = hist.povm.probabilities(&rho);
    let mut ll = likelihood_from_probs(&probs, hist)?;
    let mut deltas = Vec::new();
    let mut diluted = 0;
    let mut converged = false;
    let mut warning = None;

    for _ in 0..config.max_iterations {
        let weights: Vec<f64> = hist
            .counts
            .iter()
            .zip(&probs)
            .map(|(&f, &p)| if f > 0.0 { f / p } else { 0.0 })
            .collect();
        let r = r_operator(&hist.povm, &weights, &pairs);

        let mut candidate = normalized_sandwich(&r, rho.matrix(), c);
        let mut cand_probs = hist.povm.probabilities(&candidate);
        let mut cand_ll = likelihood_from_probs(&cand_probs, hist);
        if !matches!(cand_ll, Ok(v) if v >= ll - MONOTONE_TOL) {
            // diluted step: the normalized R has unit scale, so ε sets the step length
            let scale = hist.total();
            let mut eps = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_DILUTION_HALVINGS {
                let op = &identity + &r * Complex64::new(eps / scale, 0.0);
                candidate = normalized_sandwich(&op, rho.matrix(), c);
                cand_probs = hist.povm.probabilities(&candidate);
                cand_ll = likelihood_from_probs(&cand_probs, hist);
                if matches!(cand_ll, Ok(v) if v >= ll - MONOTONE_TOL) {
                    accepted = true;
                    break;
                }
                eps *= 0.5;
            }
            diluted += 1;
            if !accepted {
                warning = Some("likelihood could not be increased; stopped early".into());
                break;
            }
        }
        let new_ll = cand_ll?;
        let delta = new_ll - ll;
        deltas.push(delta);
        rho = candidate;
        probs = cand_probs;
        ll = new_ll;
        if delta.abs() <= config.tol * ll.abs() {
            converged = true;
            break;
        }
    }
    if !converged && warning.is_none() {
        warning = Some(format!("no convergence after {} iterations", config.max_iterations));
    }
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    rho.validate()?;
    Ok(Reconstruction {
        state: rho,
        diagnostics: Diagnostics {
            iterations: deltas.len(),
            converged,
            final_log_likelihood: ll,
            deltas,
            diluted_iterations: diluted,
            warning,
        },
    })
}

/// Fit of a reconstructed state to `η|Ψ⟩⟨Ψ| + (1−η)|0,0⟩⟨0,0|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFit {
    pub eta: f64,
    pub tau_squared: f64,
    /// Frobenius norm of the difference between the state and the fitted mixture.
    pub residual: f64,
}

pub fn effective_efficiency(state: &TwoModeDensityMatrix) -> EfficiencyFit {
    let eta = 1.0 - state.get(0, 0, 0, 0).re;
    let tau_squared = if eta > 0.0 { state.get(1, 0, 1, 0).re / eta } else { 0.0 };
    let model = ModelSpec::new(eta.clamp(0.0, 1.0), 1.0, tau_squared.clamp(0.0, 1.0), state.cutoff())
        .expect("clamped parameters are valid");
    let fitted = crate::fock::make_true_state(&model, false);
    let residual = (state.matrix() - fitted.matrix()).norm();
    EfficiencyFit { eta, tau_squared, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::fock::make_true_state;
    use crate::homodyne::QuadBin;
    use crate::sampler::sample_vacuum;

    fn small_config() -> ReconConfig {
        ReconConfig {
            n_max: 2,
            eta_det: 1.0,
            phase_bins: 4,
            quad_edges: vec![f64::NEG_INFINITY, -1.5, -0.75, 0.0, 0.75, 1.5, f64::INFINITY],
            max_iterations: 500,
            tol: 1e-10,
        }
    }

    #[test]
    fn default_binning() {
        let c = ReconConfig::default();
        assert_eq!(c.quad_edges.len(), 43);
        assert_eq!(c.phase_bins, 12);
        c.validate().unwrap();
        let bad = ReconConfig { quad_edges: vec![0.0, 1.0, 1.0], ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = ReconConfig { tol: 0.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = ReconConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"-inf\""));
        let back: ReconConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: ReconConfig = serde_json::from_str(r#"{"eta_det":0.86}"#).unwrap();
        assert_eq!(partial.eta_det, 0.86);
        assert_eq!(partial.phase_bins, 12);
    }

    #[test]
    fn single_sample_binning() {
        let povm = small_config().build_povm().unwrap();
        let s = QuadratureSample { delta_theta: 0.0, x_a: 0.1, x_b: -0.1 };
        let h = bin_data(&[s], povm.clone());
        assert_eq!(h.total(), 1.0);
        let j = povm.flat_index(0, 3, 2);
        assert_eq!(h.counts()[j], 1.0);
    }

    #[test]
    fn binning_totals_and_order_invariance() {
        let povm = small_config().build_povm().unwrap();
        let samples = sample_vacuum(3000, 4);
        let h = bin_data(&samples, povm.clone());
        assert_eq!(h.total(), 3000.0);
        let mut rev = samples.clone();
        rev.reverse();
        assert_eq!(bin_data(&rev, povm).counts(), h.counts());
    }

    #[test]
    fn empty_histogram_likelihood_is_zero() {
        let povm = small_config().build_povm().unwrap();
        let h = Histogram::from_counts(povm.clone(), vec![0.0; povm.len()]).unwrap();
        let s = TwoModeDensityMatrix::vacuum(povm.cutoff());
        assert_eq!(log_likelihood(&s, &h).unwrap(), 0.0);
        assert!(reconstruct(&h, &small_config()).is_err());
    }

    #[test]
    fn vacuum_likelihood_matches_direct_integration() {
        let cfg = small_config();
        let povm = cfg.build_povm().unwrap();
        let h = bin_data(&sample_vacuum(2000, 12), povm.clone());
        let vac = TwoModeDensityMatrix::vacuum(povm.cutoff());
        let mut expect = 0.0;
        // vacuum bin probability = product of 1D Gaussian masses, via the erf-free quadrature oracle
        let mass = |bin: QuadBin| {
            crate::quadrature::integrate_scalar(
                |x| (-x * x).exp() / std::f64::consts::PI.sqrt(),
                bin.lo,
                bin.hi,
                1e-13,
            )
        };
        for p in 0..povm.n_phase() {
            for a in 0..povm.n_quad() {
                for b in 0..povm.n_quad() {
                    let f = h.counts()[povm.flat_index(p, a, b)];
                    if f > 0.0 {
                        expect += f * (mass(povm.quad_bins()[a]) * mass(povm.quad_bins()[b])).ln();
                    }
                }
            }
        }
        assert_abs_diff_eq!(log_likelihood(&vac, &h).unwrap(), expect, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_support_is_reported() {
        let cfg = small_config();
        let povm = cfg.build_povm().unwrap();
        let mut counts = vec![0.0; povm.len()];
        counts[0] = 1.0;
        let h = Histogram::from_counts(povm.clone(), counts).unwrap();
        // zero matrix is not a state, but exercises the guard
        let zero = TwoModeDensityMatrix::from_matrix_unchecked(
            povm.cutoff(),
            DMatrix::from_element(9, 9, Complex64::new(0.0, 0.0)),
        );
        assert!(matches!(log_likelihood(&zero, &h), Err(Error::DegenerateSupport { bin: 0, .. })));
        assert!(Histogram::from_counts(povm.clone(), vec![-1.0; povm.len()]).is_err());
        assert!(Histogram::from_counts(povm, vec![1.0; 3]).is_err());
    }

    #[test]
    fn vacuum_data_reconstructs_vacuum() {
        let cfg = ReconConfig::default();
        let povm = cfg.build_povm().unwrap();
        let h = bin_data(&sample_vacuum(100_000, 5), povm);
        let rec = reconstruct(&h, &cfg).unwrap();
        assert!(rec.state.get(0, 0, 0, 0).re >= 0.99, "{} {:?}", rec.state.get(0, 0, 0, 0), (rec.diagnostics.iterations, rec.diagnostics.converged));
        assert!(rec.diagnostics.deltas.iter().all(|d| *d >= -MONOTONE_TOL));
        assert!(rec.state.is_sector_supported());
    }

    #[test]
    fn exact_probabilities_are_a_fixed_point() {
        let cfg = ReconConfig { eta_det: 0.86, ..small_config() };
        let povm = cfg.build_povm().unwrap();
        let model = ModelSpec::new(0.64, 0.86, 0.5, povm.cutoff()).unwrap();
        let truth = make_true_state(&model, false);
        let counts: Vec<f64> = povm.probabilities(&truth).iter().map(|p| p * 1e5).collect();
        let h = Histogram::from_counts(povm, counts).unwrap();
        let rec = reconstruct_from(&h, &cfg, truth.clone()).unwrap();
        assert!(rec.state.max_abs_diff(&truth) < 1e-6);
    }

    #[test]
    fn efficiency_fit_exact_mixtures() {
        for &(eta, t2) in &[(0.64, 0.5), (0.64, 0.08), (0.3, 0.9)] {
            let s = make_true_state(&ModelSpec::new(eta, 1.0, t2, FockCutoff::DEFAULT).unwrap(), false);
            let fit = effective_efficiency(&s);
            assert_abs_diff_eq!(fit.eta, eta, epsilon = 1e-12);
            assert_abs_diff_eq!(fit.tau_squared, t2, epsilon = 1e-12);
            assert!(fit.residual < 1e-10);
        }
    }
}
