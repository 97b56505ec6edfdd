//! Threshold discrimination of quadrature pairs and Bell-type correlation analysis.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_true_state, ModelSpec};
use crate::homodyne::{overlap_matrix, wrap_phase, JointDensity, QuadBin};
use crate::par;
use crate::rng::{stream_rng, uniform};
use crate::sampler::QuadratureSample;

/// Bins with fewer retained events are left out of the cosine fit.
pub const MIN_FIT_EVENTS: u64 = 50;
pub const MIN_RETAINED_PROBABILITY: f64 = 1e-12;
const AGGREGATE_CHUNK: usize = 1 << 16;
const ANALYTIC_PHASES: usize = 48;

fn default_phase_bins() -> usize {
    24
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellConfig {
    pub threshold: f64,
    #[serde(default = "default_phase_bins")]
    pub phase_bins: usize,
}

impl Default for BellConfig {
    fn default() -> Self {
        Self { threshold: 0.85, phase_bins: default_phase_bins() }
    }
}

impl BellConfig {
    pub fn new(threshold: f64, phase_bins: usize) -> Result<Self> {
        let c = Self { threshold, phase_bins };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        validate_threshold(self.threshold)?;
        if self.phase_bins == 0 {
            return Err(Error::param("phase_bins", "must be at least 1"));
        }
        Ok(())
    }
}

fn validate_threshold(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("threshold", format!("{t} must be finite and non-negative")));
    }
    Ok(())
}

/// Signs of both quadratures, or `None` unless `|x_a| > T` and `|x_b| > T`.
pub fn discriminate(sample: &QuadratureSample, threshold: f64) -> Option<(i8, i8)> {
    let sign = |x: f64| {
        if x > threshold {
            Some(1)
        } else if x < -threshold {
            Some(-1)
        } else {
            None
        }
    };
    Some((sign(sample.x_a)?, sign(sample.x_b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellBin {
    pub phase_bin: usize,
    pub phase_lo: f64,
    pub phase_hi: f64,
    /// `None` when no event survived discrimination in this bin.
    pub e: Option<f64>,
    pub stderr: Option<f64>,
    pub retained: u64,
    pub total: u64,
    pub in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellCurve {
    pub threshold: f64,
    pub bins: Vec<BellBin>,
    /// Fitted `V` in `E(δθ) = −V cos(δθ − φ₀)`.
    pub amplitude: f64,
    pub sigma_amplitude: f64,
    pub phase_offset: f64,
    /// RMS deviation of the fitted bins from the cosine.
    pub residual: f64,
    pub retained_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BinSums {
    total: u64,
    retained: u64,
    product: i64,
    cos: f64,
    sin: f64,
}

fn aggregate(samples: &[QuadratureSample], config: &BellConfig) -> Vec<BinSums> {
    let nb = config.phase_bins;
    let width = TAU / nb as f64;
    let parts = par::map_chunks(samples, AGGREGATE_CHUNK, |chunk| {
        let mut sums = vec![BinSums::default(); nb];
        for s in chunk {
            let phase = wrap_phase(s.delta_theta);
            let b = ((phase / width) as usize).min(nb - 1);
            let bin = &mut sums[b];
            bin.total += 1;
            if let Some((sa, sb)) = discriminate(s, config.threshold) {
                bin.retained += 1;
                bin.product += (sa * sb) as i64;
                bin.cos += phase.cos();
                bin.sin += phase.sin();
            }
        }
        sums
    });
    par::pairwise_reduce(parts, |mut a, b| {
        for (x, y) in a.iter_mut().zip(b) {
            x.total += y.total;
            x.retained += y.retained;
            x.product += y.product;
            x.cos += y.cos;
            x.sin += y.sin;
        }
        a
    })
    .unwrap_or_else(|| vec![BinSums::default(); nb])
}

struct CosineFit {
    amplitude: f64,
    sigma: f64,
    offset: f64,
    residual: f64,
}

/// Unweighted least squares of `y = a·c + b·s` with sandwich errors from `sigma`.
fn fit_cosine(rows: &[(f64, f64, f64, f64)]) -> Result<CosineFit> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} phase bin(s) with at least {MIN_FIT_EVENTS} retained events; need 2",
            rows.len()
        )));
    }
    let mut m = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    let mut meat = Matrix2::zeros();
    for &(c, s, y, sigma) in rows {
        let x = Vector2::new(c, s);
        m += x * x.transpose();
        rhs += x * y;
        meat += x * x.transpose() * (sigma * sigma);
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::InsufficientData("phase coverage too narrow to fit a cosine".into()))?;
    let coef = inv * rhs;
    let cov = inv * meat * inv;
    let (a, b) = (coef[0], coef[1]);
    let amplitude = a.hypot(b);
    let sigma = if amplitude > 0.0 {
        let g = coef / amplitude;
        (g.transpose() * cov * g)[0].max(0.0).sqrt()
    } else {
        (0.5 * cov.trace()).max(0.0).sqrt()
    };
    let offset = if amplitude > 0.0 { wrap_phase((-b).atan2(-a)) } else { 0.0 };
    let sq: f64 = rows.iter().map(|&(c, s, y, _)| (y - a * c - b * s).powi(2)).sum();
    Ok(CosineFit { amplitude, sigma, offset, residual: (sq / rows.len() as f64).sqrt() })
}

/// Per-bin correlations and the cosine fit.
///
/// Fit regressors are the mean `cos δθ`, `sin δθ` of the retained events in each
/// bin, so the finite bin width needs no separate correction.
pub fn correlation_curve(samples: &[QuadratureSample], config: &BellConfig) -> Result<BellCurve> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty sample list".into()));
    }
    let width = TAU / config.phase_bins as f64;
    let sums = aggregate(samples, config);
    let mut bins = Vec::with_capacity(sums.len());
    let mut rows = Vec::new();
    for (i, s) in sums.iter().enumerate() {
        let (e, stderr) = if s.retained > 0 {
            let n = s.retained as f64;
            let e = s.product as f64 / n;
            (Some(e), Some(((1.0 - e * e) / n).max(0.0).sqrt()))
        } else {
            (None, None)
        };
        let in_fit = s.retained >= MIN_FIT_EVENTS;
        if let (true, Some(e), Some(se)) = (in_fit, e, stderr) {
            let n = s.retained as f64;
            rows.push((s.cos / n, s.sin / n, e, se));
        }
        bins.push(BellBin {
            phase_bin: i,
            phase_lo: width * i as f64,
            phase_hi: width * (i + 1) as f64,
            e,
            stderr,
            retained: s.retained,
            total: s.total,
            in_fit,
        });
    }
    let fit = fit_cosine(&rows)?;
    let retained: u64 = sums.iter().map(|s| s.retained).sum();
    Ok(BellCurve {
        threshold: config.threshold,
        bins,
        amplitude: fit.amplitude,
        sigma_amplitude: fit.sigma,
        phase_offset: fit.offset,
        residual: fit.residual,
        retained_fraction: retained as f64 / samples.len() as f64,
    })
}

/// Standard deviation of the fitted amplitude over `resamples` bootstrap replicas.
pub fn bootstrap_sigma(
    samples: &[QuadratureSample],
    config: &BellConfig,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::param("resamples", "need at least 2"));
    }
    let n = samples.len();
    let amps = par::map_indexed(resamples, |r| {
        let mut rng = stream_rng(seed, r as u64);
        let draw: Vec<QuadratureSample> =
            (0..n).map(|_| samples[((uniform(&mut rng) * n as f64) as usize).min(n - 1)]).collect();
        correlation_curve(&draw, config).map(|c| c.amplitude)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mean = amps.iter().sum::<f64>() / amps.len() as f64;
    let var = amps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (amps.len() - 1) as f64;
    Ok(var.sqrt())
}

/// CHSH combination of the fitted cosine at analyser settings `{0, π/2} × {π/4, 3π/4}`
/// measured from the fitted offset. Equals `2√2·V`.
pub fn chsh_s_value(curve: &BellCurve) -> f64 {
    let e = |a: f64, b: f64| -curve.amplitude * (a - b).cos();
    let (a0, a1, b0, b1) = (0.0, PI / 2.0, PI / 4.0, 3.0 * PI / 4.0);
    (e(a0, b0) - e(a0, b1) + e(a1, b0) + e(a1, b1)).abs()
}

/// Closed-form correlation of a model, prepared for one threshold.
///
/// Integrating the joint density over `|x_a|, |x_b| > T` factorizes into
/// single-mode overlap integrals, so `E` is a finite sum over the detected
/// state with no two-dimensional quadrature.
#[derive(Debug, Clone)]
pub struct AnalyticBell {
    entries: Vec<(usize, usize, usize, usize, Complex64)>,
    odd: DMatrix<f64>,
    even: DMatrix<f64>,
}

impl AnalyticBell {
    pub fn new(model: &ModelSpec, threshold: f64) -> Result<Self> {
        validate_threshold(threshold)?;
        let density = JointDensity::new(&make_true_state(model, false), model.eta_det)?;
        let upper = overlap_matrix(QuadBin::new(threshold, f64::INFINITY)?, model.cutoff);
        // Region below −T mirrors the one above T with parity (−1)^{m+n}.
        let parity = |m: usize, n: usize| if (m + n).is_multiple_of(2) { 1.0 } else { -1.0 };
        let d = model.cutoff.dim();
        let odd = DMatrix::from_fn(d, d, |m, n| upper[(m, n)] * (1.0 - parity(m, n)));
        let even = DMatrix::from_fn(d, d, |m, n| upper[(m, n)] * (1.0 + parity(m, n)));
        Ok(Self { entries: density.entries().to_vec(), odd, even })
    }

    fn contract(&self, ops: &DMatrix<f64>, delta_theta: f64) -> f64 {
        self.entries
            .iter()
            .map(|&(k, l, m, n, v)| {
                let phase = Complex64::from_polar(1.0, (k as f64 - m as f64) * delta_theta);
                (v * phase).re * ops[(k, m)] * ops[(l, n)]
            })
            .sum()
    }

    /// Probability that both discriminators fire.
    pub fn retained_probability(&self, delta_theta: f64) -> f64 {
        self.contract(&self.even, delta_theta)
    }

    pub fn correlation(&self, delta_theta: f64) -> Result<f64> {
        let p = self.retained_probability(delta_theta);
        if p < MIN_RETAINED_PROBABILITY {
            return Err(Error::ThresholdTooHigh(p));
        }
        Ok(self.contract(&self.odd, delta_theta) / p)
    }

    /// Cosine amplitude fitted to `E` on an even phase grid.
    pub fn amplitude(&self) -> Result<f64> {
        let rows = (0..ANALYTIC_PHASES)
            .map(|i| {
                let t = TAU * i as f64 / ANALYTIC_PHASES as f64;
                Ok((t.cos(), t.sin(), self.correlation(t)?, 0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(fit_cosine(&rows)?.amplitude)
    }

    pub fn mean_retained_probability(&self) -> f64 {
        (0..ANALYTIC_PHASES)
            .map(|i| self.retained_probability(TAU * i as f64 / ANALYTIC_PHASES as f64))
            .sum::<f64>()
            / ANALYTIC_PHASES as f64
    }
}

/// `E(δθ)` of the detected model state, conditioned on both discriminators firing.
pub fn analytic_correlation(model: &ModelSpec, threshold: f64, delta_theta: f64) -> Result<f64> {
    AnalyticBell::new(model, threshold)?.correlation(delta_theta)
}

pub fn analytic_amplitude(model: &ModelSpec, threshold: f64) -> Result<f64> {
    AnalyticBell::new(model, threshold)?.amplitude()
}

/// Smallest threshold in `[0, t_max]` whose analytic amplitude exceeds `1/√2`,
/// located by a coarse scan and bisection.
pub fn violation_threshold(model: &ModelSpec, t_max: f64) -> Result<Option<f64>> {
    let excess = |t: f64| analytic_amplitude(model, t).map(|v| v - FRAC_1_SQRT_2);
    if excess(0.0)? > 0.0 {
        return Ok(Some(0.0));
    }
    let steps = (t_max / 0.05).ceil() as usize;
    let mut lo = 0.0;
    for i in 1..=steps {
        let hi = (0.05 * i as f64).min(t_max);
        if excess(hi)? > 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-10 {
                let mid = 0.5 * (a + b);
                if excess(mid)? > 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Some(b));
        }
        lo = hi;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub amplitude: f64,
    pub sigma_amplitude: Option<f64>,
    pub retained_fraction: f64,
    pub violation: bool,
}

pub fn threshold_sweep(samples: &[QuadratureSample], phase_bins: usize, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    thresholds
        .iter()
        .map(|&t| {
            let c = correlation_curve(samples, &BellConfig::new(t, phase_bins)?)?;
            Ok(SweepRow {
                threshold: t,
                amplitude: c.amplitude,
                sigma_amplitude: Some(c.sigma_amplitude),
                retained_fraction: c.retained_fraction,
                violation: c.amplitude > FRAC_1_SQRT_2,
            })
        })
        .collect()
}

pub fn analytic_sweep(model: &ModelSpec, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    thresholds
        .iter()
        .map(|&t| {
            let a = AnalyticBell::new(model, t)?;
            let v = a.amplitude()?;
            Ok(SweepRow {
                threshold: t,
                amplitude: v,
                sigma_amplitude: None,
                retained_fraction: a.mean_retained_probability(),
                violation: v > FRAC_1_SQRT_2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellSummary {
    pub threshold: f64,
    #[serde(rename = "V")]
    pub amplitude: f64,
    #[serde(rename = "sigma_V")]
    pub sigma_amplitude: f64,
    #[serde(rename = "sigma_V_bootstrap", skip_serializing_if = "Option::is_none", default)]
    pub sigma_bootstrap: Option<f64>,
    pub phase_offset: f64,
    pub residual: f64,
    #[serde(rename = "S")]
    pub s_value: f64,
    pub retained_fraction: f64,
    pub violation: bool,
    pub significance: f64,
}

impl BellSummary {
    pub fn from_curve(curve: &BellCurve) -> Self {
        Self {
            threshold: curve.threshold,
            amplitude: curve.amplitude,
            sigma_amplitude: curve.sigma_amplitude,
            sigma_bootstrap: None,
            phase_offset: curve.phase_offset,
            residual: curve.residual,
            s_value: chsh_s_value(curve),
            retained_fraction: curve.retained_fraction,
            violation: curve.amplitude > FRAC_1_SQRT_2,
            significance: (curve.amplitude - FRAC_1_SQRT_2) / curve.sigma_amplitude,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curve_csv(curve: &BellCurve) -> String {
    let mut out = String::from("phase_bin,E,stderr,retained,total\n");
    for b in &curve.bins {
        let _ = writeln!(out, "{},{},{},{},{}", b.phase_bin, opt(b.e), opt(b.stderr), b.retained, b.total);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,V,sigma_V,retained_fraction,violation\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.threshold,
            r.amplitude,
            opt(r.sigma_amplitude),
            r.retained_fraction,
            r.violation
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
