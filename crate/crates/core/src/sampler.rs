//! Synthetic homodyne runs drawn from the exact joint quadrature density.
//!
//! Each record's `x_a` comes from the phase-independent marginal of Alice's
//! quadrature and `x_b` from the conditional density given that `x_a`. Both are
//! drawn by inverting tabulated CDFs on a 2001-point grid over `[−6, 6]` with
//! linear interpolation; mass beyond `|x| = 6` is dropped.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_true_state, FockCutoff, ModelSpec};
use crate::homodyne::{fock_wavefunctions, wrap_phase, JointDensity};
use crate::par;
use crate::quadrature;
use crate::rng::{stream_rng, uniform};

pub const GRID_POINTS: usize = 2001;
pub const GRID_LIMIT: f64 = 6.0;
/// Samples per RNG substream; fixed so output does not depend on thread count.
pub const SHARD_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub delta_theta: f64,
    pub x_a: f64,
    pub x_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSchedule {
    /// `δθ_i = 2π i / n`.
    Sweep,
    /// Independent uniform draws on `[0, 2π)`.
    Uniform,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub n_samples: usize,
    pub phase_schedule: PhaseSchedule,
    pub rng_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be at least 1"));
        }
        if let PhaseSchedule::Fixed(t) = self.phase_schedule {
            if !t.is_finite() {
                return Err(Error::param("phase_schedule", "fixed phase must be finite"));
            }
        }
        Ok(())
    }
}

/// Cumulative overlap integrals `J_mn(x_i) = ∫_{−6}^{x_i} ψ_m ψ_n` on the sampling grid.
#[derive(Debug, Clone)]
pub struct CdfTables {
    dim: usize,
    grid: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CdfTables {
    pub fn new(cutoff: FockCutoff) -> Self {
        let d = cutoff.dim();
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| -GRID_LIMIT + 2.0 * GRID_LIMIT * i as f64 / (GRID_POINTS - 1) as f64)
            .collect();
        let integrand = (d * d, |x: f64, out: &mut [f64]| {
            let mut psi = vec![0.0; d];
            fock_wavefunctions(x, &mut psi);
            for m in 0..d {
                for n in 0..d {
                    out[m * d + n] = psi[m] * psi[n];
                }
            }
        });
        let cells = par::map_indexed(GRID_POINTS - 1, |i| quadrature::gk15(&integrand, grid[i], grid[i + 1]).0);
        let mut cumulative = vec![0.0; GRID_POINTS * d * d];
        for (i, cell) in cells.iter().enumerate() {
            let (done, rest) = cumulative.split_at_mut((i + 1) * d * d);
            let prev = &done[i * d * d..];
            for ((next, p), c) in rest[..d * d].iter_mut().zip(prev).zip(cell) {
                *next = p + c;
            }
        }
        Self { dim: d, grid, cumulative }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `Σ_mn w_mn J_mn(x_i)` for a list of non-zero real weights.
    #[inline]
    fn cdf_at(&self, i: usize, weights: &[(usize, f64)]) -> f64 {
        let row = &self.cumulative[i * self.dim * self.dim..];
        weights.iter().map(|&(idx, w)| w * row[idx]).sum()
    }

    /// Invert `u ↦ x` for the piecewise-linear CDF defined by `weights`.
    fn invert(&self, weights: &[(usize, f64)], u: f64) -> f64 {
        let total = self.cdf_at(GRID_POINTS - 1, weights);
        let target = u * total;
        // largest i with F(x_i) ≤ target
        let (mut lo, mut hi) = (0usize, GRID_POINTS - 1);
        let mut f_lo = self.cdf_at(0, weights);
        let mut f_hi = total;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let f = self.cdf_at(mid, weights);
            if f <= target {
                lo = mid;
                f_lo = f;
            } else {
                hi = mid;
                f_hi = f;
            }
        }
        let span = f_hi - f_lo;
        let frac = if span > 0.0 { ((target - f_lo) / span).clamp(0.0, 1.0) } else { 0.5 };
        self.grid[lo] + frac * (self.grid[hi] - self.grid[lo])
    }
}

/// Sampler for one detected state.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    density: JointDensity,
    tables: CdfTables,
    marginal_a: Vec<(usize, f64)>,
}

impl QuadratureSampler {
    pub fn new(density: JointDensity) -> Self {
        let tables = CdfTables::new(density.cutoff());
        let marginal_a = real_weights(&density.marginal_a(), tables.dim);
        Self { density, tables, marginal_a }
    }

    pub fn for_model(model: &ModelSpec) -> Result<Self> {
        let state = make_true_state(model, false);
        Ok(Self::new(JointDensity::new(&state, model.eta_det)?))
    }

    pub fn density(&self) -> &JointDensity {
        &self.density
    }

    /// Draw `(x_a, x_b)` at phase `delta_theta` from two uniforms.
    pub fn draw(&self, delta_theta: f64, u_a: f64, u_b: f64) -> (f64, f64) {
        let x_a = self.tables.invert(&self.marginal_a, u_a);
        let mut psi = vec![0.0; self.tables.dim];
        fock_wavefunctions(x_a, &mut psi);
        let cond = self.density.conditional_b(delta_theta, &psi);
        let weights = real_weights(&cond, self.tables.dim);
        (x_a, self.tables.invert(&weights, u_b))
    }

    /// Tabulated marginal CDF of `x_a` at grid node `i`, normalized over `[−6, 6]`.
    pub fn marginal_cdf_a(&self, x: f64) -> f64 {
        let g = &self.tables.grid;
        let total = self.tables.cdf_at(GRID_POINTS - 1, &self.marginal_a);
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[GRID_POINTS - 1] {
            return 1.0;
        }
        let step = g[1] - g[0];
        let i = (((x - g[0]) / step) as usize).min(GRID_POINTS - 2);
        let f0 = self.tables.cdf_at(i, &self.marginal_a);
        let f1 = self.tables.cdf_at(i + 1, &self.marginal_a);
        (f0 + (x - g[i]) / step * (f1 - f0)) / total
    }

    pub fn sample(&self, n: usize, schedule: PhaseSchedule, seed: u64) -> Vec<QuadratureSample> {
        let shards = n.div_ceil(SHARD_SIZE);
        let parts = par::map_indexed(shards, |s| {
            let mut rng = stream_rng(seed, s as u64);
            let start = s * SHARD_SIZE;
            let end = (start + SHARD_SIZE).min(n);
            (start..end)
                .map(|i| {
                    let delta_theta = match schedule {
                        PhaseSchedule::Sweep => TAU * i as f64 / n as f64,
                        PhaseSchedule::Uniform => TAU * uniform(&mut rng),
                        PhaseSchedule::Fixed(t) => wrap_phase(t),
                    };
                    let u_a = uniform(&mut rng);
                    let u_b = uniform(&mut rng);
                    let (x_a, x_b) = self.draw(delta_theta, u_a, u_b);
                    QuadratureSample { delta_theta, x_a, x_b }
                })
                .collect::<Vec<_>>()
        });
        parts.concat()
    }
}

fn real_weights(c: &nalgebra::DMatrix<num_complex::Complex64>, dim: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for m in 0..dim {
        for n in 0..dim {
            let w = c[(m, n)].re;
            if w != 0.0 {
                out.push((m * dim + n, w));
            }
        }
    }
    out
}

/// Draw a synthetic run from `make_true_state(model, with detection loss)`.
pub fn sample_run(config: &RunConfig) -> Result<Vec<QuadratureSample>> {
    config.validate()?;
    let sampler = QuadratureSampler::for_model(&config.model)?;
    Ok(sampler.sample(config.n_samples, config.phase_schedule, config.rng_seed))
}

/// Vacuum calibration run: i.i.d. Gaussian pairs with variance 1/2 (Box–Muller), swept phase.
pub fn sample_vacuum(n: usize, seed: u64) -> Vec<QuadratureSample> {
    let shards = n.div_ceil(SHARD_SIZE);
    par::map_indexed(shards, |s| {
        let mut rng = stream_rng(seed, s as u64);
        let start = s * SHARD_SIZE;
        let end = (start + SHARD_SIZE).min(n);
        (start..end)
            .map(|i| {
                let r = (-(1.0 - uniform(&mut rng)).ln()).sqrt();
                let phi = TAU * uniform(&mut rng);
                QuadratureSample { delta_theta: TAU * i as f64 / n as f64, x_a: r * phi.cos(), x_b: r * phi.sin() }
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

pub const CSV_HEADER: [&str; 3] = ["delta_theta", "x_a", "x_b"];

/// Write samples as CSV; values use shortest round-trip decimal formatting.
pub fn write_samples(samples: &[QuadratureSample], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", CSV_HEADER.join(",")).map_err(io)?;
    for s in samples {
        writeln!(w, "{},{},{}", s.delta_theta, s.x_a, s.x_b).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_samples(path: &Path) -> Result<Vec<QuadratureSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fail = |reason: String| Error::Parse { path: path.into(), line, reason };
        if rec.len() != 3 {
            return Err(fail(format!("expected 3 fields, found {}", rec.len())));
        }
        let mut vals = [0.0f64; 3];
        for (v, field) in vals.iter_mut().zip(rec.iter()) {
            *v = field.trim().parse().map_err(|_| fail(format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(fail(format!("`{field}` is not finite")));
            }
        }
        out.push(QuadratureSample { delta_theta: vals[0], x_a: vals[1], x_b: vals[2] });
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse { path: path.into(), line, reason: format!("{kind:?}") },
    }
}
