//! Two-mode Wigner function in the Fock basis and its planar cross-sections.
//!
//! Convention: `∫ W dx dp = 1` with vacuum variance 1/2, so the vacuum Wigner
//! function is `e^{−x²−p²}/π`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_input_state, make_true_state, ModelSpec, TwoModeDensityMatrix};
use crate::par;

pub const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint4 {
    pub x_a: f64,
    pub p_a: f64,
    pub x_b: f64,
    pub p_b: f64,
}

impl PhasePoint4 {
    pub fn new(x_a: f64, p_a: f64, x_b: f64, p_b: f64) -> Self {
        Self { x_a, p_a, x_b, p_b }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// Generalized Laguerre polynomial `L_n^{(α)}(x)` by upward recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Wigner function of the operator `|m⟩⟨n|` at `(x, p)`.
pub fn wigner_mn(m: usize, n: usize, x: f64, p: f64) -> Complex64 {
    if m < n {
        return wigner_mn(n, m, x, p).conj();
    }
    let r2 = x * x + p * p;
    let diff = m - n;
    // √(n!/m!)
    let ratio = ((n + 1)..=m).fold(1.0, |acc, k| acc / (k as f64).sqrt());
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let base = Complex64::new(x, -p) * std::f64::consts::SQRT_2;
    sign / PI * ratio * base.powu(diff as u32) * laguerre(n, diff as f64, 2.0 * r2) * (-r2).exp()
}

/// Table `W[m·d + n] = wigner_mn(m, n, x, p)` for `m, n < d`.
pub fn kernel_table(d: usize, x: f64, p: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for m in 0..d {
        for n in m..d {
            let w = wigner_mn(m, n, x, p);
            out[m * d + n] = w;
            out[n * d + m] = w.conj();
        }
    }
    out
}

/// Prepared evaluator over the non-zero elements of a state.
#[derive(Debug, Clone)]
pub struct WignerEvaluator {
    dim: usize,
    entries: Vec<(usize, usize, usize, usize, Complex64)>,
}

impl WignerEvaluator {
    pub fn new(state: &TwoModeDensityMatrix) -> Self {
        Self { dim: state.cutoff().dim(), entries: state.nonzero_entries() }
    }

    /// Complex sum `Σ ρ_klmn W_km(x_a, p_a) W_ln(x_b, p_b)`.
    pub fn eval_complex(&self, pt: PhasePoint4) -> Complex64 {
        let d = self.dim;
        let wa = kernel_table(d, pt.x_a, pt.p_a);
        let wb = kernel_table(d, pt.x_b, pt.p_b);
        self.eval_with_tables(&wa, &wb)
    }

    /// Same as [`Self::eval_complex`] from precomputed [`kernel_table`]s.
    pub fn eval_with_tables(&self, wa: &[Complex64], wb: &[Complex64]) -> Complex64 {
        let d = self.dim;
        self.entries.iter().map(|&(k, l, m, n, v)| v * wa[k * d + m] * wb[l * d + n]).sum()
    }

    pub fn eval(&self, pt: PhasePoint4) -> Result<f64> {
        let w = self.eval_complex(pt);
        if w.im.abs() > IMAG_TOL {
            return Err(Error::NumericalConsistency(w.im.abs()));
        }
        Ok(w.re)
    }
}

pub fn two_mode_wigner(state: &TwoModeDensityMatrix, pt: PhasePoint4) -> Result<f64> {
    WignerEvaluator::new(state).eval(pt)
}

/// Named cutting planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// `x_a = p_a = 0`; rows vary `x_b`, columns vary `p_b`.
    XaPaZero,
    /// `p_a = p_b = 0`; rows vary `x_a`, columns vary `x_b`.
    PaPbZero,
    /// `x_b = p_a = 0`; rows vary `x_a`, columns vary `p_b`.
    XbZero,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::XaPaZero, Plane::PaPbZero, Plane::XbZero];

    pub fn name(self) -> &'static str {
        match self {
            Plane::XaPaZero => "xa_pa_zero",
            Plane::PaPbZero => "pa_pb_zero",
            Plane::XbZero => "xb_zero",
        }
    }

    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            Plane::XaPaZero => ("x_b", "p_b"),
            Plane::PaPbZero => ("x_a", "x_b"),
            Plane::XbZero => ("x_a", "p_b"),
        }
    }

    pub fn point(self, u: f64, v: f64) -> PhasePoint4 {
        match self {
            Plane::XaPaZero => PhasePoint4::new(0.0, 0.0, u, v),
            Plane::PaPbZero => PhasePoint4::new(u, 0.0, v, 0.0),
            Plane::XbZero => PhasePoint4::new(u, 0.0, 0.0, v),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Plane::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::param("plane", format!("unknown plane `{s}` (expected xa_pa_zero, pa_pb_zero or xb_zero)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub plane: Plane,
    pub row_axis: String,
    pub col_axis: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub axes: GridAxes,
    pub coords: Vec<f64>,
    /// `values[i][j]` at row coordinate `coords[i]`, column coordinate `coords[j]`.
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn write(&self, csv_path: &Path, axes_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let json = serde_json::to_string_pretty(&self.axes)?;
        fs::write(axes_path, json).map_err(|e| Error::io(axes_path, e))
    }
}

/// Evaluate the Wigner function on `plane` over `[range.0, range.1]²` with spacing `step`.
pub fn cross_section(
    state: &TwoModeDensityMatrix,
    plane: Plane,
    range: (f64, f64),
    step: f64,
) -> Result<WignerGrid> {
    let (lo, hi) = range;
    if !(step > 0.0) || !(lo < hi) {
        return Err(Error::param("range", format!("need lo < hi and step > 0, got [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let coords: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let eval = WignerEvaluator::new(state);
    let rows = par::map_indexed(n, |i| {
        coords.iter().map(|&v| eval.eval(plane.point(coords[i], v))).collect::<Result<Vec<_>>>()
    });
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (row_axis, col_axis) = plane.axes();
    Ok(WignerGrid {
        axes: GridAxes {
            plane,
            row_axis: row_axis.into(),
            col_axis: col_axis.into(),
            min: lo,
            max: coords[n - 1],
            step,
            n,
        },
        coords,
        values,
    })
}

/// Single-mode Wigner function of a Fock-basis density matrix.
pub fn single_mode_wigner(rho: &nalgebra::DMatrix<Complex64>, x: f64, p: f64) -> f64 {
    let d = rho.nrows();
    let table = kernel_table(d, x, p);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..d {
        for m in 0..d {
            acc += rho[(k, m)] * table[k * d + m];
        }
    }
    acc.re
}

/// Largest deviation between the Wigner function of the split state and the
/// product input Wigner function `W_ρin(x₁, p₁) W_0(x₂, p₂)` at the rotated
/// point `x₁ = τx_a − ρx_b`, `x₂ = ρx_a + τx_b` (same for momenta).
pub fn rotation_check(model: &ModelSpec, pts: &[PhasePoint4]) -> Result<f64> {
    let out_state = make_true_state(model, false);
    let eval = WignerEvaluator::new(&out_state);
    let input = make_input_state(model.eta_prep, model.cutoff)?;
    let (tau, rho) = (model.bs.tau(), model.bs.rho());
    let mut worst = 0.0f64;
    for &pt in pts {
        let lhs = eval.eval(pt)?;
        let x1 = tau * pt.x_a - rho * pt.x_b;
        let p1 = tau * pt.p_a - rho * pt.p_b;
        let x2 = rho * pt.x_a + tau * pt.x_b;
        let p2 = rho * pt.p_a + tau * pt.p_b;
        let rhs = single_mode_wigner(input.matrix(), x1, p1) * (-(x2 * x2 + p2 * p2)).exp() / PI;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::fock::FockCutoff;
    use crate::homodyne::fock_wavefunction;
    use crate::quadrature::integrate_scalar;

    #[test]
    fn kernel_at_origin() {
        assert_abs_diff_eq!(wigner_mn(0, 0, 0.0, 0.0).re, 1.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wigner_mn(1, 1, 0.0, 0.0).re, -1.0 / PI, epsilon = 1e-15);
        assert_eq!(wigner_mn(0, 1, 0.0, 0.0).norm(), 0.0);
    }

    #[test]
    fn kernel_hermitian_pairs() {
        for m in 0..4 {
            for n in 0..4 {
                let a = wigner_mn(m, n, 0.3, -0.7);
                let b = wigner_mn(n, m, 0.3, -0.7);
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-15);
                assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn laguerre_values() {
        // L_2^{(1)}(x) = (x² − 6x + 6)/2
        assert_abs_diff_eq!(laguerre(2, 1.0, 0.7), (0.49 - 4.2 + 6.0) / 2.0, epsilon = 1e-14);
        // L_3^{(0)}(x) = (−x³ + 9x² − 18x + 6)/6
        let x: f64 = 1.3;
        assert_abs_diff_eq!(laguerre(3, 0.0, x), (-x.powi(3) + 9.0 * x * x - 18.0 * x + 6.0) / 6.0, epsilon = 1e-14);
    }

    /// Defining integral `W(x,p) = (1/π) ∫ ψ_m(x+y) ψ_n(x−y) e^{−2ipy} dy`.
    fn wigner_by_integral(m: usize, n: usize, x: f64, p: f64) -> Complex64 {
        let re = integrate_scalar(
            |y| fock_wavefunction(m, x + y) * fock_wavefunction(n, x - y) * (2.0 * p * y).cos(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-13,
        );
        let im = integrate_scalar(
            |y| -fock_wavefunction(m, x + y) * fock_wavefunction(n, x - y) * (2.0 * p * y).sin(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-13,
        );
        Complex64::new(re, im) / PI
    }

    #[test]
    fn kernel_matches_defining_integral() {
        for &(m, n) in &[(0, 0), (1, 0), (0, 1), (2, 1), (3, 3), (5, 2), (1, 4)] {
            for &(x, p) in &[(0.4, -0.3), (-1.1, 0.8)] {
                let closed = wigner_mn(m, n, x, p);
                let num = wigner_by_integral(m, n, x, p);
                assert_abs_diff_eq!(closed.re, num.re, epsilon = 1e-10);
                assert_abs_diff_eq!(closed.im, num.im, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn two_mode_values_at_origin() {
        let cut = FockCutoff::DEFAULT;
        let vac = TwoModeDensityMatrix::vacuum(cut);
        assert_abs_diff_eq!(two_mode_wigner(&vac, PhasePoint4::origin()).unwrap(), 1.0 / (PI * PI), epsilon = 1e-15);
        for &eta in &[0.2, 0.64, 1.0] {
            let s = make_true_state(&ModelSpec::new(eta, 1.0, 0.5, cut).unwrap(), false);
            let w = two_mode_wigner(&s, PhasePoint4::origin()).unwrap();
            assert_abs_diff_eq!(w, (1.0 - 2.0 * eta) / (PI * PI), epsilon = 1e-15);
        }
    }

    #[test]
    fn vacuum_grid_is_gaussian() {
        let vac = TwoModeDensityMatrix::vacuum(FockCutoff::DEFAULT);
        let g = cross_section(&vac, Plane::PaPbZero, (-2.0, 2.0), 0.5).unwrap();
        assert_eq!(g.values.len(), 9);
        for (i, &u) in g.coords.iter().enumerate() {
            for (j, &v) in g.coords.iter().enumerate() {
                assert_abs_diff_eq!(g.values[i][j], (-u * u - v * v).exp() / (PI * PI), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn plane_names_parse() {
        for p in Plane::ALL {
            assert_eq!(p.name().parse::<Plane>().unwrap(), p);
        }
        assert!("diagonal".parse::<Plane>().is_err());
    }

    #[test]
    fn rotation_identity_for_transparent_splitter() {
        let m = ModelSpec::new(0.64, 1.0, 1.0, FockCutoff::DEFAULT).unwrap();
        let pts = [PhasePoint4::new(0.3, -0.2, 1.0, 0.5), PhasePoint4::new(-1.0, 0.7, 0.1, -0.4)];
        assert!(rotation_check(&m, &pts).unwrap() < 1e-14);
    }

    #[test]
    fn grid_rejects_bad_range() {
        let vac = TwoModeDensityMatrix::vacuum(FockCutoff::DEFAULT);
        assert!(cross_section(&vac, Plane::XbZero, (1.0, -1.0), 0.1).is_err());
        assert!(cross_section(&vac, Plane::XbZero, (-1.0, 1.0), 0.0).is_err());
    }
}
