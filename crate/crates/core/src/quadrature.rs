//! Adaptive Gauss–Kronrod integration of vector-valued integrands.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

/// Integrand writing `dim` component values at `x` into the output slice.
pub trait VecIntegrand {
    fn dim(&self) -> usize;
    fn eval(&self, x: f64, out: &mut [f64]);
}

impl<F: Fn(f64, &mut [f64])> VecIntegrand for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, x: f64, out: &mut [f64]) {
        (self.1)(x, out)
    }
}

/// Fixed 15-point Kronrod rule on `[a, b]`; returns (integral, error estimate per component).
pub fn gk15<I: VecIntegrand + ?Sized>(f: &I, a: f64, b: f64) -> (Vec<f64>, f64) {
    let dim = f.dim();
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];

    f.eval(centre, &mut buf);
    for c in 0..dim {
        kron[c] += WGK[7] * buf[c];
        gauss[c] += WG[3] * buf[c];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for x in [centre - dx, centre + dx] {
            f.eval(x, &mut buf);
            for c in 0..dim {
                kron[c] += WGK[j] * buf[c];
                if j % 2 == 1 {
                    gauss[c] += WG[j / 2] * buf[c];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for c in 0..dim {
        kron[c] *= half;
        gauss[c] *= half;
        err = err.max((kron[c] - gauss[c]).abs());
    }
    (kron, err)
}

struct Mapped<'a, I: ?Sized> {
    inner: &'a I,
    map: Map,
}

#[derive(Clone, Copy)]
enum Map {
    // x = a + t / (1 - t)
    Upper(f64),
    // x = b - t / (1 - t)
    Lower(f64),
}

impl<I: VecIntegrand + ?Sized> VecIntegrand for Mapped<'_, I> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, t: f64, out: &mut [f64]) {
        let s = 1.0 - t;
        let jac = 1.0 / (s * s);
        let x = match self.map {
            Map::Upper(a) => a + t / s,
            Map::Lower(b) => b - t / s,
        };
        if !x.is_finite() {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.inner.eval(x, out);
        out.iter_mut().for_each(|v| *v *= jac);
    }
}

fn adaptive<I: VecIntegrand + ?Sized>(f: &I, a: f64, b: f64, abs_tol: f64) -> Vec<f64> {
    let mut intervals: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
    let (v, e) = gk15(f, a, b);
    intervals.push((a, b, v, e));
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= abs_tol || intervals.len() >= MAX_INTERVALS {
            if total_err > abs_tol {
                log::warn!("quadrature stopped at {} intervals with error {total_err:e}", intervals.len());
            }
            break;
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // sum in position order so the result does not depend on refinement history
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = vec![0.0; f.dim()];
    for iv in &intervals {
        for (o, v) in out.iter_mut().zip(&iv.2) {
            *o += v;
        }
    }
    out
}

/// Integrate over `[a, b]`, where either bound may be infinite, to absolute tolerance `abs_tol`.
pub fn integrate<I: VecIntegrand + ?Sized>(f: &I, a: f64, b: f64, abs_tol: f64) -> Vec<f64> {
    assert!(a <= b, "integration bounds out of order");
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(f, a, b, abs_tol),
        (true, false) => adaptive(&Mapped { inner: f, map: Map::Upper(a) }, 0.0, 1.0, abs_tol),
        (false, true) => adaptive(&Mapped { inner: f, map: Map::Lower(b) }, 0.0, 1.0, abs_tol),
        (false, false) => {
            let mut lo = adaptive(&Mapped { inner: f, map: Map::Lower(0.0) }, 0.0, 1.0, 0.5 * abs_tol);
            let hi = adaptive(&Mapped { inner: f, map: Map::Upper(0.0) }, 0.0, 1.0, 0.5 * abs_tol);
            lo.iter_mut().zip(hi).for_each(|(l, h)| *l += h);
            lo
        }
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate(&(1usize, |x: f64, out: &mut [f64]| out[0] = f(x)), a, b, abs_tol)[0]
}
