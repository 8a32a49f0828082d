//! Adaptive Gauss–Kronrod (7/15) quadrature with global subdivision.

use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not reach tol {tol:e} within {max_intervals} intervals (estimate {estimate}, error {error:e})")]
    NotConverged {
        tol: f64,
        max_intervals: usize,
        estimate: f64,
        error: f64,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("bad interval or tolerance")]
    Domain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(c - dx));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(c + dx));
        }
        k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<QuadResult, QuadError> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    while err > tol.max(4.0 * f64::EPSILON * total.abs()) {
        if heap.len() >= MAX_INTERVALS {
            return Err(QuadError::NotConverged {
                tol,
                max_intervals: MAX_INTERVALS,
                estimate: total,
                error: err,
            });
        }
        let p = heap.pop().expect("non-empty heap");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval exhausted at machine resolution; keep it and stop refining
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(f, p.a, m)?;
        let (v2, e2) = gk15(f, m, p.b)?;
        evals += 30;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
        // resum to limit drift
        total = heap.iter().map(|q| q.value).sum();
        err = heap.iter().map(|q| q.error).sum();
    }
    Ok(QuadResult { value: total, error: err, evals })
}

/// ∫_a^b f with absolute error target `tol`. Either bound may be infinite.
pub fn quad_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<QuadResult, QuadError> {
    if !(tol > 0.0) || a.is_nan() || b.is_nan() {
        return Err(QuadError::Domain);
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0 });
    }
    if a > b {
        let r = quad_1d(f, b, a, tol)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adapt(f, a, b, tol),
        (true, false) => {
            let g = |u: f64| {
                let x = a + u / (1.0 - u);
                let w = 1.0 / ((1.0 - u) * (1.0 - u));
                let v = f(x) * w;
                if v.is_nan() && w.is_infinite() {
                    0.0
                } else {
                    v
                }
            };
            adapt(&g, 0.0, 1.0, tol)
        }
        (false, true) => {
            let g = |u: f64| {
                let x = b - u / (1.0 - u);
                f(x) / ((1.0 - u) * (1.0 - u))
            };
            adapt(&g, 0.0, 1.0, tol)
        }
        (false, false) => {
            let g = |u: f64| {
                let x = u / (1.0 - u * u);
                f(x) * (1.0 + u * u) / ((1.0 - u * u) * (1.0 - u * u))
            };
            adapt(&g, -1.0, 1.0, tol)
        }
    }
}

/// Nested (iterated) quadrature over a box. Slow; meant for ≤ 4 dimensions.
pub fn quad_nd(f: &dyn Fn(&[f64]) -> f64, bounds: &[(f64, f64)], tol: f64) -> Result<QuadResult, QuadError> {
    fn rec(
        f: &dyn Fn(&[f64]) -> f64,
        bounds: &[(f64, f64)],
        prefix: &mut Vec<f64>,
        tol: f64,
        evals: &mut usize,
    ) -> Result<f64, QuadError> {
        let depth = prefix.len();
        if depth == bounds.len() {
            *evals += 1;
            return Ok(f(prefix));
        }
        let (a, b) = bounds[depth];
        let inner_tol = tol / (4.0 * (b - a).abs().max(1.0));
        let err_cell = std::cell::RefCell::new(None);
        let prefix_cell = std::cell::RefCell::new(std::mem::take(prefix));
        let evals_cell = std::cell::RefCell::new(0usize);
        let g = |x: f64| {
            let mut p = prefix_cell.borrow_mut();
            p.push(x);
            let mut e = 0usize;
            let r = rec(f, bounds, &mut p, inner_tol, &mut e);
            p.pop();
            *evals_cell.borrow_mut() += e;
            match r {
                Ok(v) => v,
                Err(err) => {
                    err_cell.borrow_mut().get_or_insert(err);
                    0.0
                }
            }
        };
        let r = quad_1d(&g, a, b, tol);
        *prefix = prefix_cell.into_inner();
        *evals += evals_cell.into_inner();
        if let Some(e) = err_cell.into_inner() {
            return Err(e);
        }
        Ok(r?.value)
    }
    let mut evals = 0;
    let v = rec(f, bounds, &mut Vec::new(), tol, &mut evals)?;
    Ok(QuadResult { value: v, error: tol, evals })
}

/// Γ(a, x) = ∫_x^∞ u^{a-1} e^{-u} du by quadrature.
pub fn upper_incomplete_gamma_quad(a: f64, x: f64) -> Result<f64, QuadError> {
    let f = move |u: f64| {
        if u == 0.0 {
            if a >= 1.0 {
                if a == 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                f64::INFINITY
            }
        } else {
            (-u + (a - 1.0) * u.ln()).exp()
        }
    };
    Ok(quad_1d(&f, x, f64::INFINITY, 1e-14)?.value)
}
