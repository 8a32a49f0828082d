//! Adaptive Gauss–Kronrod (7/15) quadrature, one-dimensional and nested.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: estimate {value:.6e}, error {error:.2e} after {evals} evaluations")]
    NoConvergence { value: f64, error: f64, evals: usize },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
}

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x1 = c - h * XK[j];
        let x2 = c + h * XK[j];
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(x2));
        }
        k += WK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

/// Adaptive bisection until the summed error estimate is below
/// max(abs_tol, rel_tol·|value|).
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad, QuadError> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, evals: 0 });
    }
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(f, a, b)?;
    segs.push((a, b, v, e));
    let mut evals = 15;
    loop {
        let value: f64 = segs.iter().map(|s| s.2).sum();
        let error: f64 = segs.iter().map(|s| s.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quad { value, error, evals });
        }
        if evals > 400_000 {
            return Err(QuadError::NoConvergence { value, error, evals });
        }
        let (i, _) = segs.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("nonempty");
        let (lo, hi, _, _) = segs.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid)?;
        let (v2, e2) = gk15(f, mid, hi)?;
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
        evals += 30;
    }
}

/// Integral over a box by nesting the one-dimensional rule.
pub fn integrate_box(f: &dyn Fn(&[f64]) -> f64, bounds: &[(f64, f64)], tol: f64) -> Result<Quad, QuadError> {
    fn rec(f: &dyn Fn(&[f64]) -> f64, bounds: &[(f64, f64)], x: &mut Vec<f64>, tol: f64, evals: &mut usize) -> Result<f64, QuadError> {
        let d = x.len();
        if d == bounds.len() {
            *evals += 1;
            return Ok(f(x));
        }
        let (a, b) = bounds[d];
        let err = std::cell::Cell::new(None);
        let inner = |t: f64| {
            let mut y = x.clone();
            y.push(t);
            let mut ev = 0;
            match rec(f, bounds, &mut y, tol, &mut ev) {
                Ok(v) => v,
                Err(e) => {
                    err.set(Some(e));
                    0.0
                }
            }
        };
        let q = integrate(&inner, a, b, tol, tol)?;
        if let Some(e) = err.take() {
            return Err(e);
        }
        *evals += q.evals;
        Ok(q.value)
    }
    let mut evals = 0;
    let v = rec(f, bounds, &mut Vec::new(), tol, &mut evals)?;
    Ok(Quad { value: v, error: tol, evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(&|x| x * x, 0.0, 3.0, 1e-14, 0.0).unwrap();
        assert!((q.value - 9.0).abs() < 1e-13);
    }

    #[test]
    fn log_singularity() {
        let eps = 2f64.powi(-10);
        let q = integrate(&|t| 1.0 / t, eps, 1.0, 1e-13, 1e-13).unwrap();
        assert!((q.value + eps.ln()).abs() < 1e-10);
    }

    #[test]
    fn box_integral() {
        let q = integrate_box(&|x| x[0] * x[1], &[(0.0, 1.0), (0.0, 2.0)], 1e-12).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
    }
}
