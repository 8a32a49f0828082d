//! Expansions Σ c ε^q (ln ε)^m, renormalization schemes, and least-squares
//! fitting of sampled functions to such expansions.

use crate::coeff::{Coeff, EpsExpansion, Q};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use thiserror::Error;

/// A splitting of the ε-functions into singular and regular parts.
///
/// `singular_part` must be a projection. Legal schemes keep constants on the
/// regular side; [`FakeScheme`] deliberately does not.
pub trait RenormScheme: Send + Sync {
    fn name(&self) -> String;
    fn singular_part<C: Coeff>(&self, f: &EpsExpansion<C>) -> EpsExpansion<C>;
}

/// ε^q ln^m ε is singular iff q < 0, or q = 0 and m > 0.
pub fn ms_singular(q2: i32, m: u32) -> bool {
    q2 < 0 || (q2 == 0 && m > 0)
}

/// The minimal scheme: the singular part is spanned by ε^q ln^m ε with
/// q < 0, or q = 0 and m > 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct MinimalSubtraction;

impl RenormScheme for MinimalSubtraction {
    fn name(&self) -> String {
        "ms".into()
    }
    fn singular_part<C: Coeff>(&self, f: &EpsExpansion<C>) -> EpsExpansion<C> {
        let mut r = EpsExpansion::zero();
        for (&(q2, m), c) in &f.terms {
            if ms_singular(q2, m) {
                r.push(q2, m, c.clone());
            }
        }
        r
    }
}

/// Subtraction at a scale μ = e^r: the logarithmic singular directions are
/// ln^m ε − r^m instead of ln^m ε, so the finite part shifts by constants.
#[derive(Debug, Clone)]
pub struct MuScheme {
    pub log_mu: Q,
}

impl RenormScheme for MuScheme {
    fn name(&self) -> String {
        format!("mu(r={})", self.log_mu)
    }
    fn singular_part<C: Coeff>(&self, f: &EpsExpansion<C>) -> EpsExpansion<C> {
        let mut r = EpsExpansion::zero();
        for (&(q2, m), c) in &f.terms {
            if !ms_singular(q2, m) {
                continue;
            }
            r.push(q2, m, c.clone());
            if q2 == 0 {
                r.push(0, 0, c.scale_q(&self.log_mu.pow(m)).neg());
            }
        }
        r
    }
}

/// Not a scheme: constants are classified as singular. Used as a negative
/// control, since it makes counterterms depend on T.
#[derive(Debug, Clone, Copy, Default)]
pub struct FakeScheme;

impl RenormScheme for FakeScheme {
    fn name(&self) -> String {
        "fake".into()
    }
    fn singular_part<C: Coeff>(&self, f: &EpsExpansion<C>) -> EpsExpansion<C> {
        let mut r = EpsExpansion::zero();
        for (&(q2, m), c) in &f.terms {
            if q2 <= 0 {
                r.push(q2, m, c.clone());
            }
        }
        r
    }
}

/// The schemes selectable by name.
#[derive(Debug, Clone)]
pub enum Scheme {
    Minimal,
    Mu(Q),
    Fake,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        let s = s.trim();
        match s {
            "ms" | "minimal" => Some(Scheme::Minimal),
            "fake" => Some(Scheme::Fake),
            _ => s.strip_prefix("mu:").and_then(|r| r.parse().ok()).map(Scheme::Mu),
        }
    }
}

impl RenormScheme for Scheme {
    fn name(&self) -> String {
        match self {
            Scheme::Minimal => MinimalSubtraction.name(),
            Scheme::Mu(r) => MuScheme { log_mu: r.clone() }.name(),
            Scheme::Fake => FakeScheme.name(),
        }
    }
    fn singular_part<C: Coeff>(&self, f: &EpsExpansion<C>) -> EpsExpansion<C> {
        match self {
            Scheme::Minimal => MinimalSubtraction.singular_part(f),
            Scheme::Mu(r) => MuScheme { log_mu: r.clone() }.singular_part(f),
            Scheme::Fake => FakeScheme.singular_part(f),
        }
    }
}

/// f − singular_part(f).
pub fn regular_part<C: Coeff, S: RenormScheme>(s: &S, f: &EpsExpansion<C>) -> EpsExpansion<C> {
    f.sub(&s.singular_part(f))
}

/// True if every term has a finite ε → 0 limit.
pub fn is_regular<C: Coeff>(f: &EpsExpansion<C>) -> bool {
    f.terms.keys().all(|&(q2, m)| !ms_singular(q2, m))
}

/// The ε → 0 limit of a regular expansion.
pub fn limit<C: Coeff>(f: &EpsExpansion<C>) -> C {
    f.constant_term()
}

// ---------------------------------------------------------------------------
// Fitting.

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples for {basis} basis functions, got {got}")]
    TooFewSamples { need: usize, basis: usize, got: usize },
    #[error("sample at eps = {0} is not in (0, eps_max]")]
    BadSample(f64),
    #[error("basis elements {0} and {1} are not independent on the sample grid")]
    RankDeficient(String, String),
    #[error("design matrix condition number {0:.3e} exceeds {1:.1e}")]
    IllConditioned(f64, f64),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_condition: f64,
    /// Accept ill-conditioned fits.
    pub force: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_condition: 1e10, force: false }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub expansion: EpsExpansion<f64>,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
    pub condition: f64,
}

pub fn basis_label(q2: i32, m: u32) -> String {
    let q = if q2 % 2 == 0 { format!("{}", q2 / 2) } else { format!("{q2}/2") };
    format!("eps^{q}*ln(eps)^{m}")
}

fn basis_value(q2: i32, m: u32, eps: f64) -> f64 {
    eps.powf(q2 as f64 / 2.0) * eps.ln().powi(m as i32)
}

/// Geometric grid eps_max·ratio^j, j = 0..n.
pub fn geometric_grid(eps_max: f64, ratio: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| eps_max * ratio.powi(j as i32)).collect()
}

/// Least-squares fit of samples (ε, value) to the span of ε^q ln^m ε.
pub fn fit_expansion(samples: &[(f64, f64)], basis: &[(i32, u32)], opts: &FitOptions) -> Result<Fit, FitError> {
    let nb = basis.len();
    if samples.len() < 2 * nb {
        return Err(FitError::TooFewSamples { need: 2 * nb, basis: nb, got: samples.len() });
    }
    for &(e, _) in samples {
        if !(e > 0.0 && e.is_finite()) {
            return Err(FitError::BadSample(e));
        }
    }
    for i in 0..nb {
        for j in i + 1..nb {
            if basis[i] == basis[j] {
                return Err(FitError::RankDeficient(basis_label(basis[i].0, basis[i].1), basis_label(basis[j].0, basis[j].1)));
            }
        }
    }
    let ns = samples.len();
    let mut a = DMatrix::<f64>::zeros(ns, nb);
    for (r, &(e, _)) in samples.iter().enumerate() {
        for (c, &(q2, m)) in basis.iter().enumerate() {
            a[(r, c)] = basis_value(q2, m, e);
        }
    }
    // equilibrate columns before judging conditioning
    let scales: Vec<f64> = (0..nb).map(|c| a.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    for c in 0..nb {
        let s = scales[c];
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let b = DVector::from_iterator(ns, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > 1e15 {
        // name the two basis elements that dominate the near-null direction
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let k = svd.singular_values.imin();
        let row = v_t.row(k);
        let mut idx: Vec<usize> = (0..nb).collect();
        idx.sort_by(|&x, &y| row[y].abs().total_cmp(&row[x].abs()));
        let (i, j) = (idx[0], idx.get(1).copied().unwrap_or(idx[0]));
        return Err(FitError::RankDeficient(basis_label(basis[i].0, basis[i].1), basis_label(basis[j].0, basis[j].1)));
    }
    if cond > opts.max_condition && !opts.force {
        return Err(FitError::IllConditioned(cond, opts.max_condition));
    }
    let x = svd.solve(&b, 0.0).expect("svd solve");
    let resid = (&a * &x - &b).norm();
    let mut e = EpsExpansion::zero();
    for (c, &(q2, m)) in basis.iter().enumerate() {
        e.push(q2, m, x[c] / scales[c]);
    }
    Ok(Fit { expansion: e, residual: resid, condition: cond })
}

// ---------------------------------------------------------------------------
// Exact integrals of ε^q ln^m ε.

/// Antiderivative of t^q ln^m t as a list of (2q′, m′, coefficient).
///
/// q ≠ −1: t^{q+1} Σ_j (−1)^j m!/(m−j)! ln^{m−j}t / (q+1)^{j+1};
/// q = −1: ln^{m+1}t/(m+1).
pub fn antiderivative(q2: i32, m: u32) -> Vec<(i32, u32, Q)> {
    if q2 == -2 {
        return vec![(0, m + 1, Q::new(1, m as i64 + 1))];
    }
    let p = Q::new(q2 as i64 + 2, 2);
    let pinv = p.inv().expect("q ≠ −1");
    let mut out = Vec::new();
    let mut falling = Q::one();
    let mut ppow = pinv.clone();
    for j in 0..=m {
        let sign = if j % 2 == 0 { Q::one() } else { Q::from(-1) };
        out.push((q2 + 2, m - j, sign.mul(&falling).mul(&ppow)));
        falling = falling.mul(&Q::from((m - j) as i64));
        ppow = ppow.mul(&pinv);
    }
    out
}

fn eval_terms(terms: &[(i32, u32, Q)], t: f64) -> f64 {
    terms.iter().map(|(q2, m, c)| c.to_f64() * basis_value(*q2, *m, t)).sum()
}

/// ∫_ε^T t^q ln^m t dt as an expansion in ε; the T-end is folded into the constant.
pub fn integrate_monomial(q2: i32, m: u32, t_upper: f64) -> EpsExpansion<f64> {
    let anti = antiderivative(q2, m);
    let mut e = EpsExpansion::constant(eval_terms(&anti, t_upper));
    for (q, mm, c) in anti {
        e.push(q, mm, -c.to_f64());
    }
    e
}

/// Termwise ∫_ε^T of an expansion in t.
pub fn integrate_expansion(f: &EpsExpansion<f64>, t_upper: f64) -> EpsExpansion<f64> {
    let mut r = EpsExpansion::zero();
    for (&(q2, m), c) in &f.terms {
        r = r.add(&integrate_monomial(q2, m, t_upper).map(|x| x * c));
    }
    r
}

// ---------------------------------------------------------------------------
// Text form: one "q, m, coeff" triple per line.

pub fn to_csv<C: Coeff>(f: &EpsExpansion<C>) -> String {
    let mut s = String::new();
    for (&(q2, m), c) in &f.terms {
        let q = if q2 % 2 == 0 { format!("{}", q2 / 2) } else { format!("{q2}/2") };
        let _ = writeln!(s, "{q}, {m}, {c}");
    }
    s
}

pub fn from_csv(s: &str) -> Result<EpsExpansion<f64>, String> {
    let mut e = EpsExpansion::zero();
    for (ln, line) in s.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
        if parts.len() != 3 {
            return Err(format!("line {}: expected q, m, coeff", ln + 1));
        }
        let q: Q = parts[0].parse().map_err(|_| format!("line {}: bad q", ln + 1))?;
        let q2 = q.mul(&Q::from(2));
        if !q2.is_integer() {
            return Err(format!("line {}: q must be a half-integer", ln + 1));
        }
        let m: u32 = parts[1].parse().map_err(|_| format!("line {}: bad m", ln + 1))?;
        let c: f64 = parts[2].parse().map_err(|_| format!("line {}: bad coefficient", ln + 1))?;
        e.push(q2.to_f64() as i32, m, c);
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(terms: &[(i32, u32, f64)]) -> EpsExpansion<f64> {
        let mut e = EpsExpansion::zero();
        for &(q, m, c) in terms {
            e.push(q, m, c);
        }
        e
    }

    #[test]
    fn minimal_singular_parts() {
        let s = MinimalSubtraction;
        assert_eq!(s.singular_part(&ex(&[(-2, 0, 3.0), (0, 0, 2.0), (2, 0, 1.0)])), ex(&[(-2, 0, 3.0)]));
        assert_eq!(s.singular_part(&ex(&[(0, 1, -1.0), (0, 0, 0.5)])), ex(&[(0, 1, -1.0)]));
        assert_eq!(s.singular_part(&ex(&[(-1, 2, 1.0), (1, 0, 5.0)])), ex(&[(-1, 2, 1.0)]));
    }

    #[test]
    fn projections_are_idempotent() {
        let f = ex(&[(-2, 0, 3.0), (0, 2, 1.5), (0, 1, -1.0), (0, 0, 2.0), (1, 1, 4.0)]);
        for sch in [Scheme::Minimal, Scheme::Mu(Q::new(1, 3)), Scheme::Fake] {
            let p = sch.singular_part(&f);
            assert_eq!(sch.singular_part(&p), p, "{}", sch.name());
        }
        for sch in [Scheme::Minimal, Scheme::Mu(Q::new(-2, 1))] {
            assert!(is_regular(&regular_part(&sch, &f)));
        }
    }

    #[test]
    fn mu_scheme_vanishes_at_mu() {
        let r = Q::new(1, 2);
        let f = ex(&[(0, 2, 3.0), (0, 1, -1.0)]);
        let p = MuScheme { log_mu: r.clone() }.singular_part(&f);
        // the subtracted function vanishes at ε = μ
        assert!(p.eval(r.to_f64().exp()).abs() < 1e-14);
    }

    #[test]
    fn fit_exact_function() {
        let grid = geometric_grid(1.0 / 16.0, 0.5, 9);
        let samples: Vec<(f64, f64)> = grid.iter().map(|&e| (e, 1.0 / e - 1.0)).collect();
        let f = fit_expansion(&samples, &[(-2, 0), (0, 0)], &FitOptions::default()).unwrap();
        assert!((f.expansion.coeff(-2, 0) - 1.0).abs() < 1e-10);
        assert!((f.expansion.coeff(0, 0) + 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_drops_flat_function() {
        let grid = geometric_grid(1.0 / 32.0, 0.5, 12);
        let samples: Vec<(f64, f64)> = grid.iter().map(|&e| (e, (-1.0 / e).exp())).collect();
        let f = fit_expansion(&samples, &[(-2, 0), (0, 1), (0, 0), (2, 0)], &FitOptions::default()).unwrap();
        assert!(f.expansion.max_abs() < 1e-8, "{}", f.expansion);
    }

    #[test]
    fn fit_rejects_duplicates_and_small_samples() {
        let samples: Vec<(f64, f64)> = (1..10).map(|j| (0.5f64.powi(j), 1.0)).collect();
        assert!(matches!(fit_expansion(&samples, &[(0, 0), (0, 0)], &FitOptions::default()), Err(FitError::RankDeficient(..))));
        assert!(matches!(fit_expansion(&samples[..3], &[(0, 0), (2, 0)], &FitOptions::default()), Err(FitError::TooFewSamples { .. })));
    }

    #[test]
    fn integrate_simple_monomials() {
        let e = integrate_monomial(0, 0, 1.0);
        assert_eq!(e, ex(&[(0, 0, 1.0), (2, 0, -1.0)]));
        let e = integrate_monomial(-2, 0, 2.0);
        assert!((e.coeff(0, 0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(e.coeff(0, 1), -1.0);
    }

    #[test]
    fn csv_roundtrip() {
        let f = ex(&[(-1, 2, 1.25), (0, 0, -3.0), (4, 1, 0.5)]);
        assert_eq!(from_csv(&to_csv(&f)).unwrap(), f);
    }
}
