//! Counterterms, renormalized effective actions, the inverse map from systems
//! of effective actions to local functionals, and obstructions to the
//! renormalized quantum master equation.

use crate::coeff::{Coeff, EpsExpansion, ExpRat, Forms, Grass, Poly, Q, DELTA};
use crate::eps_algebra::{ms_singular, RenormScheme};
use crate::functionals::{self as fun, Functional, FunctionalError, Mono, Trunc};
use crate::schwinger::{self, GraphError, ToyOptions};
use crate::superspace::{OddSymplecticSpace, Scale, SpaceError};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenormError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("fit residual {residual:e} at ({i},{k}) exceeds tolerance")]
    Fit { i: u32, k: u32, residual: f64 },
    #[error("singular residue {size:e} left at ({i},{k})")]
    Singular { i: u32, k: u32, size: f64 },
    #[error("family violates the RG equation between T = {t1} and T = {t2} (discrepancy {discrepancy:e})")]
    NotRgConsistent { t1: Q, t2: Q, discrepancy: f64 },
    #[error("scale grid must be nonempty, positive and strictly increasing")]
    BadGrid,
    #[error("report: {0}")]
    Report(String),
}

/// An evaluator of Γ(P(ε,T), ·) with ε kept symbolic.
pub trait Backend {
    type C: Coeff;

    fn name(&self) -> String;
    fn n_even(&self) -> usize;
    fn n_odd(&self) -> usize;
    /// Γ(P(ε,T), S) for an action with ε-dependent coefficients.
    fn gamma_eps(&self, s: &Functional<EpsExpansion<Self::C>>, t: &Q, trunc: Trunc) -> Result<Functional<EpsExpansion<Self::C>>, RenormError>;
    /// Γ(P(T1,T2), S).
    fn flow(&self, s: &Functional<Self::C>, t1: &Q, t2: &Q, trunc: Trunc) -> Result<Functional<Self::C>, RenormError>;
    fn magnitude(c: &Self::C) -> f64;
    /// Labels on which `flow` of a local action obeys the semigroup law.
    fn rg_exact_labels(&self, trunc: Trunc) -> Vec<(u32, u32)> {
        trunc.labels()
    }
}

/// Exact finite-dimensional backend. The propagator is analytic in ε, so it
/// enters as a Taylor series of order `eps_order`.
#[derive(Debug, Clone)]
pub struct FiniteDim {
    pub space: OddSymplecticSpace,
    pub eps_order: u32,
}

impl FiniteDim {
    pub fn new(space: OddSymplecticSpace) -> Self {
        FiniteDim { space, eps_order: 2 }
    }
}

impl Backend for FiniteDim {
    type C = ExpRat;

    fn name(&self) -> String {
        format!("finite-dim {}|{}", self.space.n_even(), self.space.n_odd())
    }
    fn n_even(&self) -> usize {
        self.space.n_even()
    }
    fn n_odd(&self) -> usize {
        self.space.n_odd()
    }
    fn gamma_eps(&self, s: &Functional<EpsExpansion<ExpRat>>, t: &Q, trunc: Trunc) -> Result<Functional<EpsExpansion<ExpRat>>, RenormError> {
        let p = self.space.propagator_eps_series(&Scale::Finite(t.clone()), self.eps_order)?;
        let g = fun::gamma(&p, s, trunc)?;
        let top = 2 * self.eps_order as i32;
        Ok(g.map_coeffs(|c| c.truncate_above(top)))
    }
    fn flow(&self, s: &Functional<ExpRat>, t1: &Q, t2: &Q, trunc: Trunc) -> Result<Functional<ExpRat>, RenormError> {
        let p = self.space.propagator(t1, &Scale::Finite(t2.clone()))?;
        Ok(fun::gamma(&p, s, trunc)?)
    }
    fn magnitude(c: &ExpRat) -> f64 {
        c.to_f64().abs()
    }
}

/// Scalar field on ℝ^d with zero-momentum legs; actions live on the 1|0
/// space with raw couplings of ħ^i φ^k.
#[derive(Debug, Clone)]
pub struct ToyScalar {
    pub d: u32,
    pub opts: ToyOptions,
    /// Largest fit residual accepted for multi-loop graph weights.
    pub fit_tol: f64,
}

impl ToyScalar {
    pub fn new(d: u32) -> Self {
        ToyScalar { d, opts: ToyOptions::default(), fit_tol: 1e-8 }
    }
}

impl Backend for ToyScalar {
    type C = f64;

    fn name(&self) -> String {
        format!("toy-scalar d={}", self.d)
    }
    fn n_even(&self) -> usize {
        1
    }
    fn n_odd(&self) -> usize {
        0
    }
    fn gamma_eps(&self, s: &Functional<EpsExpansion<f64>>, t: &Q, trunc: Trunc) -> Result<Functional<EpsExpansion<f64>>, RenormError> {
        let (g, residuals) = schwinger::toy_gamma(s, self.d, t.to_f64(), trunc, &self.opts)?;
        for (&(i, k), &r) in &residuals {
            if r > self.fit_tol {
                return Err(RenormError::Fit { i, k, residual: r });
            }
        }
        Ok(g)
    }
    fn flow(&self, s: &Functional<f64>, t1: &Q, t2: &Q, trunc: Trunc) -> Result<Functional<f64>, RenormError> {
        Ok(schwinger::toy_flow(s, self.d, t1.to_f64(), t2.to_f64(), trunc, self.opts.quad_tol)?)
    }
    /// At zero momentum the tree parts of Γ(P(0,T1), S) are collapsed to
    /// points, so a loop of the flow closing through one of them loses the
    /// inner edge lengths. Only trees and the labels below the first composite
    /// vertex, (1,0) and (1,1), come out right.
    fn rg_exact_labels(&self, trunc: Trunc) -> Vec<(u32, u32)> {
        trunc.labels().into_iter().filter(|&(i, k)| i == 0 || (i == 1 && k <= 1)).collect()
    }
    fn magnitude(c: &f64) -> f64 {
        c.abs()
    }
}

/// ε-independent functional viewed as an ε-expansion.
pub fn lift<C: Coeff>(s: &Functional<C>) -> Functional<EpsExpansion<C>> {
    s.map_coeffs(|c| EpsExpansion::constant(c.clone()))
}

fn exp_magnitude<B: Backend>(e: &EpsExpansion<B::C>, singular: bool) -> f64 {
    e.terms.iter().filter(|(&(q2, m), _)| ms_singular(q2, m) == singular).map(|(_, c)| B::magnitude(c)).fold(0.0, f64::max)
}

/// Largest |c| over the coefficients of a functional.
pub fn max_magnitude<B: Backend>(f: &Functional<B::C>) -> f64 {
    f.terms().map(|(_, _, c)| B::magnitude(c)).fold(0.0, f64::max)
}

/// Largest |a − b| over the coefficients, relative to the largest |b|.
pub fn relative_discrepancy<B: Backend>(a: &Functional<B::C>, b: &Functional<B::C>) -> f64 {
    let d = max_magnitude::<B>(&a.sub(b));
    let scale = max_magnitude::<B>(b).max(max_magnitude::<B>(a));
    if d == 0.0 {
        0.0
    } else {
        d / scale.max(f64::MIN_POSITIVE)
    }
}

// ---------------------------------------------------------------------------
// Counterterms.

/// Progress record for one stage of an induction.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub i: u32,
    pub k: u32,
    /// Largest singular coefficient removed at this stage.
    pub removed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountertermSeries<C: Coeff> {
    pub scheme: String,
    pub t_ref: Q,
    pub trunc: Trunc,
    /// S^CT with ε-dependent coefficients; nothing at i = 0.
    pub terms: Functional<EpsExpansion<C>>,
    pub stages: Vec<Stage>,
}

/// S^CT by lexicographic induction over the labels with i ≥ 1:
/// S^CT_{(I,K)} is the singular part of Γ_{(I,K)}(P(ε,T), S − S^CT_{<(I,K)}).
pub fn extract_counterterms<B: Backend, R: RenormScheme>(
    s: &Functional<B::C>,
    backend: &B,
    scheme: &R,
    t_ref: &Q,
    trunc: Trunc,
) -> Result<CountertermSeries<B::C>, RenormError> {
    fun::check_action(s)?;
    let base = lift(&s.truncate(trunc));
    let mut ct: Functional<EpsExpansion<B::C>> = Functional::zero(backend.n_even(), backend.n_odd());
    let mut stages = Vec::new();
    for (i, k) in trunc.labels() {
        if i == 0 {
            continue;
        }
        let g = backend.gamma_eps(&base.sub(&ct), t_ref, Trunc::new(i, k))?.component(i, k);
        let mut removed: f64 = 0.0;
        for (_, m, c) in g.terms() {
            let sing = scheme.singular_part(c);
            removed = removed.max(exp_magnitude::<B>(&sing, true));
            ct.add_term(i, m.clone(), sing);
        }
        stages.push(Stage { i, k, removed });
    }
    Ok(CountertermSeries { scheme: scheme.name(), t_ref: t_ref.clone(), trunc, terms: ct, stages })
}

/// Per-label regularity of Γ(P(ε,T), S − S^CT).
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityEntry {
    pub i: u32,
    pub k: u32,
    /// Largest coefficient of a term without an ε → 0 limit.
    pub singular: f64,
    /// Largest coefficient among the remaining terms.
    pub regular: f64,
}

impl RegularityEntry {
    pub fn relative(&self) -> f64 {
        if self.singular == 0.0 {
            0.0
        } else {
            self.singular / self.regular.max(f64::MIN_POSITIVE)
        }
    }
}

/// Regularity certificate for the subtracted expansion at scale `t`.
pub fn regularity<B: Backend>(
    s: &Functional<B::C>,
    series: &CountertermSeries<B::C>,
    backend: &B,
    t: &Q,
) -> Result<Vec<RegularityEntry>, RenormError> {
    let g = backend.gamma_eps(&lift(s).sub(&series.terms), t, series.trunc)?;
    Ok(series
        .trunc
        .labels()
        .into_iter()
        .map(|(i, k)| {
            let comp = g.component(i, k);
            let (mut singular, mut regular) = (0.0f64, 0.0f64);
            for (_, _, c) in comp.terms() {
                singular = singular.max(exp_magnitude::<B>(c, true));
                regular = regular.max(exp_magnitude::<B>(c, false));
            }
            RegularityEntry { i, k, singular, regular }
        })
        .collect())
}

/// Singular parts of the tree-level components Γ_{(0,k)}(P(ε,T), S).
pub fn tree_level_singular_parts<B: Backend, R: RenormScheme>(
    s: &Functional<B::C>,
    backend: &B,
    scheme: &R,
    t: &Q,
    trunc: Trunc,
) -> Result<Functional<EpsExpansion<B::C>>, RenormError> {
    let tree = Trunc::new(0, trunc.weight());
    let g = backend.gamma_eps(&lift(&s.filter(|i, _| i == 0)), t, tree)?;
    Ok(g.filter(|i, _| i == 0).map_coeffs(|c| scheme.singular_part(c)))
}

/// Comparison of counterterm series extracted at several scales.
#[derive(Debug, Clone)]
pub struct TIndependenceReport {
    pub t_list: Vec<Q>,
    /// (i, k, monomial, 2q, m, largest relative spread across the scales)
    pub entries: Vec<(u32, u32, Mono, i32, u32, f64)>,
    pub max_discrepancy: f64,
}

impl TIndependenceReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_discrepancy <= tol
    }
}

pub fn check_t_independence<B: Backend, R: RenormScheme>(
    s: &Functional<B::C>,
    backend: &B,
    scheme: &R,
    t_list: &[Q],
    trunc: Trunc,
) -> Result<TIndependenceReport, RenormError> {
    if t_list.len() < 2 {
        return Err(RenormError::BadGrid);
    }
    let all: Vec<CountertermSeries<B::C>> = t_list.iter().map(|t| extract_counterterms(s, backend, scheme, t, trunc)).collect::<Result<_, _>>()?;
    let mut keys: BTreeMap<(u32, Mono, i32, u32), ()> = BTreeMap::new();
    for ser in &all {
        for (i, m, c) in ser.terms.terms() {
            for &(q2, mm) in c.terms.keys() {
                keys.insert((i, m.clone(), q2, mm), ());
            }
        }
    }
    // spreads are measured against the largest coefficient of the same
    // monomial, so roundoff-sized entries don't count as drift
    let mut mono_scale: BTreeMap<(u32, Mono), f64> = BTreeMap::new();
    for ser in &all {
        for (i, m, c) in ser.terms.terms() {
            let e = mono_scale.entry((i, m.clone())).or_insert(0.0);
            *e = e.max(exp_magnitude::<B>(c, false)).max(exp_magnitude::<B>(c, true));
        }
    }
    let mut entries = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, m, q2, mm) in keys.into_keys() {
        let vals: Vec<B::C> = all.iter().map(|ser| ser.terms.coeff(i, &m).coeff(q2, mm)).collect();
        let scale = mono_scale[&(i, m.clone())];
        let spread = vals.iter().map(|v| B::magnitude(&v.sub(&vals[0]))).fold(0.0, f64::max);
        let rel = if spread == 0.0 { 0.0 } else { spread / scale };
        worst = worst.max(rel);
        entries.push((i, m.degree(), m, q2, mm, rel));
    }
    Ok(TIndependenceReport { t_list: t_list.to_vec(), entries, max_discrepancy: worst })
}

/// Γ^R(P(0,T), S) = lim_{ε→0} Γ(P(ε,T), S − S^CT). Fails if a singular
/// coefficient larger than `tol` relative to the regular part survives.
pub fn renormalized_gamma<B: Backend>(
    s: &Functional<B::C>,
    series: &CountertermSeries<B::C>,
    backend: &B,
    t: &Q,
    tol: f64,
) -> Result<Functional<B::C>, RenormError> {
    let g = backend.gamma_eps(&lift(s).sub(&series.terms), t, series.trunc)?;
    limit_checked::<B>(&g, tol)
}

fn limit_checked<B: Backend>(g: &Functional<EpsExpansion<B::C>>, tol: f64) -> Result<Functional<B::C>, RenormError> {
    let mut out = Functional::zero(g.n_even(), g.n_odd());
    let scale = g.terms().map(|(_, _, c)| exp_magnitude::<B>(c, false)).fold(0.0, f64::max);
    for (i, m, c) in g.terms() {
        let sing = exp_magnitude::<B>(c, true);
        if sing > tol * scale.max(1.0) {
            return Err(RenormError::Singular { i, k: m.degree(), size: sing });
        }
        out.add_term(i, m.clone(), c.constant_term());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Systems of effective actions.

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSystem<C: Coeff> {
    pub grid: Vec<Q>,
    pub actions: Vec<Functional<C>>,
}

fn check_grid(grid: &[Q]) -> Result<(), RenormError> {
    if grid.is_empty() || grid[0].signum() <= 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RenormError::BadGrid);
    }
    Ok(())
}

/// T ↦ Γ^R(P(0,T), S) on a grid, with counterterms from `scheme`.
pub fn effective_system<B: Backend, R: RenormScheme>(
    s: &Functional<B::C>,
    backend: &B,
    scheme: &R,
    grid: &[Q],
    trunc: Trunc,
    tol: f64,
) -> Result<EffectiveSystem<B::C>, RenormError> {
    check_grid(grid)?;
    let series = extract_counterterms(s, backend, scheme, &grid[0], trunc)?;
    let actions = grid.iter().map(|t| renormalized_gamma(s, &series, backend, t, tol)).collect::<Result<_, _>>()?;
    Ok(EffectiveSystem { grid: grid.to_vec(), actions })
}

/// Relative discrepancy of Γ(P(T_a,T_b), S_eff(T_a)) against S_eff(T_b) for
/// consecutive grid points, on the backend's RG-exact labels.
pub fn rg_discrepancies<B: Backend>(sys: &EffectiveSystem<B::C>, backend: &B, trunc: Trunc) -> Result<Vec<(Q, Q, f64)>, RenormError> {
    let mut out = Vec::new();
    for a in 1..sys.grid.len() {
        let (t1, t2) = (&sys.grid[a - 1], &sys.grid[a]);
        let pushed = backend.flow(&sys.actions[a - 1], t1, t2, trunc)?;
        let labels = backend.rg_exact_labels(trunc);
        let keep = |i: u32, k: u32| labels.contains(&(i, k));
        let d = relative_discrepancy::<B>(&pushed.filter(keep), &sys.actions[a].truncate(trunc).filter(keep));
        out.push((t1.clone(), t2.clone(), d));
    }
    Ok(out)
}

/// The local functional whose effective system is `sys`, by induction:
/// S_{(I,K)} = S^eff_{(I,K)}(T0) − Γ^R_{(I,K)}(P(0,T0), S_{<(I,K)}).
pub fn effective_to_local<B: Backend, R: RenormScheme>(
    sys: &EffectiveSystem<B::C>,
    backend: &B,
    scheme: &R,
    trunc: Trunc,
    tol: f64,
) -> Result<Functional<B::C>, RenormError> {
    check_grid(&sys.grid)?;
    if let Some((t1, t2, d)) = rg_discrepancies(sys, backend, trunc)?.into_iter().max_by(|a, b| a.2.total_cmp(&b.2)) {
        if d > tol {
            return Err(RenormError::NotRgConsistent { t1, t2, discrepancy: d });
        }
    }
    let t0 = &sys.grid[0];
    let target = &sys.actions[0];
    let (ne, no) = (backend.n_even(), backend.n_odd());
    let mut s: Functional<B::C> = Functional::zero(ne, no);
    let mut ct: Functional<EpsExpansion<B::C>> = Functional::zero(ne, no);
    for (i, k) in trunc.labels() {
        let g = backend.gamma_eps(&lift(&s).sub(&ct), t0, Trunc::new(i, k))?.component(i, k);
        let scale = g.terms().map(|(_, _, c)| exp_magnitude::<B>(c, false)).fold(0.0, f64::max);
        let mut from_lower: Functional<B::C> = Functional::zero(ne, no);
        for (_, m, c) in g.terms() {
            let sing = scheme.singular_part(c);
            if i == 0 {
                let size = exp_magnitude::<B>(&sing, true);
                if size > tol * scale.max(1.0) {
                    return Err(RenormError::Singular { i, k, size });
                }
            } else {
                ct.add_term(i, m.clone(), sing.clone());
            }
            from_lower.add_term(i, m.clone(), c.sub(&sing).constant_term());
        }
        s.add_assign(&target.component(i, k).sub(&from_lower));
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// Obstructions.

/// O_{(I,K)}(S) for a finite-dimensional space at scale T, per label.
///
/// O_{(I,K)} is the (I,K) component of ∂/∂δ Γ(P(0,T) − δK_0, S + δ((Q + d_DR)S − O_{<(I,K)}))
/// with δ odd. The ε-dependence is analytic here, so ε = 0.
pub fn obstruction(
    space: &OddSymplecticSpace,
    s: &Functional<Forms<ExpRat>>,
    t: &Scale,
    trunc: Trunc,
) -> Result<BTreeMap<(u32, u32), Functional<Forms<ExpRat>>>, RenormError> {
    let lift_c = |c: &ExpRat| Grass::scalar(Poly::constant(c.clone()));
    let delta: Forms<ExpRat> = Grass::generator(DELTA, Poly::constant(ExpRat::one()));
    let p = space.propagator(&Q::zero(), t)?.map(lift_c);
    let k0 = space.k0().map(|q| lift_c(&ExpRat::from_q(q)));
    let pd = p.add(&k0.neg().scale(&delta, true));
    let s = s.truncate(trunc);
    let base = s.apply_q(space.q()).add(&s.apply_coeff_derivation(|c| c.d_dr()));
    let mut total = Functional::zero(s.n_even(), s.n_odd());
    let mut out = BTreeMap::new();
    for (i, k) in trunc.labels() {
        let x = base.sub(&total).filter(|a, b| Trunc::new(i, k).contains(a, b));
        let sd = s.add(&x.map_coeffs(|c| delta.mul(c)));
        let g = fun::gamma(&pd, &sd, Trunc::new(i, k))?;
        let o = g.component(i, k).map_coeffs(|c| c.d_delta_left());
        total.add_assign(&o);
        out.insert((i, k), o);
    }
    Ok(out)
}

/// [`obstruction`] for an action without form coefficients.
pub fn obstruction_plain(
    space: &OddSymplecticSpace,
    s: &Functional<ExpRat>,
    t: &Scale,
    trunc: Trunc,
) -> Result<BTreeMap<(u32, u32), Functional<ExpRat>>, RenormError> {
    let o = obstruction(space, &s.map_coeffs(|c| Grass::scalar(Poly::constant(c.clone()))), t, trunc)?;
    Ok(o.into_iter().map(|(l, f)| (l, f.map_coeffs(|c| c.c[0].eval(&ExpRat::zero())))).collect())
}

// ---------------------------------------------------------------------------
// Reports.

/// One row of a counterterm or obstruction table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub stage: String,
    pub i: u32,
    pub k: u32,
    pub monomial: String,
    /// Power of ε.
    pub q: f64,
    /// Power of ln ε.
    pub m: u32,
    pub coeff: String,
    pub residual: f64,
}

/// Rows for every term of a counterterm series.
pub fn counterterm_rows<B: Backend>(series: &CountertermSeries<B::C>) -> Vec<ReportRow> {
    let removed: BTreeMap<(u32, u32), f64> = series.stages.iter().map(|s| ((s.i, s.k), s.removed)).collect();
    let (ne, no) = (series.terms.n_even(), series.terms.n_odd());
    let mut rows = Vec::new();
    for (i, m, c) in series.terms.terms() {
        let k = m.degree();
        for (&(q2, mm), v) in &c.terms {
            rows.push(ReportRow {
                stage: format!("counterterm {}", series.scheme),
                i,
                k,
                monomial: m.format(ne, no),
                q: q2 as f64 / 2.0,
                m: mm,
                coeff: v.to_string(),
                residual: removed.get(&(i, k)).copied().unwrap_or(0.0),
            });
        }
    }
    rows
}

/// Rows for ε-independent functionals, one per term.
pub fn functional_rows<C: Coeff>(stage: &str, f: &Functional<C>, residual: f64) -> Vec<ReportRow> {
    f.terms()
        .map(|(i, m, c)| ReportRow {
            stage: stage.to_string(),
            i,
            k: m.degree(),
            monomial: m.format(f.n_even(), f.n_odd()),
            q: 0.0,
            m: 0,
            coeff: c.to_string(),
            residual,
        })
        .collect()
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, RenormError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| RenormError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RenormError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RenormError::Report(e.to_string()))
}

pub fn rows_to_json(rows: &[ReportRow]) -> Result<String, RenormError> {
    serde_json::to_string_pretty(rows).map_err(|e| RenormError::Report(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eps_algebra::{FakeScheme, MinimalSubtraction};

    fn phi34(g3: f64, g4: f64) -> Functional<f64> {
        let mut s = Functional::zero(1, 0);
        s.add_term(0, Mono { ev: 3, od: 0 }, g3);
        s.add_term(0, Mono { ev: 4, od: 0 }, g4);
        s
    }

    #[test]
    fn toy_counterterms_sit_where_the_divergent_graphs_are() {
        let b = ToyScalar::new(4);
        let s = phi34(0.5, 0.25);
        let ser = extract_counterterms(&s, &b, &MinimalSubtraction, &Q::one(), Trunc::new(1, 4)).unwrap();
        let at = |k: u32| ser.terms.coeff(1, &Mono { ev: k as u128, od: 0 });
        assert!(at(0).is_zero());
        assert!(at(1).coeff(-2, 0) != 0.0 && at(1).coeff(0, 1) == 0.0);
        assert!(at(2).coeff(-2, 0) != 0.0 && at(2).coeff(0, 1) != 0.0);
        assert!(at(4).coeff(0, 1) != 0.0);
        assert!(ser.terms.filter(|i, _| i == 0).is_zero());
    }

    #[test]
    fn fake_scheme_counterterms_drift_with_scale() {
        let b = ToyScalar::new(4);
        let s = phi34(0.5, 0.25);
        let ts = [Q::new(1, 2), Q::one(), Q::from(2)];
        let good = check_t_independence(&s, &b, &MinimalSubtraction, &ts, Trunc::new(1, 2)).unwrap();
        assert!(good.passes(1e-9), "{}", good.max_discrepancy);
        let bad = check_t_independence(&s, &b, &FakeScheme, &ts, Trunc::new(1, 2)).unwrap();
        assert!(!bad.passes(1e-3));
    }

    #[test]
    fn report_rows_roundtrip_through_csv_and_json() {
        let b = ToyScalar::new(4);
        let ser = extract_counterterms(&phi34(1.0, 0.0), &b, &MinimalSubtraction, &Q::one(), Trunc::new(1, 2)).unwrap();
        let rows = counterterm_rows::<ToyScalar>(&ser);
        assert!(!rows.is_empty());
        let csv = rows_to_csv(&rows).unwrap();
        assert!(csv.starts_with("stage,i,k,monomial,q,m,coeff,residual"));
        let json: serde_json::Value = serde_json::from_str(&rows_to_json(&rows).unwrap()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), rows.len());
    }
}
