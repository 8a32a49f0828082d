use crate::config::Config;
use bvren::eps_algebra::{geometric_grid, Scheme};
use bvren::functionals::{self as fun, random, Functional, Mono, Trunc};
use bvren::qme::{deform, random_chi, seed_space, SeedKind};
use bvren::renorm::{self, Backend, FiniteDim, ReportRow, ToyScalar};
use bvren::schwinger::{cs_heat_integrand, cs_propagator, enumerate_graphs, graph_polynomial, GraphPolynomial};
use bvren::superspace::{assemble, random_space, Block};
use bvren::{Coeff, ExpRat, OddSymplecticSpace, Scale, Q};
use bvren_oracles as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;

pub const EXPERIMENTS: [&str; 7] = ["qme-flow", "counterterms-phi4-d4", "rg-roundtrip", "obstruction", "graph-tables", "cs-propagator", "gaussian-lemma"];

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Report {
    pub summary: Map<String, Value>,
    /// (file name, CSV text)
    pub tables: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: impl ToString) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.to_string() });
    }

    fn put(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }

    fn rows(&mut self, file: &str, rows: &[ReportRow]) -> Result<(), String> {
        self.tables.push((file.into(), renorm::rows_to_csv(rows).map_err(|e| e.to_string())?));
        Ok(())
    }

    fn table(&mut self, file: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(&r).map_err(|e| e.to_string())?;
        }
        let bytes = w.into_inner().map_err(|e| e.to_string())?;
        self.tables.push((file.into(), String::from_utf8(bytes).map_err(|e| e.to_string())?));
        Ok(())
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn summary_json(&self, experiment: &str, seed: u64, trunc: Trunc) -> String {
        let checks: Vec<Value> = self.checks.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect();
        let v = json!({
            "experiment": experiment,
            "seed": seed,
            "truncation": [trunc.i_max, trunc.k_max],
            "results": Value::Object(self.summary.clone()),
            "checks": checks,
            "pass": self.checks.iter().all(|c| c.pass),
        });
        serde_json::to_string_pretty(&v).expect("json values serialize") + "\n"
    }
}

pub fn default_truncation(experiment: &str) -> Trunc {
    match experiment {
        "qme-flow" => Trunc::new(2, 4),
        "graph-tables" => Trunc::new(2, 4),
        "gaussian-lemma" => Trunc::new(2, 4),
        _ => Trunc::new(1, 4),
    }
}

pub fn run(experiment: &str, cfg: &Config, seed: u64, trunc: Trunc) -> Result<Report, String> {
    match experiment {
        "qme-flow" => qme_flow(cfg, seed, trunc),
        "counterterms-phi4-d4" => counterterms(cfg, trunc),
        "rg-roundtrip" => rg_roundtrip(cfg, seed, trunc),
        "obstruction" => obstruction(cfg, seed, trunc),
        "graph-tables" => graph_tables(cfg, trunc),
        "cs-propagator" => cs(cfg, seed),
        "gaussian-lemma" => gaussian(cfg, trunc),
        other => Err(format!("unknown experiment {other:?}")),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn seed_kind(name: &str) -> Result<SeedKind, String> {
    match name {
        "zero" => Ok(SeedKind::Zero),
        "kernel-cubic" => Ok(SeedKind::KernelCubic),
        "su2" => Ok(SeedKind::Su2),
        _ => Err(format!("unknown seed kind {name:?}")),
    }
}

fn scheme(cfg: &Config, key: &str, default: &str) -> Result<Scheme, String> {
    let name = cfg.raw(key).unwrap_or(default);
    Scheme::parse(name).ok_or_else(|| format!("unknown scheme {name:?}"))
}

fn e(err: impl ToString) -> String {
    err.to_string()
}

fn phi(k: u32) -> Mono {
    Mono { ev: k as u128, od: 0 }
}

fn scalar_action<C: Coeff>(couplings: &[(u32, u32, C)]) -> Functional<C> {
    let mut s = Functional::zero(1, 0);
    for (i, k, c) in couplings {
        s.add_term(*i, phi(*k), c.clone());
    }
    s
}

fn qme_flow(cfg: &Config, seed: u64, trunc: Trunc) -> Result<Report, String> {
    let kind = seed_kind(cfg.raw("kind").unwrap_or("kernel-cubic"))?;
    let half: usize = cfg.get("half", if kind == SeedKind::Su2 { 3 } else { 2 })?;
    let t1 = cfg.rational("t1", Q::new(1, 3))?;
    let t2 = cfg.scale("t2", Scale::finite(2, 1))?;
    let chi_terms: usize = cfg.get("chi_terms", 2)?;
    if kind == SeedKind::Su2 && half < 3 || kind == SeedKind::KernelCubic && half < 1 || half == 0 {
        return Err("space too small for the seed".into());
    }
    let mut r = rng(seed);
    let sd = seed_space(&mut r, half, kind);
    let sp = &sd.space;
    let k1 = sp.heat_kernel(&Scale::Finite(t1.clone())).map_err(e)?;
    let k2 = sp.heat_kernel(&t2).map_err(e)?;
    let chi = random_chi(&mut r, half, half, trunc, chi_terms).map_coeffs(ExpRat::from_q);
    let s = deform(sp.q(), &k1, &sd.classical.map_coeffs(ExpRat::from_q), &chi, trunc).map_err(e)?;
    let r1 = fun::qme_residual(sp.q(), &k1, &s, trunc).map_err(e)?;
    let p = sp.propagator(&t1, &t2).map_err(e)?;
    let g = fun::gamma(&p, &s, trunc).map_err(e)?;
    let r2 = fun::qme_residual(sp.q(), &k2, &g, trunc).map_err(e)?;
    let mut rep = Report::default();
    rep.put("dimension", json!(format!("{half}|{half}")));
    rep.put("t1", json!(t1.to_string()));
    rep.put("t2", json!(t2.to_string()));
    rep.put("action_terms", json!(s.n_terms()));
    rep.put("residual_terms_t1", json!(r1.n_terms()));
    rep.put("residual_terms_t2", json!(r2.n_terms()));
    rep.check("qme at t1", r1.is_zero(), format!("{} nonzero terms", r1.n_terms()));
    rep.check("qme at t2", r2.is_zero(), format!("{} nonzero terms", r2.n_terms()));
    rep.rows("action.csv", &renorm::functional_rows("S at t1", &s, 0.0))?;
    rep.rows("flowed.csv", &renorm::functional_rows("S at t2", &g, 0.0))?;
    Ok(rep)
}

fn toy_couplings(cfg: &Config) -> Result<Functional<f64>, String> {
    let c = cfg.couplings("action", vec![(0, 4, -0.3), (1, 2, 0.05)])?;
    if c.iter().any(|&(i, k, _)| i == 0 && k < 3) {
        return Err("classical part must start at cubic order".into());
    }
    Ok(scalar_action(&c))
}

fn toy_backend(cfg: &Config) -> Result<ToyScalar, String> {
    let mut b = ToyScalar::new(cfg.get("d", 4u32)?);
    b.fit_tol = cfg.get("fit_tol", b.fit_tol)?;
    Ok(b)
}

/// ln ε coefficient of the two-vertex bubble ∫∫_{(ε,T)²}(t₁+t₂)^{-2}, from
/// the antiderivative −ln u, times ¼(S″)² = 36g² and (4π)^{-2}.
fn bubble_oracle(g4: f64, t: f64) -> f64 {
    let g2 = [(0.0, 1u32, -1.0)];
    let g1 = oracle::differentiate_log_power_terms(&g2);
    let eps = 1e-10;
    let log_coeff = eps * (-2.0 * oracle::eval_log_power_terms(&g1, t + eps) + 2.0 * oracle::eval_log_power_terms(&g1, 2.0 * eps));
    36.0 * g4 * g4 * (4.0 * std::f64::consts::PI).powi(-2) * log_coeff
}

fn counterterms(cfg: &Config, trunc: Trunc) -> Result<Report, String> {
    let b = toy_backend(cfg)?;
    let s = toy_couplings(cfg)?;
    let t = cfg.rational("t", Q::one())?;
    let sch = scheme(cfg, "scheme", "ms")?;
    let ser = renorm::extract_counterterms(&s, &b, &sch, &t, trunc).map_err(e)?;
    let mut rep = Report::default();
    rep.put("backend", json!(b.name()));
    rep.put("scheme", json!(ser.scheme));
    rep.put("t", json!(t.to_string()));

    let reg = renorm::regularity(&s, &ser, &b, &t).map_err(e)?;
    let worst = reg.iter().map(|x| x.relative()).fold(0.0, f64::max);
    rep.put("max_singular_residue", json!(worst));
    rep.check("singular residues", worst <= 1e-8, format!("{worst:e}"));
    let tree = renorm::tree_level_singular_parts(&s, &b, &sch, &t, trunc).map_err(e)?;
    rep.check("tree-level counterterms vanish", tree.is_zero(), format!("{} terms", tree.n_terms()));
    let ts = [t.div(&Q::from(2)), t.clone(), t.mul(&Q::from(2))];
    let ind = renorm::check_t_independence(&s, &b, &sch, &ts, trunc).map_err(e)?;
    rep.put("t_spread", json!(ind.max_discrepancy));
    rep.check("scale independence", ind.passes(1e-6), format!("{:e}", ind.max_discrepancy));

    let classical: Vec<(u32, f64)> = s.terms().filter(|(i, _, _)| *i == 0).map(|(_, m, c)| (m.degree(), *c)).collect();
    if trunc.contains(1, 4) && b.d == 4 && classical.len() == 1 && classical[0].0 == 4 {
        let ours = ser.terms.coeff(1, &phi(4)).coeff(0, 1);
        let want = bubble_oracle(classical[0].1, t.to_f64());
        rep.put("bubble_log_coefficient", json!(ours));
        rep.put("bubble_log_oracle", json!(want));
        rep.check("bubble ln ε coefficient", (ours - want).abs() <= 1e-6 * want.abs(), format!("{ours:e} vs {want:e}"));
    }
    rep.rows("counterterms.csv", &renorm::counterterm_rows::<ToyScalar>(&ser))?;
    let gr = renorm::renormalized_gamma(&s, &ser, &b, &t, 1e-8).map_err(e)?;
    rep.rows("renormalized.csv", &renorm::functional_rows("renormalized", &gr, 0.0))?;

    // plot data: raw and subtracted coefficients against ε
    let raw = b.gamma_eps(&renorm::lift(&s), &t, trunc).map_err(e)?;
    let sub = b.gamma_eps(&renorm::lift(&s).sub(&ser.terms), &t, trunc).map_err(e)?;
    let grid = geometric_grid(cfg.get("eps_max", 0.1)?, 0.5, cfg.get("eps_points", 12usize)?);
    let mut rows = Vec::new();
    for (i, m, c) in raw.terms() {
        let cs = sub.coeff(i, m);
        for &x in &grid {
            rows.push(vec![i.to_string(), m.degree().to_string(), m.format(1, 0), format!("{x:e}"), format!("{:e}", c.eval(x)), format!("{:e}", cs.eval(x))]);
        }
    }
    rep.table("curves.csv", &["i", "k", "monomial", "eps", "raw", "subtracted"], rows)?;
    Ok(rep)
}

fn grid(cfg: &Config) -> Result<Vec<Q>, String> {
    cfg.list("grid", vec![Q::new(1, 4), Q::new(1, 2), Q::one(), Q::from(2)])
}

/// Forward, inverse and cross-scheme maps. `limit_tol` bounds surviving
/// singular parts, `tol` the reported discrepancies.
#[allow(clippy::too_many_arguments)]
fn roundtrip<B: Backend>(rep: &mut Report, b: &B, s: &Functional<B::C>, grid: &[Q], trunc: Trunc, a: &Scheme, other: &Scheme, limit_tol: f64, tol: f64) -> Result<(), String> {
    let sys = renorm::effective_system(s, b, a, grid, trunc, limit_tol).map_err(e)?;
    let rg = renorm::rg_discrepancies(&sys, b, trunc).map_err(e)?;
    let worst_rg = rg.iter().map(|x| x.2).fold(0.0, f64::max);
    rep.put("rg_labels", json!(b.rg_exact_labels(trunc).iter().map(|(i, k)| format!("{i},{k}")).collect::<Vec<_>>()));
    rep.put("rg_discrepancy", json!(worst_rg));
    rep.check("rg equation on the grid", worst_rg <= tol, format!("{worst_rg:e}"));
    let back = renorm::effective_to_local(&sys, b, a, trunc, tol).map_err(e)?;
    let d = renorm::relative_discrepancy::<B>(&back, &s.truncate(trunc));
    rep.put("recovery_discrepancy", json!(d));
    rep.check("local action recovered", d <= tol, format!("{d:e}"));
    let s2 = renorm::effective_to_local(&sys, b, other, trunc, tol).map_err(e)?;
    let again = renorm::effective_system(&s2, b, other, grid, trunc, limit_tol).map_err(e)?;
    let cross = sys.actions.iter().zip(&again.actions).map(|(x, y)| renorm::relative_discrepancy::<B>(x, y)).fold(0.0, f64::max);
    rep.put("cross_scheme_discrepancy", json!(cross));
    rep.put("scheme_shift", json!(renorm::relative_discrepancy::<B>(&s2, &s.truncate(trunc))));
    rep.check("cross-scheme effective system", cross <= tol, format!("{cross:e}"));
    let mut rows = Vec::new();
    for (t, f) in sys.grid.iter().zip(&sys.actions) {
        rows.extend(renorm::functional_rows(&format!("effective T={t}"), f, 0.0));
    }
    rep.rows("effective.csv", &rows)?;
    let mut rows = renorm::functional_rows("recovered", &back, d);
    rows.extend(renorm::functional_rows(&format!("recovered {}", other_name(other)), &s2, cross));
    rep.rows("recovered.csv", &rows)
}

fn other_name(s: &Scheme) -> String {
    use bvren::eps_algebra::RenormScheme;
    s.name()
}

fn rg_roundtrip(cfg: &Config, seed: u64, trunc: Trunc) -> Result<Report, String> {
    let grid = grid(cfg)?;
    let a = scheme(cfg, "scheme", "ms")?;
    let other = scheme(cfg, "scheme_b", "mu:1/2")?;
    let mut rep = Report::default();
    match cfg.raw("backend").unwrap_or("toy") {
        "toy" => {
            let b = toy_backend(cfg)?;
            let s = toy_couplings(cfg)?;
            rep.put("backend", json!(b.name()));
            roundtrip(&mut rep, &b, &s, &grid, trunc, &a, &other, 1e-8, cfg.get("tol", 1e-6)?)?;
        }
        "finite" => {
            let half: usize = cfg.get("half", 2)?;
            let mut r = rng(seed);
            let sp = random_space(&mut r, half).0;
            let labels: Vec<(u32, u32)> = trunc.labels().into_iter().filter(|&(i, k)| i > 0 || k >= 3).collect();
            let s = random::functional(&mut r, half, half, &labels, cfg.get("terms", 3)?).map_coeffs(ExpRat::from_q);
            let b = FiniteDim::new(sp);
            rep.put("backend", json!(b.name()));
            roundtrip(&mut rep, &b, &s, &grid, trunc, &a, &other, 0.0, 0.0)?;
        }
        other => return Err(format!("unknown backend {other:?}")),
    }
    Ok(rep)
}

fn obstruction(cfg: &Config, seed: u64, trunc: Trunc) -> Result<Report, String> {
    let t = cfg.scale("t", Scale::finite(1, 2))?;
    let mode = cfg.raw("action").unwrap_or("perturbed");
    let mut r = rng(seed);
    let (sp, s): (OddSymplecticSpace, Functional<ExpRat>) = match mode {
        "random" => {
            let half: usize = cfg.get("half", 2)?;
            let sp = random_space(&mut r, half).0;
            let labels: Vec<(u32, u32)> = trunc.labels().into_iter().filter(|&(i, k)| i > 0 || k >= 3).collect();
            let s = random::functional(&mut r, half, half, &labels, cfg.get("terms", 3)?).map_coeffs(ExpRat::from_q);
            (sp, s)
        }
        "solution" | "perturbed" => {
            let sd = seed_space(&mut r, 3, SeedKind::Su2);
            let k0 = sd.space.k0().map(ExpRat::from_q);
            let chi = random_chi(&mut r, 3, 3, trunc, 2).map_coeffs(ExpRat::from_q);
            let mut s = deform(sd.space.q(), &k0, &sd.classical.map_coeffs(ExpRat::from_q), &chi, trunc).map_err(e)?;
            if mode == "perturbed" {
                // ħx³ along a Q-closed coordinate
                let x = fun::change_basis(&Functional::<Q>::var(3, 3, sd.layout.even_idx[0][0]), &sd.g).map_coeffs(ExpRat::from_q);
                s.add_assign(&x.mul(&x).mul(&x).shift_hbar(1));
            }
            (sd.space, s)
        }
        other => return Err(format!("unknown action {other:?}")),
    };
    let o = renorm::obstruction_plain(&sp, &s, &t, trunc).map_err(e)?;
    let p = sp.propagator(&Q::zero(), &t).map_err(e)?;
    let g = fun::gamma(&p, &s, trunc).map_err(e)?;
    let res = fun::qme_residual(sp.q(), &sp.heat_kernel(&t).map_err(e)?, &g, trunc).map_err(e)?;
    let first = o.iter().find(|(_, f)| !f.is_zero()).map(|(l, f)| (*l, f.clone()));
    let first_res = trunc.labels().into_iter().find(|&(i, k)| !res.component(i, k).is_zero());
    let mut rep = Report::default();
    rep.put("action", json!(mode));
    rep.put("t", json!(t.to_string()));
    rep.put("first_obstruction", json!(first.as_ref().map(|(l, _)| [l.0, l.1])));
    rep.check("obstruction vanishes iff residual vanishes", first.is_none() == res.is_zero() && first.as_ref().map(|x| x.0) == first_res, format!("{:?} vs {:?}", first.as_ref().map(|x| x.0), first_res));
    if let Some((l, f)) = &first {
        rep.check("first obstruction equals residual", res.component(l.0, l.1) == *f, format!("{l:?}"));
        rep.check("first obstruction is closed", f.apply_q(sp.q()).is_zero(), format!("{l:?}"));
    }
    if trunc.contains(1, 3) {
        let x = random::functional(&mut r, sp.n_even(), sp.n_odd(), &[(1, 3)], 2).map_coeffs(ExpRat::from_q);
        let shifted = renorm::obstruction_plain(&sp, &s.add(&x), &t, trunc).map_err(e)?;
        let qx = x.apply_q(sp.q()).component(1, 3);
        rep.check("shift law at (1,3)", shifted[&(1, 3)] == o[&(1, 3)].add(&qx), "O(S + X) = O(S) + QX");
    }
    let mut rows = Vec::new();
    for ((i, k), f) in &o {
        rows.extend(renorm::functional_rows(&format!("O({i},{k})"), f, 0.0));
    }
    rep.rows("obstructions.csv", &rows)?;
    Ok(rep)
}

fn poly_text(p: &GraphPolynomial) -> String {
    p.terms
        .iter()
        .map(|(e, c)| {
            let m: Vec<String> = e.iter().enumerate().filter(|(_, &x)| x > 0).map(|(j, &x)| if x == 1 { format!("t{j}") } else { format!("t{j}^{x}") }).collect();
            let m = if m.is_empty() { "1".to_string() } else { m.join("*") };
            if *c == 1 { m } else { format!("{c}*{m}") }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn graph_tables(cfg: &Config, trunc: Trunc) -> Result<Report, String> {
    let menu = cfg.labels("menu", vec![(0, 3), (0, 4)])?;
    let mut rows = Vec::new();
    let mut counts = BTreeMap::new();
    let mut mismatched = Vec::new();
    for (i, k) in trunc.labels() {
        let gs = enumerate_graphs(i, k, &menu).map_err(e)?;
        counts.insert(format!("{i},{k}"), gs.len());
        for g in &gs {
            let p = graph_polynomial(g).map_err(e)?;
            if p.terms != oracle::spanning_tree_polynomial(g.n_vertices(), &g.edges) {
                mismatched.push(g.to_text());
            }
            rows.push(vec![
                i.to_string(),
                k.to_string(),
                g.to_text(),
                g.n_vertices().to_string(),
                g.n_edges().to_string(),
                g.loops().to_string(),
                g.automorphisms().to_string(),
                poly_text(&p),
            ]);
        }
    }
    let mut rep = Report::default();
    rep.put("menu", json!(menu.iter().map(|(i, k)| format!("{i}:{k}")).collect::<Vec<_>>()));
    rep.put("graphs_per_label", json!(counts));
    rep.check("graph polynomial equals spanning-tree sum", mismatched.is_empty(), format!("{} mismatches", mismatched.len()));
    rep.table("graphs.csv", &["i", "k", "graph", "vertices", "edges", "loops", "automorphisms", "graph_polynomial"], rows)?;
    Ok(rep)
}

fn cs(cfg: &Config, seed: u64) -> Result<Report, String> {
    let ns: Vec<u32> = cfg.list("n", vec![3])?;
    let samples: usize = cfg.get("samples", 10)?;
    let tol: f64 = cfg.get("tol", 1e-8)?;
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &n in &ns {
        if !(2..=8).contains(&n) {
            return Err(format!("n = {n} out of range"));
        }
        for j in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let eps = if j == 0 { 0.0 } else { r.gen_range(0.0..0.2) };
            let t = r.gen_range(0.5..3.0);
            let ours = cs_propagator(n, &x, &y, eps, t).map_err(e)?;
            for c in 0..n as usize {
                let f = |s: f64| if s <= 0.0 { 0.0 } else { cs_heat_integrand(n, &x, &y, s)[c] };
                let q = oracle::quad_1d(&f, eps, t, 1e-13).map_err(|err| format!("{err:?}"))?.value;
                let d = (ours[c] - q).abs() / (1.0 + q.abs());
                worst = worst.max(d);
                let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.12}")).collect::<Vec<_>>().join(" ");
                rows.push(vec![n.to_string(), j.to_string(), fmt(&x), fmt(&y), format!("{eps:.12}"), format!("{t:.12}"), c.to_string(), format!("{:.15e}", ours[c]), format!("{q:.15e}"), format!("{d:.3e}")]);
            }
        }
    }
    let mut rep = Report::default();
    rep.put("max_discrepancy", json!(worst));
    rep.check("closed form matches quadrature", worst <= tol, format!("{worst:e}"));
    rep.table("cs_propagator.csv", &["n", "sample", "x", "y", "eps", "T", "component", "closed_form", "quadrature", "discrepancy"], rows)?;
    Ok(rep)
}

fn gaussian(cfg: &Config, trunc: Trunc) -> Result<Report, String> {
    let lambda = cfg.rational("lambda", Q::one())?;
    let w = cfg.rational("w", Q::from(-2))?;
    let couplings: Vec<(u32, u32, Q)> = cfg.couplings("action", vec![(0, 3, Q::new(1, 3)), (0, 4, Q::new(-1, 2)), (1, 1, Q::new(2, 3)), (1, 2, Q::new(-1, 4)), (2, 0, Q::new(1, 7))])?;
    let tol: f64 = cfg.get("tol", 1e-6)?;
    let (sp, _) = assemble(&[Block::Acyclic1 { lambda, w }]);
    let p = sp.propagator(&Q::zero(), &Scale::Infinite).map_err(e)?.map(|c| c.as_rational().expect("rational at T = ∞"));
    let p00 = p.tensor[0][0].clone();
    if p00.signum() <= 0 {
        return Err("the Gaussian weight must be positive; choose w < 0".into());
    }
    let mut s = Functional::<Q>::zero(1, 1);
    for (i, k, c) in &couplings {
        s.add_term(*i, phi(*k), c.clone());
    }
    let g = fun::gamma(&p, &s, trunc).map_err(e)?;
    let input = oracle::GaussianLemmaInput {
        m2: p00.inv().expect("nonzero").to_f64(),
        action: couplings.iter().map(|(i, k, c)| (*i, *k, c.to_f64())).collect(),
        max_hbar: trunc.i_max,
        max_degree: trunc.k_max,
    };
    let expected = oracle::gaussian_lemma_expansion(&input).map_err(|err| format!("{err:?}"))?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, k, c) in expected {
        if !trunc.contains(i, k) {
            continue;
        }
        let ours = g.coeff(i, &phi(k));
        let d = (ours.to_f64() - c).abs();
        worst = worst.max(d);
        rows.push(vec![i.to_string(), k.to_string(), ours.to_string(), format!("{:.15e}", ours.to_f64()), format!("{c:.15e}"), format!("{d:.3e}")]);
    }
    let mut rep = Report::default();
    rep.put("propagator", json!(p00.to_string()));
    rep.put("max_discrepancy", json!(worst));
    rep.check("operator formula matches Gaussian integral", worst <= tol, format!("{worst:e}"));
    rep.table("gaussian_lemma.csv", &["i", "k", "operator_exact", "operator", "quadrature", "discrepancy"], rows)?;
    Ok(rep)
}
