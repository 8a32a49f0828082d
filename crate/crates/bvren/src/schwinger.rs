//! Feynman graphs: enumeration with symmetry factors, graph weights for
//! finite-dimensional models, graph polynomials, Schwinger-parameter
//! integrals for a scalar toy theory on ℝ^d, and the ℝ^n Chern–Simons
//! propagator.

use crate::coeff::{Coeff, EpsExpansion, Q};
use crate::eps_algebra::{self, FitOptions};
use crate::functionals::{Functional, Mono, Trunc};
use crate::quad;
use crate::superspace::Kernel;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("vertex {0} has {1} incident half-edges but valence {2}")]
    Arity(usize, u32, u32),
    #[error("tree-level vertex must be at least trivalent (got valence {0})")]
    NotTrivalent(u32),
    #[error("vertex functional for vertex {0} is not homogeneous of degree {1}")]
    VertexTensor(usize, u32),
    #[error("dimension must be positive")]
    BadDimension,
    #[error("coincident points: x = y")]
    Coincident,
    #[error("scales must satisfy 0 <= eps < T")]
    BadScales,
    #[error("toy actions live on the 1|0 space")]
    NotScalar,
    #[error("too many variables for the multi-copy evaluation")]
    TooLarge,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("quadrature: {0}")]
    Quad(#[from] quad::QuadError),
    #[error("fit: {0}")]
    Fit(#[from] eps_algebra::FitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex {
    /// Power of ħ carried by the vertex.
    pub hbar: u32,
    /// Number of half-edges: internal ones plus legs.
    pub valence: u32,
}

/// A connected multigraph with self-loops. Legs are the half-edges of a
/// vertex not used by edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeynmanGraph {
    pub vertices: Vec<Vertex>,
    /// Edges (u, v) with u ≤ v, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl FeynmanGraph {
    pub fn new(vertices: Vec<Vertex>, mut edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort();
        let g = FeynmanGraph { vertices, edges };
        for v in 0..g.n_vertices() {
            if g.degree(v) > g.vertices[v].valence {
                return Err(GraphError::Arity(v, g.degree(v), g.vertices[v].valence));
            }
        }
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// First Betti number.
    pub fn loops(&self) -> u32 {
        (self.n_edges() + 1 - self.n_vertices()) as u32
    }

    pub fn genus(&self) -> u32 {
        self.loops() + self.vertices.iter().map(|v| v.hbar).sum::<u32>()
    }

    pub fn degree(&self, v: usize) -> u32 {
        self.edges.iter().map(|&(a, b)| (a == v) as u32 + (b == v) as u32).sum()
    }

    pub fn legs(&self, v: usize) -> u32 {
        self.vertices[v].valence - self.degree(v)
    }

    pub fn n_legs(&self) -> u32 {
        (0..self.n_vertices()).map(|v| self.legs(v)).sum()
    }

    pub fn self_loops(&self, v: usize) -> u32 {
        self.edges.iter().filter(|&&(a, b)| a == v && b == v).count() as u32
    }

    pub fn multiplicity(&self, u: usize, v: usize) -> u32 {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        self.edges.iter().filter(|&&e| e == (a, b)).count() as u32
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_vertices();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Edges whose removal disconnects the graph.
    pub fn bridges(&self) -> Vec<usize> {
        (0..self.n_edges())
            .filter(|&e| {
                let (a, b) = self.edges[e];
                if a == b {
                    return false;
                }
                let rest: Vec<(usize, usize)> =
                    self.edges.iter().enumerate().filter(|&(j, _)| j != e).map(|(_, &x)| x).collect();
                !FeynmanGraph { vertices: self.vertices.clone(), edges: rest }.is_connected()
            })
            .collect()
    }

    fn mult_matrix(&self) -> Vec<Vec<u32>> {
        let n = self.n_vertices();
        let mut m = vec![vec![0u32; n]; n];
        for &(a, b) in &self.edges {
            m[a][b] += 1;
            if a != b {
                m[b][a] += 1;
            }
        }
        m
    }

    /// Canonical code and the number of vertex permutations preserving the graph.
    fn canonical(&self) -> (Vec<u32>, u64) {
        let n = self.n_vertices();
        let m = self.mult_matrix();
        let base: Vec<(u32, u32, u32)> = (0..n).map(|v| (self.vertices[v].hbar, self.vertices[v].valence, m[v][v])).collect();
        // colour refinement
        let mut color: Vec<usize> = rank(&base);
        loop {
            let sig: Vec<(usize, Vec<(usize, u32)>)> = (0..n)
                .map(|v| {
                    let mut nb: Vec<(usize, u32)> = (0..n).filter(|&u| u != v && m[u][v] > 0).map(|u| (color[u], m[u][v])).collect();
                    nb.sort();
                    (color[v], nb)
                })
                .collect();
            let next = rank(&sig);
            let stable = next.iter().collect::<BTreeSet<_>>().len() == color.iter().collect::<BTreeSet<_>>().len();
            color = next;
            if stable {
                break;
            }
        }
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            cells.entry(color[v]).or_default().push(v);
        }
        let cells: Vec<Vec<usize>> = cells.into_values().collect();
        let mut best: Option<Vec<u32>> = None;
        let mut count = 0u64;
        let mut order = Vec::with_capacity(n);
        permute_cells(&cells, 0, &mut order, &mut |ord: &[usize]| {
            let mut code = Vec::with_capacity(n * 3 + n * n);
            for &v in ord {
                code.extend([base[v].0, base[v].1, base[v].2]);
            }
            for p in 0..n {
                for q in p + 1..n {
                    code.push(m[ord[p]][ord[q]]);
                }
            }
            match &best {
                Some(b) if code > *b => {}
                Some(b) if code == *b => count += 1,
                _ => {
                    best = Some(code);
                    count = 1;
                }
            }
        });
        (best.expect("nonempty graph"), count)
    }

    /// Order of the group of vertex permutations preserving labels and edge multiplicities.
    pub fn vertex_automorphisms(&self) -> u64 {
        self.canonical().1
    }

    /// Automorphisms of the graph acting on vertices and internal half-edges
    /// (legs held fixed as a set at each vertex): |Aut_V| Π m_uv! Π 2^ℓ ℓ!.
    pub fn automorphisms(&self) -> u64 {
        let n = self.n_vertices();
        let m = self.mult_matrix();
        let mut a = self.vertex_automorphisms();
        for u in 0..n {
            a *= factorial(m[u][u]) * (1u64 << m[u][u]);
            for v in u + 1..n {
                a *= factorial(m[u][v]);
            }
        }
        a
    }

    /// The graph relabelled into canonical vertex order.
    pub fn canonical_form(&self) -> FeynmanGraph {
        FeynmanGraph::from_code(&self.canonical().0, self.n_vertices())
    }

    fn from_code(code: &[u32], n: usize) -> FeynmanGraph {
        let vertices: Vec<Vertex> = (0..n).map(|p| Vertex { hbar: code[3 * p], valence: code[3 * p + 1] }).collect();
        let mut edges = Vec::new();
        for p in 0..n {
            for _ in 0..code[3 * p + 2] {
                edges.push((p, p));
            }
        }
        let mut idx = 3 * n;
        for p in 0..n {
            for q in p + 1..n {
                for _ in 0..code[idx] {
                    edges.push((p, q));
                }
                idx += 1;
            }
        }
        edges.sort();
        FeynmanGraph { vertices, edges }
    }

    /// "v i deg; e a b; l a" records separated by "; ".
    pub fn to_text(&self) -> String {
        let mut parts = Vec::new();
        for v in &self.vertices {
            parts.push(format!("v {} {}", v.hbar, v.valence));
        }
        for &(a, b) in &self.edges {
            parts.push(format!("e {a} {b}"));
        }
        for v in 0..self.n_vertices() {
            for _ in 0..self.legs(v) {
                parts.push(format!("l {v}"));
            }
        }
        parts.join("; ")
    }

    pub fn parse(s: &str) -> Result<Self, GraphError> {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut legs: Vec<usize> = Vec::new();
        let bad = |r: &str| GraphError::Parse(format!("bad record '{r}'"));
        for rec in s.split([';', '\n']).map(|r| r.trim()).filter(|r| !r.is_empty()) {
            let f: Vec<&str> = rec.split_whitespace().collect();
            let num = |i: usize| f.get(i).and_then(|x| x.parse::<usize>().ok()).ok_or_else(|| bad(rec));
            match f[0] {
                "v" => vertices.push(Vertex { hbar: num(1)? as u32, valence: num(2)? as u32 }),
                "e" => edges.push((num(1)?, num(2)?)),
                "l" => legs.push(num(1)?),
                _ => return Err(bad(rec)),
            }
        }
        let n = vertices.len();
        if edges.iter().any(|&(a, b)| a >= n || b >= n) || legs.iter().any(|&a| a >= n) {
            return Err(GraphError::Parse("vertex index out of range".into()));
        }
        let g = FeynmanGraph::new(vertices, edges)?;
        for v in 0..n {
            let l = legs.iter().filter(|&&a| a == v).count() as u32;
            if l != g.legs(v) {
                return Err(GraphError::Arity(v, g.degree(v) + l, g.vertices[v].valence));
            }
        }
        Ok(g)
    }
}

fn rank<T: Ord + Clone>(xs: &[T]) -> Vec<usize> {
    let sorted: BTreeSet<T> = xs.iter().cloned().collect();
    let idx: BTreeMap<T, usize> = sorted.into_iter().enumerate().map(|(i, x)| (x, i)).collect();
    xs.iter().map(|x| idx[x]).collect()
}

fn permute_cells(cells: &[Vec<usize>], c: usize, order: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if c == cells.len() {
        visit(order);
        return;
    }
    let mut cell = cells[c].clone();
    let len = cell.len();
    heap_permutations(&mut cell, len, &mut |perm: &[usize]| {
        let l = order.len();
        order.extend_from_slice(perm);
        permute_cells(cells, c + 1, order, visit);
        order.truncate(l);
    });
}

fn heap_permutations(a: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k <= 1 {
        visit(a);
        return;
    }
    for i in 0..k - 1 {
        heap_permutations(a, k - 1, visit);
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    heap_permutations(a, k - 1, visit);
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

// ---------------------------------------------------------------------------
// Enumeration.

/// Every connected graph with vertices drawn from `menu` (pairs of ħ-degree
/// and valence) whose (genus, legs) lies in the truncation, up to isomorphism.
pub fn enumerate_up_to(trunc: Trunc, menu: &[(u32, u32)]) -> Result<Vec<FeynmanGraph>, GraphError> {
    for &(h, k) in menu {
        if h == 0 && k < 3 {
            return Err(GraphError::NotTrivalent(k));
        }
    }
    let menu: Vec<Vertex> = menu.iter().map(|&(h, k)| Vertex { hbar: h, valence: k }).collect::<BTreeSet<_>>().into_iter().collect();
    // grow one vertex at a time, keeping one representative per isomorphism
    // class; every connected graph has a vertex order with connected prefixes
    let mut out = Vec::new();
    let mut level: BTreeMap<Vec<u32>, FeynmanGraph> = BTreeMap::new();
    extend(&FeynmanGraph { vertices: vec![], edges: vec![] }, trunc, &menu, &mut level);
    while !level.is_empty() {
        let mut next = BTreeMap::new();
        for g in level.values() {
            extend(g, trunc, &menu, &mut next);
        }
        out.extend(level.into_values().filter(|g| trunc.contains(g.genus(), g.n_legs())));
        level = next;
    }
    out.sort_by_cached_key(|g| (g.genus(), g.n_legs(), g.n_vertices(), g.canonical().0));
    Ok(out)
}

/// Graphs of genus `i` with `k` legs.
pub fn enumerate_graphs(i: u32, k: u32, menu: &[(u32, u32)]) -> Result<Vec<FeynmanGraph>, GraphError> {
    let all = enumerate_up_to(Trunc::new(i, k), menu)?;
    Ok(all.into_iter().filter(|g| g.genus() == i && g.n_legs() == k).collect())
}

fn weight_of(verts: &[Vertex], edges: &[(usize, usize)]) -> (u32, u32) {
    let genus = (edges.len() + 1 - verts.len()) as u32 + verts.iter().map(|v| v.hbar).sum::<u32>();
    let legs = verts.iter().map(|v| v.valence).sum::<u32>() - 2 * edges.len() as u32;
    (genus, legs)
}

fn extend(g: &FeynmanGraph, trunc: Trunc, menu: &[Vertex], into: &mut BTreeMap<Vec<u32>, FeynmanGraph>) {
    let n = g.n_vertices();
    let free: Vec<u32> = (0..n).map(|u| g.legs(u)).collect();
    for &nv in menu {
        let mut mult = vec![0u32; n];
        choose_mults(&free, 0, nv.valence, &mut mult, &mut |mult: &[u32]| {
            let used: u32 = mult.iter().sum();
            if n > 0 && used == 0 {
                return;
            }
            for loops in 0..=(nv.valence - used) / 2 {
                let mut verts = g.vertices.clone();
                verts.push(nv);
                let mut edges = g.edges.clone();
                for (u, &m) in mult.iter().enumerate() {
                    for _ in 0..m {
                        edges.push((u, n));
                    }
                }
                for _ in 0..loops {
                    edges.push((n, n));
                }
                let (gen, k) = weight_of(&verts, &edges);
                if gen <= trunc.i_max && 2 * gen + k <= trunc.weight() {
                    let h = FeynmanGraph { vertices: verts, edges: sorted(&edges) };
                    let (code, _) = h.canonical();
                    if !into.contains_key(&code) {
                        let c = FeynmanGraph::from_code(&code, n + 1);
                        into.insert(code, c);
                    }
                }
            }
        });
    }
}

fn sorted(e: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut v = e.to_vec();
    v.sort();
    v
}

fn choose_mults(free: &[u32], i: usize, budget: u32, mult: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
    if i == free.len() {
        visit(mult);
        return;
    }
    for m in 0..=free[i].min(budget) {
        mult[i] = m;
        choose_mults(free, i + 1, budget - m, mult, visit);
    }
    mult[i] = 0;
}

// ---------------------------------------------------------------------------
// Weights on finite-dimensional spaces.

/// Layout of the multi-copy space: slot 0 holds the external variables,
/// slots 1.. hold per-vertex copies.
struct Slots {
    ne: usize,
    no: usize,
    n_slots: usize,
}

impl Slots {
    fn big_ne(&self) -> usize {
        self.ne * self.n_slots
    }
    fn big_no(&self) -> usize {
        self.no * self.n_slots
    }
    /// Variable map from the small space into slot s.
    fn map(&self, s: usize) -> Vec<usize> {
        let mut m: Vec<usize> = (0..self.ne).map(|a| s * self.ne + a).collect();
        m.extend((0..self.no).map(|j| self.big_ne() + s * self.no + j));
        m
    }
    /// Identity on all slots except s, which is folded onto slot 0.
    fn fold(&self, s: usize) -> Vec<usize> {
        let mut m: Vec<usize> = (0..self.big_ne()).map(|a| if a / self.ne == s { a % self.ne } else { a }).collect();
        m.extend((0..self.big_no()).map(|j| {
            if j / self.no == s {
                self.big_ne() + j % self.no
            } else {
                self.big_ne() + j
            }
        }));
        m
    }
}

/// Σ P^{ab} ∂_{v,b} ∂_{u,a} f (one edge between slots u ≠ v), or
/// ½ Σ P^{ab} ∂_{u,b} ∂_{u,a} f (a self-loop at u).
fn contract<C: Coeff>(f: &Functional<C>, p: &Kernel<C>, mu: &[usize], mv: &[usize], same: bool) -> Functional<C> {
    let n = p.dim();
    let half = Q::new(1, 2);
    let mut out = Functional::zero(f.n_even(), f.n_odd());
    for a in 0..n {
        let da = f.deriv(mu[a]);
        if da.is_zero() {
            continue;
        }
        for b in 0..n {
            let c = &p.tensor[a][b];
            if c.is_zero() {
                continue;
            }
            let t = da.deriv(mv[b]);
            if t.is_zero() {
                continue;
            }
            let c = if same { c.scale_q(&half) } else { c.clone() };
            out.add_assign(&t.scale(&c));
        }
    }
    out
}

/// w(γ)/(Π m_uv! Π ℓ_v!) times ħ^{loops}: the vertex functionals are
/// multiplied on separate copies of the space, contracted with P along the
/// edges, and restricted to the diagonal.
///
/// `vertex_fns[v]` must be homogeneous of degree `valence(v)`; its ħ-order is
/// carried along.
pub fn graph_weight<C: Coeff>(g: &FeynmanGraph, p: &Kernel<C>, vertex_fns: &[Functional<C>]) -> Result<Functional<C>, GraphError> {
    let n = g.n_vertices();
    let (ne, no) = (vertex_fns[0].n_even(), vertex_fns[0].n_odd());
    for (v, f) in vertex_fns.iter().enumerate() {
        let k = g.vertices[v].valence;
        if f.labels().iter().any(|&(_, kk)| kk != k) {
            return Err(GraphError::VertexTensor(v, k));
        }
    }
    // BFS order keeps the frontier small
    let mut order = vec![0usize];
    let mut placed = vec![false; n];
    placed[0] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for u in 0..n {
            if !placed[u] && g.multiplicity(u, v) > 0 {
                placed[u] = true;
                order.push(u);
            }
        }
    }
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    let last_nb: Vec<usize> = (0..n)
        .map(|v| (0..n).filter(|&u| g.multiplicity(u, v) > 0).map(|u| pos[u]).max().unwrap_or(pos[v]).max(pos[v]))
        .collect();
    // frontier width
    let mut width = 0;
    for step in 0..n {
        let active = (0..n).filter(|&v| pos[v] <= step && last_nb[v] >= step).count();
        width = width.max(active);
    }
    let slots = Slots { ne, no, n_slots: width + 1 };
    if slots.big_ne() > crate::functionals::MAX_EVEN_VARS || slots.big_no() > crate::functionals::MAX_ODD_VARS {
        return Err(GraphError::TooLarge);
    }
    let mut slot_of = vec![usize::MAX; n];
    let mut free_slots: Vec<usize> = (1..=width).rev().collect();
    let mut acc = Functional::constant(slots.big_ne(), slots.big_no(), 0, C::one());
    for step in 0..n {
        let v = order[step];
        let s = free_slots.pop().expect("frontier bound");
        slot_of[v] = s;
        let mv = slots.map(s);
        acc = acc.mul(&vertex_fns[v].substitute_vars(&mv, slots.big_ne(), slots.big_no()));
        for &u in &order[..step] {
            let m = g.multiplicity(u, v);
            if m == 0 {
                continue;
            }
            let mu = slots.map(slot_of[u]);
            for _ in 0..m {
                acc = contract(&acc, p, &mu, &mv, false);
            }
            acc = acc.scale_q(&Q::new(1, factorial(m) as i64));
        }
        let l = g.self_loops(v);
        for _ in 0..l {
            acc = contract(&acc, p, &mv, &mv, true);
        }
        acc = acc.scale_q(&Q::new(1, factorial(l) as i64));
        for &w in &order[..=step] {
            if slot_of[w] != usize::MAX && last_nb[w] <= step {
                acc = acc.substitute_vars(&slots.fold(slot_of[w]), slots.big_ne(), slots.big_no());
                free_slots.push(slot_of[w]);
                slot_of[w] = usize::MAX;
            }
        }
        if acc.is_zero() {
            return Ok(Functional::zero(ne, no));
        }
    }
    let back: Vec<usize> = {
        let mut m: Vec<usize> = (0..slots.big_ne()).map(|a| a.min(ne.saturating_sub(1))).collect();
        m.extend((0..slots.big_no()).map(|j| ne + j.min(no.saturating_sub(1))));
        m
    };
    // only slot 0 variables remain
    let out = acc.substitute_vars(&back, ne, no);
    Ok(out.shift_hbar(g.loops()))
}

/// Γ(P,S) as a sum over graphs: Σ_γ w(γ)/|Aut γ|.
pub fn graph_sum<C: Coeff>(p: &Kernel<C>, s: &Functional<C>, trunc: Trunc) -> Result<Functional<C>, GraphError> {
    let graphs = enumerate_up_to(trunc, &s.truncate(trunc).labels())?;
    graph_sum_over(&graphs, p, s, trunc)
}

/// [`graph_sum`] over a precomputed graph list, which must contain every
/// graph built from the labels of `s` within `trunc`. Graphs using labels
/// absent from `s` contribute nothing.
pub fn graph_sum_over<C: Coeff>(graphs: &[FeynmanGraph], p: &Kernel<C>, s: &Functional<C>, trunc: Trunc) -> Result<Functional<C>, GraphError> {
    let s = s.truncate(trunc);
    for (i, k) in s.labels() {
        if i == 0 && k < 3 {
            return Err(GraphError::NotTrivalent(k));
        }
    }
    let mut out = Functional::zero(s.n_even(), s.n_odd());
    for g in graphs {
        if !trunc.contains(g.genus(), g.n_legs()) {
            continue;
        }
        let fns: Vec<Functional<C>> = g.vertices.iter().map(|v| s.component(v.hbar, v.valence)).collect();
        if fns.iter().any(|f| f.is_zero()) {
            continue;
        }
        let w = graph_weight(g, p, &fns)?;
        out.add_assign(&w.scale_q(&Q::new(1, g.vertex_automorphisms() as i64)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Graph polynomial.

/// Polynomial in the edge variables t_e, as exponent vectors with coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphPolynomial {
    pub n_edges: usize,
    pub terms: BTreeMap<Vec<u32>, u64>,
}

impl GraphPolynomial {
    pub fn eval(&self, t: &[f64]) -> f64 {
        self.terms.iter().map(|(e, &c)| c as f64 * e.iter().zip(t).map(|(&k, &x)| x.powi(k as i32)).product::<f64>()).sum()
    }
}

type Laurent = BTreeMap<Vec<i32>, i64>;

fn lmul(a: &Laurent, b: &Laurent) -> Laurent {
    let mut r = Laurent::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<i32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *r.entry(e).or_insert(0) += ca * cb;
        }
    }
    r.retain(|_, c| *c != 0);
    r
}

fn ladd(a: &mut Laurent, b: &Laurent, sign: i64) {
    for (e, c) in b {
        *a.entry(e.clone()).or_insert(0) += sign * c;
    }
    a.retain(|_, c| *c != 0);
}

/// P_γ = det(L̃(1/t)) Π t_e with L̃ the Laplacian weighted by 1/t_e with one
/// vertex removed.
pub fn graph_polynomial(g: &FeynmanGraph) -> Result<GraphPolynomial, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let ne = g.n_edges();
    let nv = g.n_vertices();
    let r = nv - 1;
    let mut lap: Vec<Vec<Laurent>> = vec![vec![Laurent::new(); r]; r];
    for (e, &(a, b)) in g.edges.iter().enumerate() {
        if a == b {
            continue;
        }
        let mut inv = vec![0i32; ne];
        inv[e] = -1;
        let mono: Laurent = [(inv, 1)].into_iter().collect();
        for (x, y) in [(a, b), (b, a)] {
            if x >= 1 {
                ladd(&mut lap[x - 1][x - 1], &mono, 1);
                if y >= 1 {
                    ladd(&mut lap[x - 1][y - 1], &mono, -1);
                }
            }
        }
    }
    let mut det = Laurent::new();
    if r == 0 {
        det.insert(vec![0; ne], 1);
    } else {
        let mut perm: Vec<usize> = (0..r).collect();
        let mut all = Vec::new();
        heap_permutations(&mut perm, r, &mut |p: &[usize]| all.push(p.to_vec()));
        for p in all {
            let mut inversions = 0;
            for i in 0..r {
                for j in i + 1..r {
                    if p[i] > p[j] {
                        inversions += 1;
                    }
                }
            }
            let mut term: Laurent = [(vec![0; ne], 1)].into_iter().collect();
            for (i, &pi) in p.iter().enumerate() {
                term = lmul(&term, &lap[i][pi]);
                if term.is_empty() {
                    break;
                }
            }
            ladd(&mut det, &term, if inversions % 2 == 0 { 1 } else { -1 });
        }
    }
    let mut terms = BTreeMap::new();
    for (e, c) in det {
        let ex: Vec<u32> = e.iter().map(|&x| (x + 1) as u32).collect();
        debug_assert!(c > 0);
        terms.insert(ex, c as u64);
    }
    Ok(GraphPolynomial { n_edges: ne, terms })
}

// ---------------------------------------------------------------------------
// Scalar toy theory on ℝ^d with zero-momentum legs.

/// f_γ(t) = (4π)^{−dL/2} P_γ(t)^{−d/2}; the couplings and symmetry factor
/// are applied separately.
#[derive(Debug, Clone)]
pub struct ToyIntegrand {
    pub d: u32,
    pub loops: u32,
    pub poly: GraphPolynomial,
}

impl ToyIntegrand {
    pub fn normalization(&self) -> f64 {
        (4.0 * std::f64::consts::PI).powf(-(self.d as f64) * self.loops as f64 / 2.0)
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        self.normalization() * self.poly.eval(t).powf(-(self.d as f64) / 2.0)
    }
}

pub fn toy_weight_integrand(g: &FeynmanGraph, d: u32) -> Result<ToyIntegrand, GraphError> {
    if d == 0 {
        return Err(GraphError::BadDimension);
    }
    Ok(ToyIntegrand { d, loops: g.loops(), poly: graph_polynomial(g)? })
}

#[derive(Debug, Clone)]
pub struct ToyOptions {
    /// Order of the ε-Taylor expansion of analytic pieces.
    pub taylor_order: u32,
    /// Fit grid for graphs with two or more loops.
    pub eps_max: f64,
    pub grid_points: usize,
    pub quad_tol: f64,
}

impl Default for ToyOptions {
    fn default() -> Self {
        ToyOptions { taylor_order: 8, eps_max: 1.0 / 16.0, grid_points: 12, quad_tol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct ToyWeight {
    pub expansion: EpsExpansion<f64>,
    /// Fit residual; zero for closed-form evaluations.
    pub residual: f64,
    pub exact: bool,
}

type Terms = Vec<(i32, u32, f64)>;

fn terms_derivative(t: &Terms) -> Terms {
    let mut out = Vec::new();
    for &(q2, m, c) in t {
        let q = q2 as f64 / 2.0;
        if q != 0.0 {
            out.push((q2 - 2, m, c * q));
        }
        if m > 0 {
            out.push((q2 - 2, m - 1, c * m as f64));
        }
    }
    out
}

fn terms_eval(t: &Terms, u: f64) -> f64 {
    t.iter().map(|&(q2, m, c)| c * u.powf(q2 as f64 / 2.0) * u.ln().powi(m as i32)).sum()
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// ∫_{(ε,T)^n} (Σ t_i)^{−d/2} dt as an expansion in ε.
pub fn cycle_integral(n: u32, d: u32, t_upper: f64, order: u32) -> EpsExpansion<f64> {
    // G_n is the n-fold antiderivative of u^{−d/2}
    let mut g: Vec<(i32, u32, Q)> = vec![(-(d as i32), 0, Q::one())];
    for _ in 0..n {
        let mut next = Vec::new();
        for (q2, m, c) in g {
            for (q, mm, a) in eps_algebra::antiderivative(q2, m) {
                next.push((q, mm, a.mul(&c)));
            }
        }
        g = next;
    }
    let gf: Terms = g.iter().map(|(q, m, c)| (*q, *m, c.to_f64())).collect();
    let mut out = EpsExpansion::zero();
    for j in 0..=n {
        let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * binom(n, j);
        if j == 0 {
            // G_n(nε), expanded with ln(nε) = ln n + ln ε
            let ln_n = (n as f64).ln();
            for &(q2, m, c) in &gf {
                let scale = (n as f64).powf(q2 as f64 / 2.0);
                for r in 0..=m {
                    out.push(q2, r, w * c * scale * binom(m, r) * ln_n.powi((m - r) as i32));
                }
            }
        } else {
            // Taylor expansion of G_n(jT + (n−j)ε) about ε = 0
            let u0 = j as f64 * t_upper;
            let shift = (n - j) as f64;
            let mut deriv = gf.clone();
            let mut fact = 1.0;
            for r in 0..=order {
                if r > 0 {
                    deriv = terms_derivative(&deriv);
                    fact *= r as f64;
                }
                if shift == 0.0 && r > 0 {
                    break;
                }
                out.push(2 * r as i32, 0, w * terms_eval(&deriv, u0) * shift.powi(r as i32) / fact);
            }
        }
    }
    out
}

/// (T − ε)^b as an expansion.
fn tree_factor(b: usize, t_upper: f64) -> EpsExpansion<f64> {
    let lin = EpsExpansion::constant(t_upper).add(&EpsExpansion::term(2, 0, -1.0));
    (0..b).fold(EpsExpansion::one(), |acc, _| acc.mul(&lin))
}

/// F_γ(ε,T) = ∫_{(ε,T)^E} f_γ as an expansion in ε.
///
/// Trees and one-loop graphs are integrated in closed form; graphs with more
/// loops are integrated numerically on a geometric ε-grid and fitted.
pub fn toy_weight(g: &FeynmanGraph, d: u32, t_upper: f64, opts: &ToyOptions) -> Result<ToyWeight, GraphError> {
    let integrand = toy_weight_integrand(g, d)?;
    let bridges = g.bridges();
    let tree = tree_factor(bridges.len(), t_upper);
    match g.loops() {
        0 => Ok(ToyWeight { expansion: tree, residual: 0.0, exact: true }),
        1 => {
            let n = (g.n_edges() - bridges.len()) as u32;
            let c = cycle_integral(n, d, t_upper, opts.taylor_order).map(|x| x * integrand.normalization());
            Ok(ToyWeight { expansion: tree.mul(&c), residual: 0.0, exact: true })
        }
        l => {
            // the bridges factor out exactly; integrate over the 2-core
            let core: Vec<usize> = (0..g.n_edges()).filter(|e| !bridges.contains(e)).collect();
            let ne = core.len();
            let sample = |eps: f64| -> Result<f64, GraphError> {
                let bounds = vec![(eps, t_upper); ne];
                let f = |t: &[f64]| {
                    let mut full = vec![1.0; g.n_edges()];
                    for (i, &e) in core.iter().enumerate() {
                        full[e] = t[i];
                    }
                    integrand.eval(&full)
                };
                Ok(quad::integrate_box(&f, &bounds, opts.quad_tol)?.value)
            };
            let grid = eps_algebra::geometric_grid(opts.eps_max, 0.5, opts.grid_points);
            let samples: Vec<(f64, f64)> = grid.iter().map(|&e| sample(e).map(|v| (e, v))).collect::<Result<_, _>>()?;
            // overall scaling ε^{E − dL/2}; logs up to the loop number
            let lead2 = 2 * ne as i32 - (d * l) as i32;
            let step = if d % 2 == 0 { 2 } else { 1 };
            let mut basis = Vec::new();
            let mut q2 = lead2.min(0);
            while q2 <= 2 {
                let mmax = if q2 <= 0 { l } else { 0 };
                for m in 0..=mmax {
                    basis.push((q2, m));
                }
                q2 += step;
            }
            let fit = eps_algebra::fit_expansion(&samples, &basis, &FitOptions { force: true, ..FitOptions::default() })?;
            Ok(ToyWeight { expansion: tree.mul(&fit.expansion), residual: fit.residual, exact: false })
        }
    }
}

/// Combinatorial factor of γ for vertices φ^k with unit couplings: the
/// coefficient of φ^{legs} in w(γ)/|Aut_V| with P = 1.
pub fn toy_symmetry_factor(g: &FeynmanGraph) -> Result<Q, GraphError> {
    let one = Kernel { tensor: vec![vec![Q::one()]], odd: false };
    let fns: Vec<Functional<Q>> = g
        .vertices
        .iter()
        .map(|v| {
            let mut f = Functional::zero(1, 0);
            f.add_term(v.hbar, Mono { ev: v.valence as u128, od: 0 }, Q::one());
            f
        })
        .collect();
    let w = graph_weight(g, &one, &fns)?;
    let m = Mono { ev: g.n_legs() as u128, od: 0 };
    Ok(w.coeff(g.genus(), &m).div(&Q::new(g.vertex_automorphisms() as i64, 1)))
}

/// Vertex labels (ħ-order, valence) carried by a toy action on the 1|0 space.
fn toy_menu<C: Coeff>(s: &Functional<C>) -> Vec<(u32, u32)> {
    let mut menu: Vec<(u32, u32)> = s.terms().map(|(i, m, _)| (i, m.ev as u32)).collect();
    menu.sort();
    menu.dedup();
    menu
}

fn toy_coupling<C: Coeff>(s: &Functional<C>, v: &Vertex) -> C {
    s.coeff(v.hbar, &Mono { ev: v.valence as u128, od: 0 })
}

fn toy_check<C: Coeff>(s: &Functional<C>) -> Result<(), GraphError> {
    if s.n_even() != 1 || s.n_odd() != 0 {
        return Err(GraphError::NotScalar);
    }
    Ok(())
}

/// Γ(P(ε,T), S) for the toy theory with ε symbolic. S lives on the 1|0 space
/// and its coefficients are the raw couplings of ħ^i φ^k. Also returns the
/// largest fit residual among the graph weights used.
pub fn toy_gamma(
    s: &Functional<EpsExpansion<f64>>,
    d: u32,
    t_upper: f64,
    trunc: Trunc,
    opts: &ToyOptions,
) -> Result<(Functional<EpsExpansion<f64>>, BTreeMap<(u32, u32), f64>), GraphError> {
    toy_check(s)?;
    let s = s.truncate(trunc);
    let mut out = Functional::zero(1, 0);
    let mut residuals: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for g in enumerate_up_to(trunc, &toy_menu(&s))? {
        let sym = toy_symmetry_factor(&g)?;
        if sym.is_zero() {
            continue;
        }
        let w = toy_weight(&g, d, t_upper, opts)?;
        let r = residuals.entry((g.genus(), g.n_legs())).or_insert(0.0);
        *r = r.max(w.residual);
        let mut c = w.expansion.map(|x| x * sym.to_f64());
        for v in &g.vertices {
            c = c.mul(&toy_coupling(&s, v));
        }
        out.add_term(g.genus(), Mono { ev: g.n_legs() as u128, od: 0 }, c);
    }
    Ok((out, residuals))
}

/// ∫_{(a,b)^n} (Σ t_i)^{−d/2} dt evaluated from the closed-form antiderivative.
pub fn cycle_integral_value(n: u32, d: u32, a: f64, b: f64) -> f64 {
    let mut g: Vec<(i32, u32, Q)> = vec![(-(d as i32), 0, Q::one())];
    for _ in 0..n {
        let mut next = Vec::new();
        for (q2, m, c) in g {
            for (q, mm, x) in eps_algebra::antiderivative(q2, m) {
                next.push((q, mm, x.mul(&c)));
            }
        }
        g = next;
    }
    let gf: Terms = g.iter().map(|(q, m, c)| (*q, *m, c.to_f64())).collect();
    (0..=n)
        .map(|j| {
            let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binom(n, j) * terms_eval(&gf, j as f64 * b + (n - j) as f64 * a)
        })
        .sum()
}

/// F_γ(T1,T2) as a number: closed form for trees and one-loop graphs,
/// quadrature otherwise.
pub fn toy_weight_value(g: &FeynmanGraph, d: u32, t1: f64, t2: f64, quad_tol: f64) -> Result<f64, GraphError> {
    if !(t1 > 0.0 && t2 > t1) {
        return Err(GraphError::BadScales);
    }
    let integrand = toy_weight_integrand(g, d)?;
    let bridges = g.bridges();
    let tree = (t2 - t1).powi(bridges.len() as i32);
    match g.loops() {
        0 => Ok(tree),
        1 => {
            let n = (g.n_edges() - bridges.len()) as u32;
            Ok(tree * integrand.normalization() * cycle_integral_value(n, d, t1, t2))
        }
        _ => {
            let core: Vec<usize> = (0..g.n_edges()).filter(|e| !bridges.contains(e)).collect();
            let f = |t: &[f64]| {
                let mut full = vec![1.0; g.n_edges()];
                for (i, &e) in core.iter().enumerate() {
                    full[e] = t[i];
                }
                integrand.eval(&full)
            };
            Ok(tree * quad::integrate_box(&f, &vec![(t1, t2); core.len()], quad_tol)?.value)
        }
    }
}

/// Γ(P(T1,T2), S) for the toy theory with numeric couplings.
pub fn toy_flow(s: &Functional<f64>, d: u32, t1: f64, t2: f64, trunc: Trunc, quad_tol: f64) -> Result<Functional<f64>, GraphError> {
    toy_check(s)?;
    let s = s.truncate(trunc);
    let mut out = Functional::zero(1, 0);
    for g in enumerate_up_to(trunc, &toy_menu(&s))? {
        let sym = toy_symmetry_factor(&g)?;
        if sym.is_zero() {
            continue;
        }
        let c = g.vertices.iter().fold(sym.to_f64() * toy_weight_value(&g, d, t1, t2, quad_tol)?, |acc, v| acc * toy_coupling(&s, v));
        out.add_term(g.genus(), Mono { ev: g.n_legs() as u128, od: 0 }, c);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chern–Simons propagator on ℝ^n.

fn upper_gamma(a: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    statrs::function::gamma::gamma_ur(a, x) * statrs::function::gamma::gamma(a)
}

/// ∫_{r²/4T}^{r²/4ε} u^{n/2−1} e^{−u} du = Γ(n/2, r²/4T) − Γ(n/2, r²/4ε).
pub fn cs_prefactor(n: u32, r: f64, eps: f64, t: f64) -> Result<f64, GraphError> {
    if n < 2 {
        return Err(GraphError::BadDimension);
    }
    if r == 0.0 {
        return Err(GraphError::Coincident);
    }
    if !(eps >= 0.0 && t > eps) {
        return Err(GraphError::BadScales);
    }
    let a = n as f64 / 2.0;
    let lo = if t.is_infinite() { 0.0 } else { r * r / (4.0 * t) };
    let hi = if eps == 0.0 { f64::INFINITY } else { r * r / (4.0 * eps) };
    let g_lo = if lo == 0.0 { statrs::function::gamma::gamma(a) } else { upper_gamma(a, lo) };
    Ok(g_lo - upper_gamma(a, hi))
}

/// ∫_ε^T (x−y)/(2t) (4πt)^{−n/2} e^{−|x−y|²/4t} dt in closed form.
pub fn cs_propagator(n: u32, x: &[f64], y: &[f64], eps: f64, t: f64) -> Result<Vec<f64>, GraphError> {
    if x.len() != n as usize || y.len() != n as usize {
        return Err(GraphError::BadDimension);
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let pre = cs_prefactor(n, r, eps, t)?;
    let c = std::f64::consts::PI.powf(-(n as f64) / 2.0) * r.powi(-(n as i32)) / 2.0 * pre;
    Ok(diff.into_iter().map(|d| c * d).collect())
}

/// The integrand of [`cs_propagator`] at time t.
pub fn cs_heat_integrand(n: u32, x: &[f64], y: &[f64], t: f64) -> Vec<f64> {
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r2 = diff.iter().map(|d| d * d).sum::<f64>();
    let k = (4.0 * std::f64::consts::PI * t).powf(-(n as f64) / 2.0) * (-r2 / (4.0 * t)).exp();
    diff.into_iter().map(|d| d / (2.0 * t) * k).collect()
}

/// CSV rows "graph,i,k,q,m,coeff" for a weight table.
pub fn weight_table_csv(rows: &[(String, u32, u32, EpsExpansion<f64>)]) -> String {
    let mut s = String::from("graph,i,k,q,m,coeff\n");
    for (id, i, k, e) in rows {
        for (&(q2, m), c) in &e.terms {
            let q = if q2 % 2 == 0 { format!("{}", q2 / 2) } else { format!("{q2}/2") };
            let _ = writeln!(s, "\"{id}\",{i},{k},{q},{m},{c:.15e}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(spec: &str) -> FeynmanGraph {
        FeynmanGraph::parse(spec).unwrap()
    }

    #[test]
    fn figure_eight_has_eight_automorphisms() {
        // two independent cycles: genus 2
        assert!(enumerate_graphs(1, 0, &[(0, 4)]).unwrap().is_empty());
        let gs = enumerate_graphs(2, 0, &[(0, 4)]).unwrap();
        let fig8: Vec<_> = gs.iter().filter(|g| g.n_vertices() == 1).collect();
        assert_eq!(fig8.len(), 1);
        assert_eq!(fig8[0].automorphisms(), 8);
    }

    #[test]
    fn cubic_one_loop_two_point() {
        let gs = enumerate_graphs(1, 2, &[(0, 3)]).unwrap();
        assert_eq!(gs.len(), 2);
        let bubble = gs.iter().find(|g| g.multiplicity(0, 1) == 2).unwrap();
        assert_eq!(bubble.automorphisms(), 4);
        assert_eq!(bubble.automorphisms() / bubble.vertex_automorphisms(), 2);
    }

    #[test]
    fn text_roundtrip() {
        let t = g("v 0 3; v 0 3; e 0 1; e 0 1; l 0; l 1");
        assert_eq!(FeynmanGraph::parse(&t.to_text()).unwrap(), t);
        assert!(FeynmanGraph::parse("v 0 3; v 0 3; e 0 1; l 0").is_err());
    }

    #[test]
    fn polynomials_of_small_graphs() {
        let tad = graph_polynomial(&g("v 0 4; e 0 0; l 0; l 0")).unwrap();
        assert_eq!(tad.terms, [(vec![1], 1)].into_iter().collect());
        let theta = graph_polynomial(&g("v 0 3; v 0 3; e 0 1; e 0 1; e 0 1")).unwrap();
        assert_eq!(theta.terms.len(), 3);
        assert!(theta.terms.keys().all(|e| e.iter().sum::<u32>() == 2));
    }

    #[test]
    fn tadpole_and_bubble_integrals() {
        let opts = ToyOptions::default();
        // d=4 tadpole: (4π)^{−2}(1/ε − 1/T)
        let tad = toy_weight(&g("v 0 4; e 0 0; l 0; l 0"), 4, 1.0, &opts).unwrap().expansion;
        let n = (4.0 * std::f64::consts::PI).powi(-2);
        assert!((tad.coeff(-2, 0) - n).abs() < 1e-15);
        assert!((tad.coeff(0, 0) + n).abs() < 1e-15);
        // d=2 tadpole: (4π)^{−1}(ln T − ln ε)
        let tad2 = toy_weight(&g("v 0 4; e 0 0; l 0; l 0"), 2, 1.0, &opts).unwrap().expansion;
        assert!((tad2.coeff(0, 1) + 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        // d=4 bubble: singular part −(4π)^{−2} ln ε
        let bub = toy_weight(&g("v 0 4; v 0 4; e 0 1; e 0 1; l 0; l 0; l 1; l 1"), 4, 1.0, &opts).unwrap().expansion;
        assert!((bub.coeff(0, 1) + n).abs() < 1e-14);
    }

    #[test]
    fn cs_prefactor_limits() {
        let a = cs_prefactor(3, 2.0, 0.0, 1.0).unwrap();
        assert!((a - upper_gamma(1.5, 1.0)).abs() < 1e-15);
        let b = cs_prefactor(3, 2.0, 0.1, 1.0).unwrap();
        let c = cs_prefactor(3, 2.0, 0.0, 0.1).unwrap();
        assert!((a - c - b).abs() < 1e-14);
        assert!(cs_prefactor(3, 0.0, 0.0, 1.0).is_err());
        assert!(cs_prefactor(3, 50.0, 0.0, 1.0).unwrap() < 1e-200);
    }
}
