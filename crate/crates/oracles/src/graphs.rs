//! Graph oracles: brute-force enumeration through half-edge matchings,
//! automorphisms by half-edge backtracking, spanning-tree polynomials.

use std::collections::BTreeMap;

/// Multigraph with typed vertices. `vertex_types[v] = (hbar_degree, valence)`,
/// `legs[v]` external half-edges at v, edges as unordered pairs (loops allowed).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BruteGraph {
    pub vertex_types: Vec<(u32, u32)>,
    pub edges: Vec<(usize, usize)>,
    pub legs: Vec<u32>,
}

/// Half-edge form: `vertex_of[h]`, `partner[h]` (None for an external leg).
#[derive(Debug, Clone)]
pub struct HalfEdgeGraph {
    pub vertex_types: Vec<(u32, u32)>,
    pub vertex_of: Vec<usize>,
    pub partner: Vec<Option<usize>>,
}

impl BruteGraph {
    pub fn loops(&self) -> usize {
        self.edges.len() + 1 - self.vertex_types.len()
    }

    pub fn genus(&self) -> u32 {
        self.loops() as u32 + self.vertex_types.iter().map(|t| t.0).sum::<u32>()
    }

    pub fn n_legs(&self) -> u32 {
        self.legs.iter().sum()
    }

    pub fn to_half_edges(&self) -> HalfEdgeGraph {
        let mut vertex_of = Vec::new();
        let mut partner = Vec::new();
        for &(u, v) in &self.edges {
            let h = vertex_of.len();
            vertex_of.push(u);
            vertex_of.push(v);
            partner.push(Some(h + 1));
            partner.push(Some(h));
        }
        for (v, &l) in self.legs.iter().enumerate() {
            for _ in 0..l {
                vertex_of.push(v);
                partner.push(None);
            }
        }
        HalfEdgeGraph { vertex_types: self.vertex_types.clone(), vertex_of, partner }
    }

    fn canonical(&self) -> BruteGraph {
        let n = self.vertex_types.len();
        let mut best: Option<BruteGraph> = None;
        for perm in permutations(n) {
            // perm[old] = new, only type-preserving
            if (0..n).any(|v| self.vertex_types[v] != self.vertex_types[perm[v]]) {
                continue;
            }
            let mut edges: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (perm[a], perm[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            edges.sort();
            let mut legs = vec![0; n];
            for v in 0..n {
                legs[perm[v]] = self.legs[v];
            }
            let g = BruteGraph { vertex_types: self.vertex_types.clone(), edges, legs };
            if best.as_ref().map_or(true, |b| g < *b) {
                best = Some(g);
            }
        }
        best.expect("identity permutation is always type-preserving")
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(a, b) in edges {
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

/// Number of half-edge permutations that respect vertices (with types), the
/// edge pairing, and the set of legs.
pub fn automorphism_count(g: &HalfEdgeGraph) -> u64 {
    let nh = g.vertex_of.len();
    let nv = g.vertex_types.len();
    let mut by_vertex = vec![Vec::new(); nv];
    for h in 0..nh {
        by_vertex[g.vertex_of[h]].push(h);
    }
    for v in 0..nv {
        assert_eq!(by_vertex[v].len() as u32, g.vertex_types[v].1, "valence mismatch at vertex {v}");
    }
    struct St<'a> {
        g: &'a HalfEdgeGraph,
        by_vertex: Vec<Vec<usize>>,
        img: Vec<Option<usize>>,
        used: Vec<bool>,
        vmap: Vec<Option<usize>>,
        vused: Vec<bool>,
    }
    fn rec(st: &mut St, h: usize) -> u64 {
        let nh = st.img.len();
        if h == nh {
            return 1;
        }
        let v = st.g.vertex_of[h];
        let targets: Vec<usize> = match st.vmap[v] {
            Some(w) => st.by_vertex[w].clone(),
            None => (0..st.by_vertex.len())
                .filter(|&w| !st.vused[w] && st.g.vertex_types[w] == st.g.vertex_types[v])
                .flat_map(|w| st.by_vertex[w].clone())
                .collect(),
        };
        let mut total = 0;
        for t in targets {
            if st.used[t] {
                continue;
            }
            let ok = match st.g.partner[h] {
                None => st.g.partner[t].is_none(),
                Some(p) => match st.g.partner[t] {
                    None => false,
                    Some(tp) => match st.img[p] {
                        Some(ip) => ip == tp,
                        // partner unassigned: its image must still be free
                        None => !st.used[tp],
                    },
                },
            };
            if !ok {
                continue;
            }
            let w = st.g.vertex_of[t];
            let fresh = st.vmap[v].is_none();
            if fresh {
                st.vmap[v] = Some(w);
                st.vused[w] = true;
            }
            st.img[h] = Some(t);
            st.used[t] = true;
            total += rec(st, h + 1);
            st.img[h] = None;
            st.used[t] = false;
            if fresh {
                st.vmap[v] = None;
                st.vused[w] = false;
            }
        }
        total
    }
    let mut st = St {
        g,
        by_vertex,
        img: vec![None; nh],
        used: vec![false; nh],
        vmap: vec![None; nv],
        vused: vec![false; nv],
    };
    rec(&mut st, 0)
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// All connected graphs of genus `i` with `k` legs built from `menu`
/// (hbar_degree, valence) vertex types, with at most `max_vertices` vertices.
/// Classes are found by exhausting leg choices and half-edge matchings; the
/// automorphism order comes from orbit counting, not from
/// [`automorphism_count`].
pub fn enumerate_graphs_bruteforce(
    i: u32,
    k: u32,
    menu: &[(u32, u32)],
    max_vertices: usize,
) -> Vec<(BruteGraph, u64)> {
    let mut menu: Vec<(u32, u32)> = menu.to_vec();
    menu.sort();
    menu.dedup();
    let mut out = Vec::new();
    for nv in 1..=max_vertices {
        for choice in multisets(menu.len(), nv) {
            let types: Vec<(u32, u32)> = choice.iter().map(|&c| menu[c]).collect();
            let h: u32 = types.iter().map(|t| t.1).sum();
            if h < k || (h - k) % 2 == 1 {
                continue;
            }
            let e = (h - k) / 2;
            let hdeg: u32 = types.iter().map(|t| t.0).sum();
            if e + 1 < nv as u32 || e + 1 - nv as u32 + hdeg != i {
                continue;
            }
            assert!(h <= 14, "brute-force enumeration limited to 14 half-edges");
            out.extend(classes_for(&types, k as usize));
        }
    }
    out.sort();
    out
}

fn multisets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for c in start..n {
            cur.push(c);
            rec(n, size, c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, size, 0, &mut Vec::new(), &mut out);
    out
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in start..n {
            cur.push(c);
            rec(n, k, c + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

fn classes_for(types: &[(u32, u32)], k: usize) -> Vec<(BruteGraph, u64)> {
    let mut vertex_of = Vec::new();
    for (v, t) in types.iter().enumerate() {
        for _ in 0..t.1 {
            vertex_of.push(v);
        }
    }
    let nh = vertex_of.len();
    let mut counts: BTreeMap<BruteGraph, u64> = BTreeMap::new();
    for legset in subsets(nh, k) {
        let rest: Vec<usize> = (0..nh).filter(|h| !legset.contains(h)).collect();
        let mut legs = vec![0u32; types.len()];
        for &h in &legset {
            legs[vertex_of[h]] += 1;
        }
        for m in crate::wick::perfect_matchings(rest.len()) {
            let edges: Vec<(usize, usize)> = m
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (vertex_of[rest[a]], vertex_of[rest[b]]);
                    (x.min(y), x.max(y))
                })
                .collect();
            if !is_connected(types.len(), &edges) {
                continue;
            }
            let g = BruteGraph { vertex_types: types.to_vec(), edges, legs: legs.clone() };
            *counts.entry(g.canonical()).or_insert(0) += 1;
        }
    }
    // |G| = Π_types n_t! · Π_v val_v!  (G acts on labelled configurations)
    let mut group = 1u64;
    let mut tally: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for t in types {
        *tally.entry(*t).or_insert(0) += 1;
        group *= factorial(t.1 as u64);
    }
    for n in tally.values() {
        group *= factorial(*n);
    }
    // stabilizer of a configuration is its automorphism group: orbit = |G|/|Aut|
    counts
        .into_iter()
        .map(|(g, c)| {
            assert_eq!(group % c, 0, "orbit size must divide the group order");
            (g, group / c)
        })
        .collect()
}

/// Σ over spanning trees T of Π_{e ∉ T} t_e, as exponent vector → coefficient.
pub fn spanning_tree_polynomial(n: usize, edges: &[(usize, usize)]) -> BTreeMap<Vec<u32>, u64> {
    let mut out = BTreeMap::new();
    if n == 0 {
        return out;
    }
    for tree in subsets(edges.len(), n - 1) {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut ok = true;
        for &e in &tree {
            let (a, b) = edges[e];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                ok = false;
                break;
            }
            parent[ra] = rb;
        }
        if !ok {
            continue;
        }
        let exps: Vec<u32> = (0..edges.len()).map(|e| u32::from(!tree.contains(&e))).collect();
        *out.entry(exps).or_insert(0) += 1;
    }
    out
}

/// All connected multigraphs (loops allowed) with `1..=max_vertices` vertices and
/// `0..=max_edges` edges, one per isomorphism class.
pub fn connected_multigraphs(max_vertices: usize, max_edges: usize) -> Vec<(usize, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    for n in 1..=max_vertices {
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        let mut seen: std::collections::BTreeSet<Vec<(usize, usize)>> = Default::default();
        let perms = permutations(n);
        for e in 0..=max_edges {
            for ms in multisets(slots.len(), e) {
                let edges: Vec<(usize, usize)> = ms.iter().map(|&s| slots[s]).collect();
                if !is_connected(n, &edges) {
                    continue;
                }
                let canon = perms
                    .iter()
                    .map(|p| {
                        let mut es: Vec<(usize, usize)> = edges
                            .iter()
                            .map(|&(a, b)| (p[a].min(p[b]), p[a].max(p[b])))
                            .collect();
                        es.sort();
                        es
                    })
                    .min()
                    .expect("at least one permutation");
                if seen.insert(canon.clone()) {
                    out.push((n, canon));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cubic_vertex() {
        let gs = enumerate_graphs_bruteforce(0, 3, &[(0, 3)], 3);
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].1, 6);
        assert_eq!(automorphism_count(&gs[0].0.to_half_edges()), 6);
    }

    #[test]
    fn one_loop_two_point_cubic() {
        let gs = enumerate_graphs_bruteforce(1, 2, &[(0, 3)], 4);
        assert_eq!(gs.len(), 2);
        for (g, aut) in &gs {
            assert_eq!(*aut, automorphism_count(&g.to_half_edges()));
        }
        let bubble = gs.iter().find(|(g, _)| g.edges == vec![(0, 1), (0, 1)]).unwrap();
        // swap the two vertices with their legs, and swap the two parallel edges
        assert_eq!(bubble.1, 4);
    }

    #[test]
    fn figure_eight() {
        let gs = enumerate_graphs_bruteforce(2, 0, &[(0, 4)], 1);
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].1, 8);
        assert_eq!(automorphism_count(&gs[0].0.to_half_edges()), 8);
    }

    #[test]
    fn theta_polynomial() {
        let p = spanning_tree_polynomial(2, &[(0, 1), (0, 1), (0, 1)]);
        assert_eq!(p.len(), 3);
        assert!(p.values().all(|&c| c == 1));
        let tad = spanning_tree_polynomial(1, &[(0, 0)]);
        assert_eq!(tad.get(&vec![1]), Some(&1));
    }

    #[test]
    fn multigraph_counts() {
        // connected multigraphs on 2 vertices with exactly 2 edges: double edge, edge+loop
        let all = connected_multigraphs(2, 2);
        let two_two = all.iter().filter(|(n, e)| *n == 2 && e.len() == 2).count();
        assert_eq!(two_two, 2);
        let one = all.iter().filter(|(n, _)| *n == 1).count();
        assert_eq!(one, 3);
    }
}
