use bvren::coeff::{Coeff, Q};
use bvren::functionals::{self as fun, random, Functional, Mono, Trunc};
use bvren::schwinger::*;
use bvren::superspace::{random_space, Kernel, Scale};
use bvren::ExpRat;
use bvren_oracles as oracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn from_brute(b: &oracle::BruteGraph) -> FeynmanGraph {
    let vs = b.vertex_types.iter().map(|&(h, k)| Vertex { hbar: h, valence: k }).collect();
    FeynmanGraph::new(vs, b.edges.clone()).unwrap()
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

#[test]
fn graph_polynomial_is_spanning_tree_sum() {
    for (n, edges) in oracle::connected_multigraphs(4, 5) {
        let g = FeynmanGraph::new(vec![Vertex { hbar: 0, valence: 12 }; n], edges.clone()).unwrap();
        let p = graph_polynomial(&g).unwrap();
        // edges are re-sorted by the constructor
        let expect = oracle::spanning_tree_polynomial(n, &g.edges);
        assert_eq!(p.terms, expect, "graph {edges:?}");
    }
}

#[test]
fn small_graph_polynomials() {
    let bubble = FeynmanGraph::parse("v 0 3; v 0 3; e 0 1; e 0 1; l 0; l 1").unwrap();
    let p = graph_polynomial(&bubble).unwrap();
    assert_eq!(p.terms, [(vec![1, 0], 1), (vec![0, 1], 1)].into_iter().collect());
    let theta = FeynmanGraph::parse("v 0 3; v 0 3; e 0 1; e 0 1; e 0 1").unwrap();
    let p = graph_polynomial(&theta).unwrap();
    let expect: BTreeMap<Vec<u32>, u64> = [(vec![1, 1, 0], 1), (vec![1, 0, 1], 1), (vec![0, 1, 1], 1)].into_iter().collect();
    assert_eq!(p.terms, expect);
    let two = FeynmanGraph { vertices: vec![Vertex { hbar: 0, valence: 3 }; 2], edges: vec![] };
    assert_eq!(graph_polynomial(&two), Err(GraphError::Disconnected));
}

#[test]
fn enumeration_matches_bruteforce() {
    let menus: Vec<Vec<(u32, u32)>> = vec![vec![(0, 3)], vec![(0, 4)], vec![(0, 3), (0, 4)], vec![(0, 3), (1, 1), (1, 2)]];
    for menu in &menus {
        for i in 0..=2u32 {
            for k in 0..=4u32 {
                if 2 * i + k > 6 {
                    continue;
                }
                let ours = enumerate_graphs(i, k, menu).unwrap();
                let max_v = 2 * i as usize + k as usize + 2;
                let brute = oracle::enumerate_graphs_bruteforce(i, k, menu, max_v);
                let mut a: Vec<(FeynmanGraph, u64)> = ours
                    .iter()
                    .map(|g| {
                        let legs: u64 = (0..g.n_vertices()).map(|v| factorial(g.legs(v))).product();
                        (g.canonical_form(), g.automorphisms() * legs)
                    })
                    .collect();
                let mut b: Vec<(FeynmanGraph, u64)> = brute.iter().map(|(g, aut)| (from_brute(g).canonical_form(), *aut)).collect();
                a.sort_by_key(|x| x.0.to_text());
                b.sort_by_key(|x| x.0.to_text());
                assert_eq!(a, b, "menu {menu:?} (i,k)=({i},{k})");
            }
        }
    }
}

#[test]
fn automorphisms_match_half_edge_oracle() {
    for g in enumerate_up_to(Trunc::new(2, 2), &[(0, 3), (0, 4), (1, 2)]).unwrap() {
        let brute = oracle::BruteGraph {
            vertex_types: g.vertices.iter().map(|v| (v.hbar, v.valence)).collect(),
            edges: g.edges.clone(),
            legs: (0..g.n_vertices()).map(|v| g.legs(v)).collect(),
        };
        let legs: u64 = (0..g.n_vertices()).map(|v| factorial(g.legs(v))).product();
        assert_eq!(oracle::automorphism_count(&brute.to_half_edges()), g.automorphisms() * legs, "{}", g.to_text());
    }
}

#[test]
fn enumeration_rejects_bivalent_tree_vertices() {
    assert_eq!(enumerate_graphs(1, 2, &[(0, 2)]), Err(GraphError::NotTrivalent(2)));
}

#[test]
fn single_vertex_reproduces_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random::functional(&mut rng, 2, 2, &[(0, 3)], 5);
    let g = FeynmanGraph::parse("v 0 3; l 0; l 0; l 0").unwrap();
    let p = Kernel { tensor: vec![vec![Q::one(); 4]; 4], odd: false };
    assert_eq!(graph_weight(&g, &p, &[s.clone()]).unwrap(), s);
    let wrong = random::functional(&mut rng, 2, 2, &[(0, 4)], 3);
    assert!(matches!(graph_weight(&g, &p, &[wrong]), Err(GraphError::VertexTensor(0, 3))));
}

#[test]
fn bubble_on_point_matches_wick() {
    // S = φ³/6 on a 1|0 space with propagator p
    let p = Q::new(3, 7);
    let kern = Kernel { tensor: vec![vec![p.clone()]], odd: false };
    let x = Functional::<Q>::var(1, 0, 0);
    let s = x.mul(&x).mul(&x).scale_q(&Q::new(1, 6));
    let gs = enumerate_graphs(1, 2, &[(0, 3)]).unwrap();
    let phi2 = Mono { ev: 2, od: 0 };
    let mut total = Q::zero();
    for g in &gs {
        let fns = vec![s.clone(); g.n_vertices()];
        let w = graph_weight(g, &kern, &fns).unwrap().scale_q(&Q::new(1, g.vertex_automorphisms() as i64));
        total = total.add(&w.coeff(1, &phi2));
    }
    // bubble p²/4 plus tadpole-on-a-line p²/4
    assert_eq!(total, p.mul(&p).div(&Q::new(2, 1)));
    let input = oracle::GaussianLemmaInput { m2: 7.0 / 3.0, action: vec![(0, 3, 1.0 / 6.0)], max_hbar: 1, max_degree: 2 };
    let c = oracle::gaussian_lemma_expansion(&input).unwrap().into_iter().find(|t| t.0 == 1 && t.1 == 2).unwrap().2;
    assert!((total.to_f64() - c).abs() < 1e-12);
    let gamma = fun::gamma(&kern, &s, Trunc::new(1, 3)).unwrap();
    assert_eq!(gamma.coeff(1, &phi2), total);
}

#[test]
fn graph_sum_equals_gamma_on_random_actions() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 1 + (seed as usize % 2);
        let sp = random_space(&mut rng, half).0;
        let trunc = Trunc::new(1, 3);
        let s = random::functional(&mut rng, sp.n_even(), sp.n_odd(), &[(0, 3), (0, 4), (1, 1), (1, 2), (1, 3)], 4)
            .map_coeffs(ExpRat::from_q);
        let scale = if seed % 2 == 0 { Scale::Infinite } else { Scale::finite(1, 2) };
        let p = sp.propagator(&Q::zero(), &scale).unwrap();
        let a = graph_sum(&p, &s, trunc).unwrap();
        let b = fun::gamma(&p, &s, trunc).unwrap();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn graph_sum_equals_gaussian_lemma() {
    // 1|0 space, P = 1/m², S = Σ c ħ^i φ^k
    let m2 = 2.0;
    let rat = [(0u32, 3u32, 1i64, 2i64), (0, 4, -1, 4), (1, 1, 3, 10), (1, 2, 1, 8)];
    let action: Vec<(u32, u32, f64)> = rat.iter().map(|&(i, k, a, b)| (i, k, a as f64 / b as f64)).collect();
    let mut s = Functional::<Q>::zero(1, 0);
    for &(i, k, a, b) in &rat {
        s.add_term(i, Mono { ev: k as u128, od: 0 }, Q::new(a, b));
    }
    let p = Kernel { tensor: vec![vec![Q::new(1, 2)]], odd: false };
    let trunc = Trunc::new(2, 2);
    let ours = graph_sum(&p, &s, trunc).unwrap();
    let input = oracle::GaussianLemmaInput { m2, action: action.clone(), max_hbar: 2, max_degree: 2 };
    for (i, k, c) in oracle::gaussian_lemma_expansion(&input).unwrap() {
        if !trunc.contains(i, k) {
            continue;
        }
        let v = ours.coeff(i, &Mono { ev: k as u128, od: 0 }).to_f64();
        assert!((v - c).abs() < 1e-9 * (1.0 + c.abs()), "({i},{k}): {v} vs {c}");
    }
}

#[test]
fn one_loop_cycles_match_quadrature() {
    let t = 1.5;
    for (n, d) in [(1u32, 4u32), (2, 4), (3, 4), (2, 3), (3, 2), (1, 1)] {
        let e = cycle_integral(n, d, t, 10);
        for eps in [0.05, 0.01] {
            let f = |x: &[f64]| x.iter().sum::<f64>().powf(-(d as f64) / 2.0);
            let q = oracle::quad_nd(&f, &vec![(eps, t); n as usize], 1e-11).unwrap().value;
            let v = e.eval(eps);
            assert!((v - q).abs() < 1e-8 * q.abs().max(1.0), "n={n} d={d} eps={eps}: {v} vs {q}");
        }
    }
}

#[test]
fn toy_integrands_have_expected_shapes() {
    let tad = FeynmanGraph::parse("v 0 4; e 0 0; l 0; l 0").unwrap();
    let f = toy_weight_integrand(&tad, 4).unwrap();
    assert!((f.eval(&[0.5]) * 0.25 - f.normalization()).abs() < 1e-18);
    let tree = FeynmanGraph::parse("v 0 3; v 0 3; e 0 1; l 0; l 0; l 1; l 1").unwrap();
    let f = toy_weight_integrand(&tree, 4).unwrap();
    assert_eq!(f.eval(&[1e-9]), 1.0);
    assert_eq!(toy_weight_integrand(&tree, 0).unwrap_err(), GraphError::BadDimension);
    let w = toy_weight(&tree, 4, 2.0, &ToyOptions::default()).unwrap();
    assert!(eps_regular(&w.expansion));
}

fn eps_regular(e: &bvren::EpsExpansion<f64>) -> bool {
    e.terms.iter().all(|(&(q2, m), c)| (q2 >= 0 && (q2 > 0 || m == 0)) || *c == 0.0)
}

#[test]
fn two_loop_fit_predicts_fresh_samples() {
    // theta graph in d=3 is logarithmically divergent
    let theta = FeynmanGraph::parse("v 0 3; v 0 3; e 0 1; e 0 1; e 0 1").unwrap();
    let opts = ToyOptions { grid_points: 10, eps_max: 1.0 / 8.0, quad_tol: 1e-9, ..ToyOptions::default() };
    let w = toy_weight(&theta, 3, 1.0, &opts).unwrap();
    assert!(!w.exact);
    let f = toy_weight_integrand(&theta, 3).unwrap();
    let eps = 0.003;
    let q = oracle::quad_nd(&|t: &[f64]| f.eval(t), &vec![(eps, 1.0); 3], 1e-10).unwrap().value;
    let v = w.expansion.eval(eps);
    assert!((v - q).abs() < 1e-4 * q.abs(), "{v} vs {q}");
    assert!(w.expansion.coeff(0, 1).abs() > 1e-6);
}

#[test]
fn cs_propagator_matches_heat_kernel_integral() {
    for (n, x, y, eps, t) in [
        (3u32, vec![0.3, -0.2, 0.5], vec![0.0, 0.1, 0.0], 0.01, 2.0),
        (3, vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], 0.0, 1.0),
        (4, vec![0.2, 0.2, 0.2, 0.2], vec![0.0; 4], 0.05, 0.5),
        (2, vec![0.7, 0.1], vec![-0.2, 0.3], 0.001, 3.0),
    ] {
        let ours = cs_propagator(n, &x, &y, eps, t).unwrap();
        for c in 0..n as usize {
            let f = |s: f64| if s <= 0.0 { 0.0 } else { cs_heat_integrand(n, &x, &y, s)[c] };
            let q = oracle::quad_1d(&f, eps, t, 1e-13).unwrap().value;
            assert!((ours[c] - q).abs() < 1e-10 * (1.0 + q.abs()), "n={n} c={c}: {} vs {q}", ours[c]);
        }
        let r = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let pre = cs_prefactor(n, r, eps, t).unwrap();
        let a = n as f64 / 2.0;
        let hi = if eps == 0.0 { 0.0 } else { oracle::upper_incomplete_gamma_quad(a, r * r / (4.0 * eps)).unwrap() };
        let lo = oracle::upper_incomplete_gamma_quad(a, r * r / (4.0 * t)).unwrap();
        assert!((pre - (lo - hi)).abs() < 1e-10);
    }
    assert_eq!(cs_propagator(3, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.0, 1.0), Err(GraphError::Coincident));
}
