//! Slow reference computations.
//!
//! Nothing in here knows about the engine crate. Inputs are plain numbers,
//! vectors and adjacency lists so that every cross-check compares two
//! computations that share no code.

pub mod gaussian;
pub mod graphs;
pub mod linear;
pub mod quad;
pub mod wick;

pub use gaussian::{gaussian_lemma_expansion, gaussian_moment_quad, GaussianLemmaInput};
pub use graphs::{
    automorphism_count, connected_multigraphs, enumerate_graphs_bruteforce, spanning_tree_polynomial,
    BruteGraph, HalfEdgeGraph,
};
pub use linear::{matrix_function_from_eigen, rank_f64};
pub use quad::{quad_1d, quad_nd, upper_incomplete_gamma_quad, QuadError, QuadResult};
pub use wick::{perfect_matchings, wick_moments, wick_sum};

/// Derivative of Σ c t^q (ln t)^m, term by term.
///
/// d/dt t^q ln^m t = q t^{q-1} ln^m t + m t^{q-1} ln^{m-1} t.
pub fn differentiate_log_power_terms(terms: &[(f64, u32, f64)]) -> Vec<(f64, u32, f64)> {
    let mut out: Vec<(f64, u32, f64)> = Vec::new();
    let mut push = |q: f64, m: u32, c: f64| {
        if c == 0.0 {
            return;
        }
        if let Some(t) = out.iter_mut().find(|t| t.0 == q && t.1 == m) {
            t.2 += c;
        } else {
            out.push((q, m, c));
        }
    };
    for &(q, m, c) in terms {
        push(q - 1.0, m, c * q);
        if m > 0 {
            push(q - 1.0, m - 1, c * m as f64);
        }
    }
    out.retain(|t| t.2 != 0.0);
    out
}

/// Evaluates Σ c t^q (ln t)^m at t > 0.
pub fn eval_log_power_terms(terms: &[(f64, u32, f64)], t: f64) -> f64 {
    terms
        .iter()
        .map(|&(q, m, c)| c * t.powf(q) * t.ln().powi(m as i32))
        .sum()
}
