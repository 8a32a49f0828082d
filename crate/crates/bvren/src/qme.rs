//! Solutions of the quantum master equation on finite-dimensional spaces:
//! seeds built on Ker H, deformations by L-exact terms, and the Hamiltonians
//! of linear symplectic vector fields used to build homotopies.

use crate::coeff::{Coeff, Q};
use crate::functionals::{self as fun, random, Functional, FunctionalError, Mono, Trunc};
use crate::linalg::{self, Mat};
use crate::superspace::{assemble, random_basis_change, random_block, Block, BlockLayout, Kernel, OddSymplecticSpace};
use rand::Rng;

/// ħ log(1 + Y), truncated. Every term of Y must have positive weight 2i+k,
/// so the series terminates.
pub fn hbar_log1p<C: Coeff>(y: &Functional<C>, trunc: Trunc) -> Functional<C> {
    let (ne, no) = (y.n_even(), y.n_odd());
    let keep = |i: u32, k: u32| trunc.contains(i + 1, k);
    let y = y.filter(|i, k| keep(i, k));
    let mut out = Functional::zero(ne, no);
    let mut power = Functional::constant(ne, no, 0, C::one());
    let nmax = trunc.weight().max(1);
    for n in 1..=nmax {
        power = power.mul_filtered(&y, keep);
        if power.is_zero() {
            break;
        }
        let c = Q::new(if n % 2 == 1 { 1 } else { -1 }, n as i64);
        out.add_assign(&power.scale_q(&c));
    }
    out.shift_hbar(1).truncate(trunc)
}

/// Y = Qχ + ħΔ_T χ + {χ, S}_T, so that (Q + ħΔ_T)(χ e^{S/ħ}) = Y e^{S/ħ}
/// for odd χ.
pub fn exact_deformation<C: Coeff>(q: &Mat<Q>, k_t: &Kernel<C>, s: &Functional<C>, chi: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    let mut y = chi.apply_q(q);
    y.add_assign(&fun::bv_laplacian(k_t, chi)?.shift_hbar(1));
    y.add_assign(&fun::bv_bracket(k_t, chi, s)?);
    Ok(y)
}

/// S′ = S + ħ log(1 + Y) with Y from [`exact_deformation`]. If S solves the
/// scale-T QME then so does S′, since e^{S′/ħ} = e^{S/ħ} + (Q + ħΔ_T)(χe^{S/ħ}).
pub fn deform<C: Coeff>(q: &Mat<Q>, k_t: &Kernel<C>, s: &Functional<C>, chi: &Functional<C>, trunc: Trunc) -> Result<Functional<C>, FunctionalError> {
    let y = exact_deformation(q, k_t, s, chi)?;
    Ok(s.add(&hbar_log1p(&y, trunc)).truncate(trunc))
}

/// Random odd χ with components of degree ≥ 2, so that Y has positive weight.
pub fn random_chi<R: Rng>(rng: &mut R, ne: usize, no: usize, trunc: Trunc, terms: usize) -> Functional<Q> {
    let mut f = Functional::zero(ne, no);
    for (i, k) in trunc.labels() {
        if k < 2 || 2 * i + k + 1 > trunc.weight() {
            continue;
        }
        for _ in 0..terms {
            if let Some(m) = odd_monomial(rng, ne, no, k) {
                f.add_term(i, m, Q::from(rng.gen_range(-2i64..=2)));
            }
        }
    }
    f
}

fn odd_monomial<R: Rng>(rng: &mut R, ne: usize, no: usize, k: u32) -> Option<Mono> {
    if no == 0 || k == 0 {
        return None;
    }
    // one odd variable times an even monomial of degree k − 1
    let base = if k == 1 { Some(Mono::ONE) } else { random::monomial(rng, ne, no, k - 1) }?;
    for _ in 0..10 {
        let j = rng.gen_range(0..no);
        if !base.has_odd(j) {
            return base.mul(&Mono::odd_var(j)).map(|(m, _)| m);
        }
    }
    None
}

/// Kinds of classical seeds supported by [`seed_space`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    /// S = 0.
    Zero,
    /// A cubic in the even coordinates of Ker H.
    KernelCubic,
    /// The Chevalley–Eilenberg action of su(2) on three kernel pairs.
    Su2,
}

/// A space in scrambled coordinates with a QME solution at scale T.
#[derive(Debug, Clone)]
pub struct QmeSeed {
    pub space: OddSymplecticSpace,
    pub block_space: OddSymplecticSpace,
    pub layout: BlockLayout,
    /// Basis change from block to scrambled coordinates.
    pub g: Mat<Q>,
    /// Classical part, scrambled coordinates.
    pub classical: Functional<Q>,
}

/// Random space of dimension `half|half` carrying a classical seed. At least
/// three of the blocks are kernel pairs when `kind` is [`SeedKind::Su2`].
pub fn seed_space<R: Rng>(rng: &mut R, half: usize, kind: SeedKind) -> QmeSeed {
    let mut blocks = Vec::new();
    let mut left = half;
    let n_kernel = match kind {
        SeedKind::Su2 => 3,
        SeedKind::KernelCubic => 1,
        SeedKind::Zero => 0,
    };
    assert!(half >= n_kernel, "space too small for the seed");
    for _ in 0..n_kernel {
        blocks.push(Block::Kernel { w: Q::one() });
        left -= 1;
    }
    while left > 0 {
        let b = random_block(rng, left >= 2);
        left -= match b {
            Block::Acyclic2 { .. } => 2,
            _ => 1,
        };
        blocks.push(b);
    }
    let (block_space, layout) = assemble(&blocks);
    let mut s = Functional::zero(half, half);
    match kind {
        SeedKind::Zero => {}
        SeedKind::KernelCubic => {
            let kev: Vec<usize> = layout.blocks.iter().zip(&layout.even_idx).filter(|(b, _)| matches!(b, Block::Kernel { .. })).map(|(_, e)| e[0]).collect();
            for _ in 0..3 {
                let mut m = Mono::ONE;
                for _ in 0..3 {
                    m = m.mul(&Mono::even_var(kev[rng.gen_range(0..kev.len())])).unwrap().0;
                }
                s.add_term(0, m, Q::from(rng.gen_range(-3i64..=3)));
            }
        }
        SeedKind::Su2 => {
            // S = ½ ε_abc x^a ξ^b ξ^c with (x^a, ξ^a) the kernel pairs
            let xs: Vec<usize> = (0..3).map(|a| layout.even_idx[a][0]).collect();
            let xis: Vec<usize> = (0..3).map(|a| layout.odd_idx[a][0]).collect();
            for (a, b, c) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
                let x = Functional::<Q>::var(half, half, xs[a]);
                let xb = Functional::<Q>::var(half, half, xis[b]);
                let xc = Functional::<Q>::var(half, half, xis[c]);
                s.add_assign(&x.mul(&xb).mul(&xc));
            }
        }
    }
    let g = random_basis_change(rng, half, half, 2 * half);
    let space = block_space.change_basis(&g).expect("valid basis change");
    let classical = fun::change_basis(&s, &g);
    QmeSeed { space, block_space, layout, g, classical }
}

/// Quadratic Hamiltonian h with {h, x^c}_0 = X·x^c for every coordinate
/// function, where (X·f)(v) = d/dt f((1 + tX)v). None if X is not symplectic.
pub fn linear_hamiltonian(space: &OddSymplecticSpace, x: &Mat<Q>) -> Option<Functional<Q>> {
    let (ne, no) = (space.n_even(), space.n_odd());
    let n = ne + no;
    let k0 = space.k0();
    // odd quadratic monomials: even × odd
    let monos: Vec<Functional<Q>> = (0..ne)
        .flat_map(|a| (ne..n).map(move |b| (a, b)))
        .map(|(a, b)| Functional::<Q>::var(ne, no, a).mul(&Functional::var(ne, no, b)))
        .collect();
    // rows: (coordinate c, linear coefficient of variable v)
    let coord = |f: &Functional<Q>, v: usize| f.coeff(0, &f.var_mono(v));
    let mut rows: Vec<Vec<Q>> = Vec::new();
    let mut rhs: Vec<Q> = Vec::new();
    for c in 0..n {
        let xc = Functional::<Q>::var(ne, no, c);
        let brs: Vec<Functional<Q>> = monos.iter().map(|m| fun::bv_bracket(&k0, m, &xc).unwrap()).collect();
        for v in 0..n {
            rows.push(brs.iter().map(|b| coord(b, v)).collect());
            // X·x^c = Σ_v X[c][v] x^v
            rhs.push(x[c][v].clone());
        }
    }
    let m = monos.len();
    let mut aug: Mat<Q> = rows.iter().zip(&rhs).map(|(r, b)| r.iter().cloned().chain(std::iter::once(b.clone())).collect()).collect();
    let (red, pivots) = linalg::rref(&aug);
    if pivots.contains(&m) {
        return None;
    }
    aug = red;
    let mut h = Functional::zero(ne, no);
    for (r, &p) in pivots.iter().enumerate() {
        h.add_assign(&monos[p].scale_q(&aug[r][m]));
    }
    Some(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superspace::Scale;
    use crate::ExpRat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn su2_seed_solves_classical_master_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = seed_space(&mut rng, 4, SeedKind::Su2);
        let k0 = seed.space.k0();
        let r = fun::qme_residual(seed.space.q(), &k0, &seed.classical, Trunc::new(2, 6)).unwrap();
        assert!(r.is_zero(), "{}", r.to_text());
        assert!(!seed.classical.is_zero());
    }

    #[test]
    fn deformed_seed_solves_qme_at_finite_scale() {
        for s in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let kind = [SeedKind::Zero, SeedKind::KernelCubic, SeedKind::Su2, SeedKind::KernelCubic][s as usize];
            let seed = seed_space(&mut rng, 3, kind);
            let trunc = Trunc::new(2, 4);
            let k = seed.space.heat_kernel(&Scale::finite(1, 2)).unwrap();
            let chi = random_chi(&mut rng, 3, 3, trunc, 2).map_coeffs(ExpRat::from_q);
            let s0 = seed.classical.map_coeffs(ExpRat::from_q);
            let s1 = deform(seed.space.q(), &k, &s0, &chi, trunc).unwrap();
            assert_ne!(s1, s0);
            let r = fun::qme_residual(seed.space.q(), &k, &s1, trunc).unwrap();
            assert!(r.is_zero(), "seed {s}: {}", r.to_text());
        }
    }

    #[test]
    fn log1p_inverts_exp() {
        // ħ log(1 + (e^{x³}−1)) at ħ^1 is x³ up to truncation
        let x = Functional::<Q>::var(1, 0, 0);
        let x3 = x.mul(&x).mul(&x);
        let y = x3.add(&x3.mul(&x3).scale_q(&Q::new(1, 2)));
        let l = hbar_log1p(&y, Trunc::new(1, 8));
        assert_eq!(l, x3.shift_hbar(1));
    }
}
