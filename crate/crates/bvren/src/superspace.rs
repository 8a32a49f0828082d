//! Finite-dimensional odd symplectic spaces with a differential and a gauge
//! fixing operator; heat kernels and propagators by exact spectral calculus.
//!
//! Basis vectors are ordered evens first, then odds. Operators act on basis
//! vectors by columns: `M e_b = Σ_a M[a][b] e_a`. A kernel Σ K^{ab} e_a⊗e_b
//! acts by K⋆e = (−1)^{|e|} Σ K′⟨K″, e⟩, so its operator matrix is K·W·D with
//! D = diag((−1)^{|c|}).

use crate::coeff::{Coeff, EpsExpansion, ExpRat, Q};
use crate::linalg::{self, Mat};
use nalgebra::DMatrix;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("matrix {name} has shape {got:?}, expected {want:?}")]
    Shape { name: &'static str, got: (usize, usize), want: (usize, usize) },
    #[error("pairing must couple even with odd vectors only (entry {0},{1})")]
    PairingNotOdd(usize, usize),
    #[error("pairing is not graded antisymmetric at ({0},{1})")]
    PairingNotAntisymmetric(usize, usize),
    #[error("pairing is degenerate")]
    PairingDegenerate,
    #[error("n_even must equal n_odd for a non-degenerate odd pairing")]
    Unbalanced,
    #[error("{0} is not an odd operator")]
    NotOdd(&'static str),
    #[error("{0} does not square to zero")]
    NotSquareZero(&'static str),
    #[error("Q is not skew self-adjoint at ({0},{1})")]
    QNotSkew(usize, usize),
    #[error("QGF is not self-adjoint at ({0},{1})")]
    GfNotSelfAdjoint(usize, usize),
    #[error("H does not commute with {0}")]
    HNotCentral(&'static str),
    #[error("Im Q + Im QGF + Ker H has dimension {got}, expected {want}")]
    NoHodgeDecomposition { got: usize, want: usize },
    #[error("scale must satisfy 0 <= eps < T (got eps={eps}, T={t})")]
    BadScales { eps: String, t: String },
    #[error("negative time {0}")]
    NegativeTime(String),
    #[error("H has no rational diagonalization; use the f64 routines")]
    NoExactSpectrum,
    #[error("H has a negative eigenvalue; T = infinity is not defined")]
    NegativeSpectrum,
    #[error("too many variables: {0}")]
    TooLarge(String),
    #[error("config: {0}")]
    Config(String),
}

/// A cutoff scale: a nonnegative rational or +∞.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scale {
    Finite(Q),
    Infinite,
}

impl Scale {
    pub fn finite(n: i64, d: i64) -> Scale {
        Scale::Finite(Q::new(n, d))
    }

    fn gt(&self, q: &Q) -> bool {
        match self {
            Scale::Finite(t) => t > q,
            Scale::Infinite => true,
        }
    }

    fn exp_neg(&self, lambda: &Q) -> Result<ExpRat, SpaceError> {
        match self {
            Scale::Finite(t) => Ok(ExpRat::exp_neg(t.mul(lambda))),
            Scale::Infinite => match lambda.signum() {
                1 => Ok(ExpRat::zero()),
                0 => Ok(ExpRat::one()),
                _ => Err(SpaceError::NegativeSpectrum),
            },
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::Finite(q) => write!(f, "{q}"),
            Scale::Infinite => write!(f, "inf"),
        }
    }
}

/// Element of E⊗E written as a matrix of coefficients K^{ab}.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<C> {
    pub tensor: Mat<C>,
    pub odd: bool,
}

impl<C: Coeff> Kernel<C> {
    pub fn zero(n: usize, odd: bool) -> Self {
        Kernel { tensor: linalg::zeros(n, n), odd }
    }

    pub fn dim(&self) -> usize {
        self.tensor.len()
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.odd, o.odd, "adding kernels of different parity");
        Kernel { tensor: linalg::madd(&self.tensor, &o.tensor), odd: self.odd }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.odd, o.odd, "subtracting kernels of different parity");
        Kernel { tensor: linalg::msub(&self.tensor, &o.tensor), odd: self.odd }
    }

    pub fn neg(&self) -> Self {
        Kernel { tensor: linalg::mmap(&self.tensor, |x| x.neg()), odd: self.odd }
    }

    /// Left multiplication of every entry by `c`; `flips` toggles the parity flag
    /// (for odd scalars such as δ).
    pub fn scale(&self, c: &C, flips: bool) -> Self {
        Kernel { tensor: linalg::mscale(&self.tensor, c), odd: self.odd ^ flips }
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Kernel<D> {
        Kernel { tensor: linalg::mmap(&self.tensor, f), odd: self.odd }
    }

    pub fn is_zero(&self) -> bool {
        linalg::is_zero_mat(&self.tensor)
    }

    /// K^{ba} = (−1)^{|a||b|} K^{ab}.
    pub fn is_graded_symmetric(&self, n_even: usize) -> bool {
        let n = self.dim();
        for a in 0..n {
            for b in 0..n {
                let sign_odd = a >= n_even && b >= n_even;
                let want = if sign_odd { self.tensor[a][b].neg() } else { self.tensor[a][b].clone() };
                if self.tensor[b][a] != want {
                    return false;
                }
            }
        }
        true
    }
}

/// Eigenvalues of H with their spectral projectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigen: Vec<(Q, Mat<Q>)>,
}

#[derive(Debug, Clone)]
pub struct OddSymplecticSpace {
    n_even: usize,
    n_odd: usize,
    pairing: Mat<Q>,
    q: Mat<Q>,
    qgf: Mat<Q>,
    h: Mat<Q>,
    dw_inv: Mat<Q>,
    spectrum: Option<Spectrum>,
}

fn check_shape(name: &'static str, m: &Mat<Q>, n: usize) -> Result<(), SpaceError> {
    let cols = m.first().map_or(0, |r| r.len());
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(SpaceError::Shape { name, got: (m.len(), cols), want: (n, n) });
    }
    Ok(())
}

impl OddSymplecticSpace {
    pub fn new(n_even: usize, n_odd: usize, pairing: Mat<Q>, q: Mat<Q>, qgf: Mat<Q>) -> Result<Self, SpaceError> {
        let n = n_even + n_odd;
        check_shape("pairing", &pairing, n)?;
        check_shape("Q", &q, n)?;
        check_shape("QGF", &qgf, n)?;
        if n_even != n_odd {
            return Err(SpaceError::Unbalanced);
        }
        let odd = |i: usize| i >= n_even;
        for a in 0..n {
            for b in 0..n {
                if odd(a) == odd(b) && !pairing[a][b].is_zero() {
                    return Err(SpaceError::PairingNotOdd(a, b));
                }
                // |a||b| = 0 whenever the entry can be nonzero
                if pairing[a][b] != pairing[b][a].neg() {
                    return Err(SpaceError::PairingNotAntisymmetric(a, b));
                }
            }
        }
        let winv = linalg::inverse(&pairing).ok_or(SpaceError::PairingDegenerate)?;
        for (name, m) in [("Q", &q), ("QGF", &qgf)] {
            for a in 0..n {
                for b in 0..n {
                    if odd(a) == odd(b) && !m[a][b].is_zero() {
                        return Err(SpaceError::NotOdd(name));
                    }
                }
            }
            if !linalg::is_zero_mat(&linalg::matmul(m, m)) {
                return Err(SpaceError::NotSquareZero(name));
            }
        }
        // ⟨Qa,b⟩ = (QᵀW)[a][b]
        let qtw = linalg::matmul(&linalg::transpose(&q), &pairing);
        let wq = linalg::matmul(&pairing, &q);
        let gtw = linalg::matmul(&linalg::transpose(&qgf), &pairing);
        let wg = linalg::matmul(&pairing, &qgf);
        for a in 0..n {
            for b in 0..n {
                let s = if odd(a) { wq[a][b].neg() } else { wq[a][b].clone() };
                if !qtw[a][b].add(&s).is_zero() {
                    return Err(SpaceError::QNotSkew(a, b));
                }
                let s = if odd(a) { wg[a][b].neg() } else { wg[a][b].clone() };
                if gtw[a][b] != s {
                    return Err(SpaceError::GfNotSelfAdjoint(a, b));
                }
            }
        }
        let h = linalg::madd(&linalg::matmul(&q, &qgf), &linalg::matmul(&qgf, &q));
        if linalg::matmul(&h, &q) != linalg::matmul(&q, &h) {
            return Err(SpaceError::HNotCentral("Q"));
        }
        if linalg::matmul(&h, &qgf) != linalg::matmul(&qgf, &h) {
            return Err(SpaceError::HNotCentral("QGF"));
        }
        let ker = linalg::nullspace(&h, n);
        let mut cols: Vec<Vec<Q>> = Vec::new();
        for m in [&q, &qgf] {
            for j in 0..n {
                cols.push((0..n).map(|i| m[i][j].clone()).collect());
            }
        }
        cols.extend(ker.iter().cloned());
        let span = linalg::rank(&linalg::columns_to_mat(&cols, n));
        let sum = linalg::rank(&q) + linalg::rank(&qgf) + ker.len();
        if span != n || sum != n {
            return Err(SpaceError::NoHodgeDecomposition { got: span.min(sum), want: n });
        }
        let d = Self::d_matrix(n_even, n);
        let dw_inv = linalg::matmul(&d, &winv);
        let mut s = OddSymplecticSpace { n_even, n_odd, pairing, q, qgf, h, dw_inv, spectrum: None };
        s.spectrum = s.compute_spectrum();
        Ok(s)
    }

    fn d_matrix(n_even: usize, n: usize) -> Mat<Q> {
        let mut d = linalg::identity::<Q>(n);
        for (i, row) in d.iter_mut().enumerate().skip(n_even) {
            row[i] = Q::from(-1);
        }
        d
    }

    pub fn n_even(&self) -> usize {
        self.n_even
    }
    pub fn n_odd(&self) -> usize {
        self.n_odd
    }
    pub fn dim(&self) -> usize {
        self.n_even + self.n_odd
    }
    pub fn is_odd(&self, i: usize) -> bool {
        i >= self.n_even
    }
    pub fn pairing(&self) -> &Mat<Q> {
        &self.pairing
    }
    pub fn q(&self) -> &Mat<Q> {
        &self.q
    }
    pub fn qgf(&self) -> &Mat<Q> {
        &self.qgf
    }
    pub fn h(&self) -> &Mat<Q> {
        &self.h
    }
    pub fn spectrum(&self) -> Option<&Spectrum> {
        self.spectrum.as_ref()
    }
    /// D·W⁻¹, the tensor of the identity operator.
    pub fn dw_inv(&self) -> &Mat<Q> {
        &self.dw_inv
    }

    fn compute_spectrum(&self) -> Option<Spectrum> {
        let n = self.dim();
        if n == 0 {
            return Some(Spectrum { eigen: Vec::new() });
        }
        let hf = linalg::to_dmatrix(&self.h);
        let ev = hf.complex_eigenvalues();
        let mut cands: Vec<Q> = Vec::new();
        for z in ev.iter() {
            if z.im.abs() > 1e-7 {
                return None;
            }
            let r = Q::approximate(z.re, 1_000_000)?;
            if !cands.contains(&r) {
                cands.push(r);
            }
        }
        cands.sort();
        let mut total = 0;
        for l in &cands {
            let shifted = linalg::msub(&self.h, &linalg::mscale(&linalg::identity(n), l));
            total += n - linalg::rank(&shifted);
        }
        if total != n {
            return None;
        }
        let mut eigen = Vec::new();
        for l in &cands {
            let mut p = linalg::identity::<Q>(n);
            for mu in cands.iter().filter(|m| *m != l) {
                let f = linalg::msub(&self.h, &linalg::mscale(&linalg::identity(n), mu));
                p = linalg::mscale(&linalg::matmul(&p, &f), &l.sub(mu).inv().expect("distinct"));
            }
            eigen.push((l.clone(), p));
        }
        Some(Spectrum { eigen })
    }

    fn exact_spectrum(&self) -> Result<&Spectrum, SpaceError> {
        self.spectrum.as_ref().ok_or(SpaceError::NoExactSpectrum)
    }

    /// The operator matrix of K⋆.
    pub fn star_matrix<C: Coeff>(&self, k: &Kernel<C>) -> Mat<C> {
        let wd = linalg::matmul(&self.pairing, &Self::d_matrix(self.n_even, self.dim()));
        linalg::matmul(&k.tensor, &linalg::mmap(&wd, C::from_q))
    }

    /// Tensor of the operator M, i.e. the kernel K with K⋆ = M.
    pub fn kernel_of_operator<C: Coeff>(&self, m: &Mat<C>, odd: bool) -> Kernel<C> {
        Kernel { tensor: linalg::matmul(m, &linalg::mmap(&self.dw_inv, C::from_q)), odd }
    }

    /// K_0 = D W⁻¹, the kernel of the identity.
    pub fn k0(&self) -> Kernel<Q> {
        Kernel { tensor: self.dw_inv.clone(), odd: true }
    }

    /// K_t with K_t⋆ = e^{−tH}; t = ∞ gives the projection onto Ker H.
    pub fn heat_kernel(&self, t: &Scale) -> Result<Kernel<ExpRat>, SpaceError> {
        if let Scale::Finite(t) = t {
            if t.signum() < 0 {
                return Err(SpaceError::NegativeTime(t.to_string()));
            }
        }
        let sp = self.exact_spectrum()?;
        let n = self.dim();
        let mut acc: Mat<ExpRat> = linalg::zeros(n, n);
        for (l, pr) in &sp.eigen {
            let e = t.exp_neg(l)?;
            if e.is_zero() {
                continue;
            }
            let m = linalg::matmul(pr, &self.dw_inv);
            acc = linalg::madd(&acc, &linalg::mmap(&m, |x| e.scale_q(x)));
        }
        Ok(Kernel { tensor: acc, odd: true })
    }

    /// P(ε,T) = ∫_ε^T (QGF⊗1) K_t dt.
    pub fn propagator(&self, eps: &Q, t: &Scale) -> Result<Kernel<ExpRat>, SpaceError> {
        if eps.signum() < 0 || !t.gt(eps) {
            return Err(SpaceError::BadScales { eps: eps.to_string(), t: t.to_string() });
        }
        let sp = self.exact_spectrum()?;
        let n = self.dim();
        let mut acc: Mat<ExpRat> = linalg::zeros(n, n);
        for (l, pr) in &sp.eigen {
            if l.is_zero() {
                continue;
            }
            let f = ExpRat::exp_neg(eps.mul(l)).sub(&t.exp_neg(l)?).scale_q(&l.inv().expect("nonzero"));
            let m = linalg::matmul(&linalg::matmul(&self.qgf, pr), &self.dw_inv);
            acc = linalg::madd(&acc, &linalg::mmap(&m, |x| f.scale_q(x)));
        }
        Ok(Kernel { tensor: acc, odd: false })
    }

    fn exp_series(l: &Q, order: u32) -> EpsExpansion<ExpRat> {
        let mut e = EpsExpansion::zero();
        let mut c = Q::one();
        for j in 0..=order {
            e.push(2 * j as i32, 0, ExpRat::from_q(&c));
            c = c.mul(&l.neg()).mul(&Q::new(1, j as i64 + 1));
        }
        e
    }

    /// P(ε,T) with ε kept symbolic, as a Taylor series in ε through `order`.
    pub fn propagator_eps_series(&self, t: &Scale, order: u32) -> Result<Kernel<EpsExpansion<ExpRat>>, SpaceError> {
        let sp = self.exact_spectrum()?;
        let n = self.dim();
        let mut acc: Mat<EpsExpansion<ExpRat>> = linalg::zeros(n, n);
        for (l, pr) in &sp.eigen {
            if l.is_zero() {
                continue;
            }
            let f = Self::exp_series(l, order)
                .sub(&EpsExpansion::constant(t.exp_neg(l)?))
                .scale_q(&l.inv().expect("nonzero"));
            let m = linalg::matmul(&linalg::matmul(&self.qgf, pr), &self.dw_inv);
            acc = linalg::madd(&acc, &linalg::mmap(&m, |x| f.scale_q(x)));
        }
        Ok(Kernel { tensor: acc, odd: false })
    }

    /// K_ε as a Taylor series in ε through `order`.
    pub fn heat_kernel_eps_series(&self, order: u32) -> Result<Kernel<EpsExpansion<ExpRat>>, SpaceError> {
        let sp = self.exact_spectrum()?;
        let n = self.dim();
        let mut acc: Mat<EpsExpansion<ExpRat>> = linalg::zeros(n, n);
        for (l, pr) in &sp.eigen {
            let f = Self::exp_series(l, order);
            let m = linalg::matmul(pr, &self.dw_inv);
            acc = linalg::madd(&acc, &linalg::mmap(&m, |x| f.scale_q(x)));
        }
        Ok(Kernel { tensor: acc, odd: true })
    }

    /// Floating-point heat kernel through the matrix exponential; works for
    /// non-diagonalizable H as well.
    pub fn heat_kernel_f64(&self, t: f64) -> Result<Kernel<f64>, SpaceError> {
        if t < 0.0 {
            return Err(SpaceError::NegativeTime(t.to_string()));
        }
        if t.is_infinite() {
            return Ok(self.heat_kernel(&Scale::Infinite)?.map(|x| x.to_f64()));
        }
        let h = linalg::to_dmatrix(&self.h);
        let e = linalg::expm(&(-h * t));
        Ok(Kernel { tensor: linalg::from_dmatrix(&(e * linalg::to_dmatrix(&self.dw_inv))), odd: true })
    }

    /// Floating-point propagator. Finite T uses the block-exponential identity
    /// exp([[−H, 1],[0, 0]]τ) = [[e^{−τH}, ∫_0^τ e^{−sH}ds],[0, 1]].
    pub fn propagator_f64(&self, eps: f64, t: f64) -> Result<Kernel<f64>, SpaceError> {
        if !(eps >= 0.0 && t > eps) {
            return Err(SpaceError::BadScales { eps: eps.to_string(), t: t.to_string() });
        }
        if t.is_infinite() {
            let sp = self.exact_spectrum()?;
            let n = self.dim();
            let mut acc = DMatrix::<f64>::zeros(n, n);
            for (l, pr) in &sp.eigen {
                if l.is_zero() {
                    continue;
                }
                let lf = l.to_f64();
                if lf < 0.0 {
                    return Err(SpaceError::NegativeSpectrum);
                }
                acc += linalg::to_dmatrix(pr) * ((-eps * lf).exp() / lf);
            }
            let p = linalg::to_dmatrix(&self.qgf) * acc * linalg::to_dmatrix(&self.dw_inv);
            return Ok(Kernel { tensor: linalg::from_dmatrix(&p), odd: false });
        }
        let n = self.dim();
        let h = linalg::to_dmatrix(&self.h);
        let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&(-&h * (t - eps)));
        big.view_mut((0, n), (n, n)).copy_from(&(DMatrix::<f64>::identity(n, n) * (t - eps)));
        let e = linalg::expm(&big);
        let integral = e.view((0, n), (n, n)).into_owned();
        let start = linalg::expm(&(-&h * eps));
        let p = linalg::to_dmatrix(&self.qgf) * start * integral * linalg::to_dmatrix(&self.dw_inv);
        Ok(Kernel { tensor: linalg::from_dmatrix(&p), odd: false })
    }

    /// (Q⊗1 + 1⊗Q) K with the Koszul sign of the first index.
    pub fn tensor_differential<C: Coeff>(&self, k: &Kernel<C>) -> Kernel<C> {
        let n = self.dim();
        let mut out = linalg::zeros::<C>(n, n);
        for c in 0..n {
            for d in 0..n {
                let mut acc = C::zero();
                for a in 0..n {
                    if !self.q[c][a].is_zero() {
                        acc.add_assign(&k.tensor[a][d].scale_q(&self.q[c][a]));
                    }
                }
                let mut second = C::zero();
                for b in 0..n {
                    if !self.q[d][b].is_zero() {
                        second.add_assign(&k.tensor[c][b].scale_q(&self.q[d][b]));
                    }
                }
                if self.is_odd(c) {
                    second = second.neg();
                }
                out[c][d] = acc.add(&second);
            }
        }
        Kernel { tensor: out, odd: !k.odd }
    }

    /// Basis of Ker H split by parity, with the restricted pairing.
    pub fn cohomology_basis(&self) -> CohomologyBasis {
        let n = self.dim();
        let ker = linalg::nullspace(&self.h, n);
        // H preserves parity, so project each null vector onto its even and odd parts
        let mut even: Vec<Vec<Q>> = Vec::new();
        let mut odd: Vec<Vec<Q>> = Vec::new();
        for v in &ker {
            let ev: Vec<Q> = (0..n).map(|i| if self.is_odd(i) { Q::zero() } else { v[i].clone() }).collect();
            let od: Vec<Q> = (0..n).map(|i| if self.is_odd(i) { v[i].clone() } else { Q::zero() }).collect();
            for (dst, w) in [(&mut even, ev), (&mut odd, od)] {
                if w.iter().all(|x| x.is_zero()) {
                    continue;
                }
                let mut trial = dst.clone();
                trial.push(w.clone());
                if linalg::rank(&linalg::columns_to_mat(&trial, n)) == trial.len() {
                    dst.push(w);
                }
            }
        }
        let mut cols = even.clone();
        cols.extend(odd.iter().cloned());
        let b = linalg::columns_to_mat(&cols, n);
        let pairing = linalg::matmul(&linalg::matmul(&linalg::transpose(&b), &self.pairing), &b);
        CohomologyBasis { n_even: even.len(), n_odd: odd.len(), basis: b, pairing }
    }

    /// The space obtained from the new basis e′_i = Σ_j g[j][i] e_j (g parity preserving).
    pub fn change_basis(&self, g: &Mat<Q>) -> Result<Self, SpaceError> {
        let gi = linalg::inverse(g).ok_or(SpaceError::PairingDegenerate)?;
        let w = linalg::matmul(&linalg::matmul(&linalg::transpose(g), &self.pairing), g);
        let q = linalg::matmul(&linalg::matmul(&gi, &self.q), g);
        let qgf = linalg::matmul(&linalg::matmul(&gi, &self.qgf), g);
        Self::new(self.n_even, self.n_odd, w, q, qgf)
    }

    /// Same pairing and Q, different gauge fixing.
    pub fn with_gauge_fixing(&self, qgf: Mat<Q>) -> Result<Self, SpaceError> {
        Self::new(self.n_even, self.n_odd, self.pairing.clone(), self.q.clone(), qgf)
    }

    /// Plain-text form readable by [`OddSymplecticSpace::parse`].
    pub fn to_config(&self) -> String {
        let fmt = |m: &Mat<Q>| {
            m.iter()
                .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("; ")
        };
        format!(
            "n_even = {}\nn_odd = {}\npairing = {}\nq = {}\nqgf = {}\n",
            self.n_even,
            self.n_odd,
            fmt(&self.pairing),
            fmt(&self.q),
            fmt(&self.qgf)
        )
    }

    /// Parses `key = value` lines; matrices are row-major with rows separated
    /// by `;` and entries by whitespace. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SpaceError> {
        let kv = parse_key_values(text);
        let get = |k: &str| kv.get(k).ok_or_else(|| SpaceError::Config(format!("missing key {k}")));
        let ne: usize = get("n_even")?.parse().map_err(|_| SpaceError::Config("bad n_even".into()))?;
        let no: usize = get("n_odd")?.parse().map_err(|_| SpaceError::Config("bad n_odd".into()))?;
        let w = parse_matrix(get("pairing")?)?;
        let q = parse_matrix(get("q")?)?;
        let g = parse_matrix(get("qgf")?)?;
        Self::new(ne, no, w, q, g)
    }
}

pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if let Some((k, v)) = line.split_once('=') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    out
}

pub fn parse_matrix(s: &str) -> Result<Mat<Q>, SpaceError> {
    s.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            r.split_whitespace()
                .map(|x| x.parse::<Q>().map_err(|e| SpaceError::Config(e.to_string())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CohomologyBasis {
    pub n_even: usize,
    pub n_odd: usize,
    /// n × (n_even + n_odd), columns are the basis vectors.
    pub basis: Mat<Q>,
    pub pairing: Mat<Q>,
}

impl CohomologyBasis {
    /// Ker H as a space in its own right (Q and QGF vanish there).
    pub fn space(&self) -> Result<OddSymplecticSpace, SpaceError> {
        let m = self.n_even + self.n_odd;
        OddSymplecticSpace::new(self.n_even, self.n_odd, self.pairing.clone(), linalg::zeros(m, m), linalg::zeros(m, m))
    }
}

// ---------------------------------------------------------------------------
// Building blocks for random valid spaces.

#[derive(Debug, Clone)]
pub enum Block {
    /// 1|1: Qe₀ = λe₁, QGF e₁ = e₀, ⟨e₀,e₁⟩ = w.
    Acyclic1 { lambda: Q, w: Q },
    /// 2|2: even {g, f*}, odd {f, g*}; Qf = λg, Qg* = −λf*, QGF g = f,
    /// QGF f* = −g*, ⟨g,g*⟩ = ⟨f*,f⟩ = 1.
    Acyclic2 { lambda: Q },
    /// 1|1 Darboux pair with Q = QGF = 0, ⟨e₀,e₁⟩ = w.
    Kernel { w: Q },
}

impl Block {
    fn dims(&self) -> usize {
        match self {
            Block::Acyclic1 { .. } | Block::Kernel { .. } => 1,
            Block::Acyclic2 { .. } => 2,
        }
    }
}

/// Where each block's vectors landed in the assembled basis.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    pub blocks: Vec<Block>,
    /// For each block, its global even indices then odd indices.
    pub even_idx: Vec<Vec<usize>>,
    pub odd_idx: Vec<Vec<usize>>,
}

/// Direct sum of blocks in block coordinates.
pub fn assemble(blocks: &[Block]) -> (OddSymplecticSpace, BlockLayout) {
    let half: usize = blocks.iter().map(|b| b.dims()).sum();
    let n = 2 * half;
    let mut w = linalg::zeros::<Q>(n, n);
    let mut q = linalg::zeros::<Q>(n, n);
    let mut g = linalg::zeros::<Q>(n, n);
    let mut even_idx = Vec::new();
    let mut odd_idx = Vec::new();
    let mut off = 0;
    for b in blocks {
        let d = b.dims();
        let ev: Vec<usize> = (off..off + d).collect();
        let od: Vec<usize> = (half + off..half + off + d).collect();
        let mut pair = |a: usize, c: usize, v: Q| {
            w[a][c] = v.clone();
            w[c][a] = v.neg();
        };
        match b {
            Block::Acyclic1 { lambda, w: wv } => {
                let (e0, e1) = (ev[0], od[0]);
                pair(e0, e1, wv.clone());
                q[e1][e0] = lambda.clone();
                g[e0][e1] = Q::one();
            }
            Block::Acyclic2 { lambda } => {
                let (gg, fs) = (ev[0], ev[1]);
                let (f, gs) = (od[0], od[1]);
                pair(gg, gs, Q::one());
                pair(fs, f, Q::one());
                q[gg][f] = lambda.clone();
                q[fs][gs] = lambda.neg();
                g[f][gg] = Q::one();
                g[gs][fs] = Q::from(-1);
            }
            Block::Kernel { w: wv } => {
                pair(ev[0], od[0], wv.clone());
            }
        }
        even_idx.push(ev);
        odd_idx.push(od);
        off += d;
    }
    let s = OddSymplecticSpace::new(half, half, w, q, g).expect("blocks assemble to a valid space");
    (s, BlockLayout { blocks: blocks.to_vec(), even_idx, odd_idx })
}

/// Random parity-preserving unimodular integer matrix built from a few
/// elementary row operations inside each parity sector.
pub fn random_basis_change<R: Rng>(rng: &mut R, n_even: usize, n_odd: usize, ops: usize) -> Mat<Q> {
    let n = n_even + n_odd;
    let mut g = linalg::identity::<Q>(n);
    for _ in 0..ops {
        let (lo, len) = if rng.gen_bool(0.5) { (0, n_even) } else { (n_even, n_odd) };
        if len < 2 {
            continue;
        }
        let i = lo + rng.gen_range(0..len);
        let mut j = lo + rng.gen_range(0..len);
        while j == i {
            j = lo + rng.gen_range(0..len);
        }
        let c = Q::from([-1i64, 1, 2, -2][rng.gen_range(0..4)]);
        // column op: e′_j += c e′_i
        for row in g.iter_mut() {
            let t = row[i].mul(&c);
            row[j] = row[j].add(&t);
        }
    }
    g
}

pub fn random_block<R: Rng>(rng: &mut R, allow_2: bool) -> Block {
    let lambdas = [Q::from(1), Q::from(2), Q::from(3), Q::new(1, 2)];
    let ws = [Q::from(1), Q::from(-1), Q::from(2)];
    let lambda = lambdas[rng.gen_range(0..lambdas.len())].clone();
    match rng.gen_range(0..if allow_2 { 3 } else { 2 }) {
        0 => Block::Acyclic1 { lambda, w: ws[rng.gen_range(0..ws.len())].clone() },
        1 => Block::Kernel { w: ws[rng.gen_range(0..ws.len())].clone() },
        _ => Block::Acyclic2 { lambda },
    }
}

/// A random valid space of total dimension `half|half`, in scrambled coordinates.
/// Returns the space, the block-coordinate space, its layout and the basis change.
pub fn random_space<R: Rng>(rng: &mut R, half: usize) -> (OddSymplecticSpace, OddSymplecticSpace, BlockLayout, Mat<Q>) {
    let mut blocks = Vec::new();
    let mut left = half;
    while left > 0 {
        let b = random_block(rng, left >= 2);
        left -= b.dims();
        blocks.push(b);
    }
    let (s, layout) = assemble(&blocks);
    let g = random_basis_change(rng, half, half, 2 * half);
    let s2 = s.change_basis(&g).expect("basis change of a valid space is valid");
    (s2, s, layout, g)
}
