//! Truncated functionals on a super vector space, with coefficients in a
//! graded-commutative ring, and the BV operators acting on them.
//!
//! A functional is Σ ħ^i c·m with m a monomial in the coordinate functions
//! x^a (evens first, then odds) and c written to the left of m. Odd
//! coordinates appear in increasing order. Derivatives are left derivatives,
//! so ∂_a(c m) = σ^{|a|}(c) ∂_a m.

use crate::coeff::{Coeff, Q};
use crate::linalg::Mat;
use crate::superspace::{CohomologyBasis, Kernel};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

const EBITS: u32 = 5;
const EMASK: u128 = (1 << EBITS) - 1;
pub const MAX_EVEN_VARS: usize = 25;
pub const MAX_ODD_VARS: usize = 64;
pub const MAX_EXPONENT: u32 = EMASK as u32;

const fn carry_mask() -> u128 {
    let mut m = 0u128;
    let mut k = 1;
    while k <= MAX_EVEN_VARS {
        m |= 1u128 << (EBITS as usize * k);
        k += 1;
    }
    m
}
const CARRY: u128 = carry_mask();

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("at most {MAX_EVEN_VARS} even and {MAX_ODD_VARS} odd variables are supported (got {0}|{1})")]
    TooManyVariables(usize, usize),
    #[error("kernel is not graded symmetric")]
    NotSymmetric,
    #[error("kernel has the wrong parity for this operation")]
    WrongParity,
    #[error("dimension mismatch: functional has {0} variables, kernel {1}")]
    DimMismatch(usize, usize),
    #[error("action is not at least cubic modulo hbar: component ({0},{1}) is nonzero")]
    NotCubic(u32, u32),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Packed monomial: 5 bits of exponent per even variable, one bit per odd variable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Mono {
    pub ev: u128,
    pub od: u64,
}

impl Mono {
    pub const ONE: Mono = Mono { ev: 0, od: 0 };

    pub fn even_var(i: usize) -> Mono {
        Mono { ev: 1u128 << (EBITS as usize * i), od: 0 }
    }

    pub fn odd_var(j: usize) -> Mono {
        Mono { ev: 0, od: 1u64 << j }
    }

    pub fn exp(&self, i: usize) -> u32 {
        ((self.ev >> (EBITS as usize * i)) & EMASK) as u32
    }

    pub fn has_odd(&self, j: usize) -> bool {
        self.od >> j & 1 == 1
    }

    pub fn odd_degree(&self) -> u32 {
        self.od.count_ones()
    }

    pub fn degree(&self) -> u32 {
        let mut d = self.od.count_ones();
        let mut e = self.ev;
        while e != 0 {
            d += (e & EMASK) as u32;
            e >>= EBITS;
        }
        d
    }

    pub fn is_odd(&self) -> bool {
        self.od.count_ones() % 2 == 1
    }

    /// m1·m2 = ±(combined monomial); `None` if an odd variable repeats.
    pub fn mul(&self, o: &Mono) -> Option<(Mono, bool)> {
        if self.od & o.od != 0 {
            return None;
        }
        let s = self.ev.wrapping_add(o.ev);
        assert!((s ^ self.ev ^ o.ev) & CARRY == 0, "even exponent exceeds {MAX_EXPONENT}");
        // move each odd variable of o left past the larger ones of self
        let mut neg = false;
        let mut b = o.od;
        while b != 0 {
            let j = b.trailing_zeros();
            let above = if j >= 63 { 0 } else { self.od >> (j + 1) };
            neg ^= above.count_ones() % 2 == 1;
            b &= b - 1;
        }
        Some((Mono { ev: s, od: self.od | o.od }, neg))
    }

    /// ∂/∂x^i for an even variable: (exponent, lowered monomial).
    pub fn d_even(&self, i: usize) -> Option<(u32, Mono)> {
        let e = self.exp(i);
        if e == 0 {
            return None;
        }
        Some((e, Mono { ev: self.ev - (1u128 << (EBITS as usize * i)), od: self.od }))
    }

    /// Left derivative in odd variable j: (sign is negative, lowered monomial).
    pub fn d_odd(&self, j: usize) -> Option<(bool, Mono)> {
        if !self.has_odd(j) {
            return None;
        }
        let below = self.od & ((1u64 << j) - 1);
        Some((below.count_ones() % 2 == 1, Mono { ev: self.ev, od: self.od & !(1u64 << j) }))
    }

    pub fn format(&self, ne: usize, no: usize) -> String {
        let mut parts = Vec::new();
        for i in 0..ne {
            match self.exp(i) {
                0 => {}
                1 => parts.push(format!("x{i}")),
                e => parts.push(format!("x{i}^{e}")),
            }
        }
        for j in 0..no {
            if self.has_odd(j) {
                parts.push(format!("y{j}"));
            }
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }

    pub fn parse(s: &str, ne: usize, no: usize) -> Result<Mono, String> {
        let s = s.trim();
        if s == "1" {
            return Ok(Mono::ONE);
        }
        let mut m = Mono::ONE;
        let mut last_odd: Option<usize> = None;
        for f in s.split('*') {
            let f = f.trim();
            let (name, e) = match f.split_once('^') {
                Some((n, e)) => (n, e.parse::<u32>().map_err(|_| format!("bad exponent in {f}"))?),
                None => (f, 1),
            };
            let idx: usize = name[1..].parse().map_err(|_| format!("bad variable {name}"))?;
            match &name[..1] {
                "x" if idx < ne => {
                    if e > MAX_EXPONENT || m.exp(idx) + e > MAX_EXPONENT {
                        return Err("exponent too large".into());
                    }
                    m.ev += (e as u128) << (EBITS as usize * idx);
                }
                "y" if idx < no => {
                    if e != 1 || m.has_odd(idx) || last_odd.is_some_and(|l| l >= idx) {
                        return Err(format!("odd variables must appear once, in increasing order: {f}"));
                    }
                    last_odd = Some(idx);
                    m.od |= 1u64 << idx;
                }
                _ => return Err(format!("unknown variable {name}")),
            }
        }
        Ok(m)
    }
}

/// Finite truncation: (i,k) is kept when i ≤ i_max and 2i + k ≤ 2 i_max + k_max.
///
/// The weight 2i + k cannot increase along the flow, so this set is closed
/// under every operation used here and contains (i_max, k_max).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trunc {
    pub i_max: u32,
    pub k_max: u32,
}

impl Default for Trunc {
    fn default() -> Self {
        Trunc { i_max: 3, k_max: 8 }
    }
}

impl Trunc {
    pub fn new(i_max: u32, k_max: u32) -> Self {
        Trunc { i_max, k_max }
    }

    pub fn weight(&self) -> u32 {
        2 * self.i_max + self.k_max
    }

    pub fn contains(&self, i: u32, k: u32) -> bool {
        i <= self.i_max && 2 * i + k <= self.weight()
    }

    /// All labels in lexicographic order.
    pub fn labels(&self) -> Vec<(u32, u32)> {
        let mut v = Vec::new();
        for i in 0..=self.i_max {
            for k in 0..=(self.weight() - 2 * i) {
                v.push((i, k));
            }
        }
        v
    }
}

type Comp<C> = BTreeMap<Mono, C>;

#[derive(Clone, PartialEq)]
pub struct Functional<C> {
    ne: usize,
    no: usize,
    comps: BTreeMap<(u32, u32), Comp<C>>,
}

impl<C: Coeff> std::fmt::Debug for Functional<C> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

fn push_term<C: Coeff>(comp: &mut Comp<C>, m: Mono, c: C) {
    if c.is_zero() {
        return;
    }
    match comp.get_mut(&m) {
        Some(x) => {
            x.add_assign(&c);
            if x.is_zero() {
                comp.remove(&m);
            }
        }
        None => {
            comp.insert(m, c);
        }
    }
}

impl<C: Coeff> Functional<C> {
    pub fn zero(ne: usize, no: usize) -> Self {
        assert!(ne <= MAX_EVEN_VARS && no <= MAX_ODD_VARS, "{}", FunctionalError::TooManyVariables(ne, no));
        Functional { ne, no, comps: BTreeMap::new() }
    }

    pub fn n_even(&self) -> usize {
        self.ne
    }
    pub fn n_odd(&self) -> usize {
        self.no
    }
    pub fn n_vars(&self) -> usize {
        self.ne + self.no
    }

    pub fn is_odd_var(&self, a: usize) -> bool {
        a >= self.ne
    }

    pub fn var_mono(&self, a: usize) -> Mono {
        if a < self.ne {
            Mono::even_var(a)
        } else {
            Mono::odd_var(a - self.ne)
        }
    }

    /// The coordinate function x^a.
    pub fn var(ne: usize, no: usize, a: usize) -> Self {
        let mut f = Self::zero(ne, no);
        let m = f.var_mono(a);
        f.add_term(0, m, C::one());
        f
    }

    pub fn constant(ne: usize, no: usize, i: u32, c: C) -> Self {
        let mut f = Self::zero(ne, no);
        f.add_term(i, Mono::ONE, c);
        f
    }

    pub fn add_term(&mut self, i: u32, m: Mono, c: C) {
        if c.is_zero() {
            return;
        }
        let k = m.degree();
        let comp = self.comps.entry((i, k)).or_default();
        push_term(comp, m, c);
        if comp.is_empty() {
            self.comps.remove(&(i, k));
        }
    }

    pub fn coeff(&self, i: u32, m: &Mono) -> C {
        self.comps.get(&(i, m.degree())).and_then(|c| c.get(m)).cloned().unwrap_or_else(C::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn labels(&self) -> Vec<(u32, u32)> {
        self.comps.keys().copied().collect()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &Mono, &C)> {
        self.comps.iter().flat_map(|(&(i, _), c)| c.iter().map(move |(m, x)| (i, m, x)))
    }

    pub fn n_terms(&self) -> usize {
        self.comps.values().map(|c| c.len()).sum()
    }

    pub fn component(&self, i: u32, k: u32) -> Self {
        let mut f = Self::zero(self.ne, self.no);
        if let Some(c) = self.comps.get(&(i, k)) {
            f.comps.insert((i, k), c.clone());
        }
        f
    }

    pub fn filter(&self, keep: impl Fn(u32, u32) -> bool) -> Self {
        Functional {
            ne: self.ne,
            no: self.no,
            comps: self.comps.iter().filter(|(k, _)| keep(k.0, k.1)).map(|(k, v)| (*k, v.clone())).collect(),
        }
    }

    pub fn truncate(&self, t: Trunc) -> Self {
        self.filter(|i, k| t.contains(i, k))
    }

    /// Components strictly below (i,k) in the lexicographic order.
    pub fn below(&self, i: u32, k: u32) -> Self {
        self.filter(|a, b| (a, b) < (i, k))
    }

    fn same_space(&self, o: &Self) {
        assert!(self.ne == o.ne && self.no == o.no, "functionals on different spaces");
    }

    pub fn add(&self, o: &Self) -> Self {
        self.same_space(o);
        let mut r = self.clone();
        r.add_assign(o);
        r
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.same_space(o);
        for (key, comp) in &o.comps {
            let dst = self.comps.entry(*key).or_default();
            for (m, c) in comp {
                push_term(dst, *m, c.clone());
            }
            if dst.is_empty() {
                self.comps.remove(key);
            }
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|c| c.neg())
    }

    /// Left multiplication by a scalar of the coefficient ring.
    pub fn scale(&self, c: &C) -> Self {
        self.map_coeffs(|x| c.mul(x))
    }

    pub fn scale_q(&self, q: &Q) -> Self {
        self.map_coeffs(|x| x.scale_q(q))
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Functional<D> {
        let mut out = Functional::zero(self.ne, self.no);
        for (key, comp) in &self.comps {
            let mut c2 = BTreeMap::new();
            for (m, x) in comp {
                let y = f(x);
                if !y.is_zero() {
                    c2.insert(*m, y);
                }
            }
            if !c2.is_empty() {
                out.comps.insert(*key, c2);
            }
        }
        out
    }

    /// Multiply by ħ^d.
    pub fn shift_hbar(&self, d: u32) -> Self {
        Functional {
            ne: self.ne,
            no: self.no,
            comps: self.comps.iter().map(|(&(i, k), v)| ((i + d, k), v.clone())).collect(),
        }
    }

    /// Graded product, keeping only output labels accepted by `keep`.
    pub fn mul_filtered(&self, o: &Self, keep: impl Fn(u32, u32) -> bool) -> Self {
        self.same_space(o);
        let mut out = Self::zero(self.ne, self.no);
        self.mul_into(o, &keep, &mut out);
        out
    }

    fn mul_into(&self, o: &Self, keep: &impl Fn(u32, u32) -> bool, out: &mut Self) {
        let graded = C::graded();
        for (&(i1, k1), c1) in &self.comps {
            for (&(i2, k2), c2) in &o.comps {
                let key = (i1 + i2, k1 + k2);
                if !keep(key.0, key.1) {
                    continue;
                }
                let dst = out.comps.entry(key).or_default();
                for (m1, x1) in c1 {
                    let odd1 = graded && m1.is_odd();
                    for (m2, x2) in c2 {
                        let Some((m, neg)) = m1.mul(m2) else { continue };
                        let y = if odd1 { x1.mul(&x2.involution()) } else { x1.mul(x2) };
                        push_term(dst, m, if neg { y.neg() } else { y });
                    }
                }
                if dst.is_empty() {
                    out.comps.remove(&key);
                }
            }
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.mul_filtered(o, |_, _| true)
    }

    /// Left derivative ∂_a.
    pub fn deriv(&self, a: usize) -> Self {
        let mut out = Self::zero(self.ne, self.no);
        let graded = C::graded();
        for (&(i, k), comp) in &self.comps {
            let mut dst = BTreeMap::new();
            if a < self.ne {
                for (m, c) in comp {
                    if let Some((e, m2)) = m.d_even(a) {
                        push_term(&mut dst, m2, c.scale_q(&Q::from(e as i64)));
                    }
                }
            } else {
                for (m, c) in comp {
                    if let Some((neg, m2)) = m.d_odd(a - self.ne) {
                        let c = if graded { c.involution() } else { c.clone() };
                        push_term(&mut dst, m2, if neg { c.neg() } else { c });
                    }
                }
            }
            if !dst.is_empty() {
                out.comps.insert((i, k - 1), dst);
            }
        }
        out
    }

    /// Q acting as the odd derivation Σ q[a][b] x^b ∂_a, so that [∂_c, Q] = ∂_{Qe_c}.
    pub fn apply_q(&self, q: &Mat<Q>) -> Self {
        let n = self.n_vars();
        assert_eq!(q.len(), n);
        let mut out = Self::zero(self.ne, self.no);
        for a in 0..n {
            let bs: Vec<usize> = (0..n).filter(|&b| !q[a][b].is_zero()).collect();
            if bs.is_empty() {
                continue;
            }
            let d = self.deriv(a);
            if d.is_zero() {
                continue;
            }
            for b in bs {
                let xb = Self::var(self.ne, self.no, b);
                out.add_assign(&xb.mul(&d).scale_q(&q[a][b]));
            }
        }
        out
    }

    /// Applies a coefficient-ring map that is an odd or even derivation
    /// (e.g. d_DR on interval forms): coefficients are transformed in place.
    pub fn apply_coeff_derivation(&self, d: impl Fn(&C) -> C) -> Self {
        self.map_coeffs(d)
    }

    /// Total parity split: (even part, odd part), counting coefficient parity.
    pub fn split_total_parity(&self) -> (Self, Self) {
        if !C::graded() {
            let ev = self.filter_terms(|m| !m.is_odd());
            let od = self.filter_terms(|m| m.is_odd());
            return (ev, od);
        }
        let mut ev = Self::zero(self.ne, self.no);
        let mut od = Self::zero(self.ne, self.no);
        for (i, m, c) in self.terms() {
            let c_odd = c.odd_part();
            let c_even = c.sub(&c_odd);
            if m.is_odd() {
                ev.add_term(i, *m, c_odd);
                od.add_term(i, *m, c_even);
            } else {
                ev.add_term(i, *m, c_even);
                od.add_term(i, *m, c_odd);
            }
        }
        (ev, od)
    }

    fn filter_terms(&self, keep: impl Fn(&Mono) -> bool) -> Self {
        let mut out = Self::zero(self.ne, self.no);
        for (i, m, c) in self.terms() {
            if keep(m) {
                out.add_term(i, *m, c.clone());
            }
        }
        out
    }

    pub fn is_total_even(&self) -> bool {
        self.split_total_parity().1.is_zero()
    }

    /// f(g·) for the linear map whose matrix has rows indexed by old
    /// coordinates: old x^c = Σ_a lin[c][a] x′^a with x′ on an `ne|no` space.
    /// `lin` must preserve parity and have even entries.
    pub fn pullback(&self, lin: &Mat<C>, ne: usize, no: usize) -> Self {
        let n_new = ne + no;
        let forms: Vec<Self> = (0..self.n_vars())
            .map(|c| {
                let mut f = Self::zero(ne, no);
                for a in 0..n_new {
                    if !lin[c][a].is_zero() {
                        let m = if a < ne { Mono::even_var(a) } else { Mono::odd_var(a - ne) };
                        f.add_term(0, m, lin[c][a].clone());
                    }
                }
                f
            })
            .collect();
        let mut powers: BTreeMap<(usize, u32), Self> = BTreeMap::new();
        let mut out = Self::zero(ne, no);
        for (i, m, c) in self.terms() {
            let mut acc = Self::constant(ne, no, 0, C::one());
            for v in 0..self.ne {
                let e = m.exp(v);
                if e == 0 {
                    continue;
                }
                let p = powers
                    .entry((v, e))
                    .or_insert_with(|| {
                        let mut p = Self::constant(ne, no, 0, C::one());
                        for _ in 0..e {
                            p = p.mul(&forms[v]);
                        }
                        p
                    })
                    .clone();
                acc = acc.mul(&p);
            }
            for j in 0..self.no {
                if m.has_odd(j) {
                    acc = acc.mul(&forms[self.ne + j]);
                }
            }
            out.add_assign(&acc.scale(c).shift_hbar(i));
        }
        out
    }

    /// Renames variables: x^a ↦ x^{map[a]} in an `ne|no` space. Several
    /// variables may share a target (restriction to a diagonal).
    pub fn substitute_vars(&self, map: &[usize], ne: usize, no: usize) -> Self {
        assert_eq!(map.len(), self.n_vars());
        let mut out = Self::zero(ne, no);
        for (&(i, _), comp) in &self.comps {
            for (m, c) in comp {
                let mut acc = Mono::ONE;
                for v in 0..self.ne {
                    let e = m.exp(v);
                    if e > 0 {
                        debug_assert!(map[v] < ne);
                        acc.ev += (e as u128) << (EBITS as usize * map[v]);
                    }
                }
                let mut neg = false;
                let mut dead = false;
                for j in 0..self.no {
                    if m.has_odd(j) {
                        let t = map[self.ne + j] - ne;
                        match acc.mul(&Mono::odd_var(t)) {
                            Some((m2, s)) => {
                                acc = m2;
                                neg ^= s;
                            }
                            None => {
                                dead = true;
                                break;
                            }
                        }
                    }
                }
                if !dead {
                    out.add_term(i, acc, if neg { c.neg() } else { c.clone() });
                }
            }
        }
        out
    }

    /// Lines "i | monomial | coefficient", sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, m, c) in self.terms() {
            let _ = writeln!(s, "{i} | {} | {c}", m.format(self.ne, self.no));
        }
        s
    }
}

impl Functional<Q> {
    pub fn from_text(text: &str, ne: usize, no: usize) -> Result<Self, FunctionalError> {
        let mut f = Self::zero(ne, no);
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('|').collect();
            let err = |msg: String| FunctionalError::Parse { line: ln + 1, msg };
            if parts.len() != 3 {
                return Err(err("expected three fields".into()));
            }
            let i: u32 = parts[0].trim().parse().map_err(|_| err("bad hbar order".into()))?;
            let m = Mono::parse(parts[1], ne, no).map_err(err)?;
            let c: Q = parts[2].parse().map_err(|e: crate::coeff::ParseQError| err(e.to_string()))?;
            f.add_term(i, m, c);
        }
        Ok(f)
    }
}

/// f restricted to Ker H: substitutes x^c = Σ_i B[c][i] y^i for the chosen basis B.
pub fn restrict_to_cohomology<C: Coeff>(f: &Functional<C>, cb: &CohomologyBasis) -> Functional<C> {
    let lin = crate::linalg::mmap(&cb.basis, C::from_q);
    f.pullback(&lin, cb.n_even, cb.n_odd)
}

/// f∘g for a parity-preserving change of basis g (new basis e′_i = Σ_j g[j][i] e_j).
pub fn change_basis<C: Coeff>(f: &Functional<C>, g: &Mat<Q>) -> Functional<C> {
    f.pullback(&crate::linalg::mmap(g, C::from_q), f.ne, f.no)
}

// ---------------------------------------------------------------------------
// Second-order operators and brackets.

fn check_kernel<C: Coeff>(f: &Functional<C>, phi: &Kernel<C>) -> Result<(), FunctionalError> {
    if phi.dim() != f.n_vars() {
        return Err(FunctionalError::DimMismatch(f.n_vars(), phi.dim()));
    }
    if !phi.is_graded_symmetric(f.ne) {
        return Err(FunctionalError::NotSymmetric);
    }
    Ok(())
}

/// ∂_Φ = ½ Σ Φ^{ab} ∂_b ∂_a for a graded-symmetric Φ.
pub fn second_order<C: Coeff>(phi: &Kernel<C>, f: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    check_kernel(f, phi)?;
    let n = f.n_vars();
    let d: Vec<Functional<C>> = (0..n).map(|a| f.deriv(a)).collect();
    Ok(second_order_cached(phi, &d, f.ne, f.no, &|_, _| true))
}

fn second_order_cached<C: Coeff>(
    phi: &Kernel<C>,
    d: &[Functional<C>],
    ne: usize,
    no: usize,
    keep: &dyn Fn(u32, u32) -> bool,
) -> Functional<C> {
    let n = d.len();
    let mut out = Functional::zero(ne, no);
    let half = Q::new(1, 2);
    for a in 0..n {
        if d[a].is_zero() {
            continue;
        }
        for b in a..n {
            let p = &phi.tensor[a][b];
            if p.is_zero() {
                continue;
            }
            let dd = d[a].deriv(b).filter(keep);
            if dd.is_zero() {
                continue;
            }
            // Φ^{ab}∂_b∂_a and Φ^{ba}∂_a∂_b coincide for symmetric Φ
            let c = if a == b { p.scale_q(&half) } else { p.clone() };
            out.add_assign(&dd.scale(&c));
        }
    }
    out
}

/// {f,g}_Φ = ∂_Φ(fg) − ∂_Φ(f)g − (−1)^{|Φ||f|} f∂_Φ(g),
/// evaluated as Σ Φ^{ab}(−1)^{|b|(|f|+|a|)} ∂_a f · ∂_b g.
pub fn bracket<C: Coeff>(phi: &Kernel<C>, f: &Functional<C>, g: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    check_kernel(f, phi)?;
    let n = f.n_vars();
    let dg: Vec<Functional<C>> = (0..n).map(|b| g.deriv(b)).collect();
    let (fe, fo) = f.split_total_parity();
    let mut out = Functional::zero(f.ne, f.no);
    for (part, pf) in [(fe, false), (fo, true)] {
        if part.is_zero() {
            continue;
        }
        for a in 0..n {
            let da = part.deriv(a);
            if da.is_zero() {
                continue;
            }
            let pa = f.is_odd_var(a);
            for b in 0..n {
                let p = &phi.tensor[a][b];
                if p.is_zero() || dg[b].is_zero() {
                    continue;
                }
                let pb = f.is_odd_var(b);
                let t = da.mul(&dg[b]).scale(p);
                out.add_assign(&if pb && (pf ^ pa) { t.neg() } else { t });
            }
        }
    }
    Ok(out)
}

/// Δ_T f = −∂_{K_T} f.
pub fn bv_laplacian<C: Coeff>(k_t: &Kernel<C>, f: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    if !k_t.odd {
        return Err(FunctionalError::WrongParity);
    }
    Ok(second_order(k_t, f)?.neg())
}

/// {f,g}_T: the bracket of Δ_T.
pub fn bv_bracket<C: Coeff>(k_t: &Kernel<C>, f: &Functional<C>, g: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    if !k_t.odd {
        return Err(FunctionalError::WrongParity);
    }
    bracket(&k_t.neg(), f, g)
}

/// QS + ½{S,S}_T + ħΔ_T S, truncated to `trunc`.
pub fn qme_residual<C: Coeff>(q: &Mat<Q>, k_t: &Kernel<C>, s: &Functional<C>, trunc: Trunc) -> Result<Functional<C>, FunctionalError> {
    let s = s.truncate(trunc);
    let mut r = s.apply_q(q);
    r.add_assign(&bv_bracket(k_t, &s, &s)?.scale_q(&Q::new(1, 2)));
    r.add_assign(&bv_laplacian(k_t, &s)?.shift_hbar(1));
    Ok(r.truncate(trunc))
}

/// Classical part QS + ½{S,S}_T, no ħΔ term.
pub fn classical_residual<C: Coeff>(q: &Mat<Q>, k_t: &Kernel<C>, s: &Functional<C>) -> Result<Functional<C>, FunctionalError> {
    let mut r = s.apply_q(q);
    r.add_assign(&bv_bracket(k_t, s, s)?.scale_q(&Q::new(1, 2)));
    Ok(r)
}

// ---------------------------------------------------------------------------
// The renormalization group flow.

/// Checks that S is usable as an action: no non-nilpotent terms at i = 0 of
/// degree ≤ 2 and no linear terms at all at i = 0.
pub fn check_action<C: Coeff>(s: &Functional<C>) -> Result<(), FunctionalError> {
    for (&(i, k), comp) in &s.comps {
        if i == 0 && k <= 2 {
            let nil = comp.values().all(|c| c.is_nilpotent());
            if !nil || k == 1 {
                return Err(FunctionalError::NotCubic(i, k));
            }
        }
    }
    Ok(())
}

/// G_a(g) = Σ_b (−1)^{|a||b|} [Φ^{ab}_even + (−1)^{|a|}Φ^{ab}_odd] ∂_b g,
/// so that {f,g}_Φ = Σ_a ∂_a f · G_a(g) for total-even f.
fn contracted<C: Coeff>(phi: &Kernel<C>, dg: &[Functional<C>], ne: usize) -> Vec<Functional<C>> {
    let n = dg.len();
    let graded = C::graded();
    (0..n)
        .map(|a| {
            let mut acc = Functional::zero(dg[0].ne, dg[0].no);
            let pa = a >= ne;
            for b in 0..n {
                let p = &phi.tensor[a][b];
                if p.is_zero() || dg[b].is_zero() {
                    continue;
                }
                let pb = b >= ne;
                let mut c = if graded && pa {
                    let o = p.odd_part();
                    p.sub(&o).sub(&o)
                } else {
                    p.clone()
                };
                if pa && pb {
                    c = c.neg();
                }
                acc.add_assign(&dg[b].scale(&c));
            }
            acc
        })
        .collect()
}

/// Γ(P,S) = ħ log(exp(ħ∂_P) exp(S/ħ)), truncated.
///
/// Expanding Γ(sP,S) = Σ_E s^E Γ^{(E)} in the number of propagators, the
/// flow dΓ/ds = ħ∂_PΓ + ½{Γ,Γ}_P gives
/// E Γ^{(E)} = ħ∂_P Γ^{(E−1)} + ½ Σ_{E1+E2=E−1} {Γ^{(E1)}, Γ^{(E2)}}_P.
pub fn gamma<C: Coeff>(p: &Kernel<C>, s: &Functional<C>, trunc: Trunc) -> Result<Functional<C>, FunctionalError> {
    if p.odd {
        return Err(FunctionalError::WrongParity);
    }
    check_kernel(s, p)?;
    check_action(s)?;
    let s = s.truncate(trunc);
    if p.is_zero() {
        return Ok(s);
    }
    let (ne, no) = (s.ne, s.no);
    let n = s.n_vars();
    let keep = |i: u32, k: u32| trunc.contains(i, k);
    let keep_hbar = |i: u32, k: u32| trunc.contains(i + 1, k);
    let nil2 = s.comps.keys().any(|&(i, k)| i == 0 && k <= 2);
    let emax = (3 * trunc.i_max + trunc.k_max).saturating_sub(3) + if nil2 { 4 } else { 0 };

    let mut levels: Vec<Functional<C>> = vec![s.clone()];
    let mut dcache: Vec<Vec<Functional<C>>> = Vec::new();
    let mut gcache: Vec<Vec<Functional<C>>> = Vec::new();
    let push_cache = |f: &Functional<C>, dc: &mut Vec<Vec<Functional<C>>>, gc: &mut Vec<Vec<Functional<C>>>| {
        let d: Vec<Functional<C>> = (0..n).map(|a| f.deriv(a)).collect();
        gc.push(contracted(p, &d, ne));
        dc.push(d);
    };
    push_cache(&s, &mut dcache, &mut gcache);
    let half = Q::new(1, 2);
    for e in 1..=emax as usize {
        let mut acc = second_order_cached(p, &dcache[e - 1], ne, no, &keep_hbar).shift_hbar(1);
        for e1 in 0..=(e - 1) / 2 {
            let e2 = e - 1 - e1;
            if levels[e1].is_zero() || levels[e2].is_zero() {
                continue;
            }
            let mut br = Functional::zero(ne, no);
            for a in 0..n {
                if dcache[e1][a].is_zero() || gcache[e2][a].is_zero() {
                    continue;
                }
                dcache[e1][a].mul_into(&gcache[e2][a], &keep, &mut br);
            }
            if e1 == e2 {
                br = br.scale_q(&half);
            }
            acc.add_assign(&br);
        }
        let lvl = acc.scale_q(&Q::new(1, e as i64));
        push_cache(&lvl, &mut dcache, &mut gcache);
        levels.push(lvl);
    }
    let mut out = Functional::zero(ne, no);
    for l in &levels {
        out.add_assign(l);
    }
    Ok(out)
}

/// Linearization of Γ in the action: d/dλ Γ(P, S + λX) at λ = 0, computed
/// with polynomial coefficients in λ.
pub fn gamma_derivative<C: Coeff>(
    p: &Kernel<C>,
    s: &Functional<C>,
    x: &Functional<C>,
    trunc: Trunc,
) -> Result<Functional<C>, FunctionalError> {
    use crate::coeff::Poly;
    let lift = |c: &C| Poly::constant(c.clone());
    let sl = s.map_coeffs(lift).add(&x.map_coeffs(|c| Poly::monomial(c.clone(), 1)));
    let pl = p.map(lift);
    let g = gamma(&pl, &sl, trunc)?;
    Ok(g.map_coeffs(|c| c.c.get(1).cloned().unwrap_or_else(C::zero)))
}

// ---------------------------------------------------------------------------
// Random functionals for tests and experiments.

pub mod random {
    use super::*;
    use rand::Rng;

    /// Random functional with the given (i,k) components, each carrying up
    /// to `terms` monomials with small integer coefficients.
    pub fn functional<R: Rng>(rng: &mut R, ne: usize, no: usize, labels: &[(u32, u32)], terms: usize) -> Functional<Q> {
        let mut f = Functional::zero(ne, no);
        for &(i, k) in labels {
            for _ in 0..terms {
                if let Some(m) = monomial(rng, ne, no, k) {
                    let c = Q::from(rng.gen_range(-3i64..=3));
                    f.add_term(i, m, c);
                }
            }
        }
        f
    }

    /// Random even monomial (even number of odd variables) of degree k.
    pub fn monomial<R: Rng>(rng: &mut R, ne: usize, no: usize, k: u32) -> Option<Mono> {
        for _ in 0..20 {
            let n_odd = if no == 0 { 0 } else { 2 * rng.gen_range(0..=(no.min(k as usize) / 2)) } as u32;
            if n_odd > k || (ne == 0 && n_odd != k) {
                continue;
            }
            let mut m = Mono::ONE;
            let mut chosen = 0u32;
            while chosen < n_odd {
                let j = rng.gen_range(0..no);
                if !m.has_odd(j) {
                    m.od |= 1 << j;
                    chosen += 1;
                }
            }
            for _ in 0..(k - n_odd) {
                let i = rng.gen_range(0..ne);
                m.ev += 1u128 << (EBITS as usize * i);
            }
            return Some(m);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Q {
        Q::from(n)
    }

    #[test]
    fn derivative_of_cube() {
        let x = Functional::<Q>::var(1, 0, 0);
        let x3 = x.mul(&x).mul(&x);
        let d = x3.deriv(0);
        assert_eq!(d, x.mul(&x).scale_q(&q(3)));
    }

    #[test]
    fn odd_variables_anticommute() {
        let a = Functional::<Q>::var(0, 2, 0);
        let b = Functional::<Q>::var(0, 2, 1);
        assert_eq!(a.mul(&b), b.mul(&a).neg());
        assert!(a.mul(&a).is_zero());
        // ∂_{y1}(y0 y1) = −y0
        assert_eq!(a.mul(&b).deriv(1), a.neg());
    }

    #[test]
    fn mono_text_roundtrip() {
        let m = Mono::parse("x0^2*x2*y1*y3", 3, 4).unwrap();
        assert_eq!(m.degree(), 5);
        assert_eq!(Mono::parse(&m.format(3, 4), 3, 4).unwrap(), m);
        assert!(Mono::parse("y3*y1", 3, 4).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let f = random::functional(&mut rng, 2, 2, &[(0, 3), (1, 2), (2, 0)], 4);
        let g = Functional::from_text(&f.to_text(), 2, 2).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn trunc_is_weight_cut() {
        let t = Trunc::new(2, 6);
        assert!(t.contains(0, 10));
        assert!(!t.contains(0, 11));
        assert!(t.contains(2, 6));
        assert!(!t.contains(3, 0));
        assert_eq!(t.labels().len(), 11 + 9 + 7);
    }

    #[test]
    fn rejects_quadratic_action() {
        let x = Functional::<Q>::var(1, 1, 0);
        let s = x.mul(&x);
        assert_eq!(check_action(&s), Err(FunctionalError::NotCubic(0, 2)));
    }
}
