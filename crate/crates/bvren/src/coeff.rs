//! Coefficient rings.
//!
//! Every ring here is graded-commutative: elements split into an even and an
//! odd part, and `involution` is the grade involution σ (even − odd). Scalars
//! are purely even. `Grass` adjoins the two odd generators dt and δ.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub trait Coeff: Clone + fmt::Debug + fmt::Display + PartialEq + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn from_q(q: &Q) -> Self;

    fn from_i64(n: i64) -> Self {
        Self::from_q(&Q::from(n))
    }
    /// Grassmann-odd part.
    fn odd_part(&self) -> Self {
        Self::zero()
    }
    /// σ(c) = c_even − c_odd.
    fn involution(&self) -> Self {
        self.clone()
    }
    /// True when the element has zero body (vanishes modulo the odd generators).
    fn is_nilpotent(&self) -> bool {
        self.is_zero()
    }
    /// False when the ring has no odd elements, letting callers skip σ.
    fn graded() -> bool {
        false
    }
    fn add_assign(&mut self, o: &Self) {
        *self = self.add(o);
    }
    fn scale_q(&self, q: &Q) -> Self {
        self.mul(&Self::from_q(q))
    }
}

// ---------------------------------------------------------------------------
// Q: exact rationals, i64 fast path with BigRational overflow.

#[derive(Clone)]
pub enum Q {
    Small(i64, i64),
    Big(Box<BigRational>),
}

impl Q {
    fn from_i128(n: i128, d: i128) -> Q {
        debug_assert!(d != 0);
        let g = n.gcd(&d);
        let (mut n, mut d) = if g > 1 { (n / g, d / g) } else { (n, d) };
        if d < 0 {
            n = -n;
            d = -d;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(a), Ok(b)) => Q::Small(a, b),
            _ => Q::Big(Box::new(BigRational::new_raw(BigInt::from(n), BigInt::from(d)))),
        }
    }

    fn from_big(r: BigRational) -> Q {
        if let (Some(n), Some(d)) = (r.numer().to_i64(), r.denom().to_i64()) {
            return Q::Small(n, d);
        }
        Q::Big(Box::new(r))
    }

    pub fn to_big(&self) -> BigRational {
        match self {
            Q::Small(n, d) => BigRational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Q::Big(b) => (**b).clone(),
        }
    }

    pub fn new(n: i64, d: i64) -> Q {
        assert!(d != 0, "zero denominator");
        Q::from_i128(n as i128, d as i128)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Q::Small(n, d) => *n as f64 / *d as f64,
            Q::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn inv(&self) -> Option<Q> {
        match self {
            Q::Small(0, _) => None,
            Q::Small(n, d) => Some(Q::from_i128(*d as i128, *n as i128)),
            Q::Big(b) => {
                if b.is_zero() {
                    None
                } else {
                    Some(Q::from_big(b.recip()))
                }
            }
        }
    }

    pub fn div(&self, o: &Q) -> Q {
        self.mul(&o.inv().expect("division by zero rational"))
    }

    pub fn is_integer(&self) -> bool {
        match self {
            Q::Small(_, d) => *d == 1,
            Q::Big(b) => b.is_integer(),
        }
    }

    pub fn signum(&self) -> i32 {
        match self {
            Q::Small(n, _) => n.signum() as i32,
            Q::Big(b) => {
                if b.is_positive() {
                    1
                } else if b.is_negative() {
                    -1
                } else {
                    0
                }
            }
        }
    }

    pub fn abs(&self) -> Q {
        if self.signum() < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    pub fn pow(&self, e: u32) -> Q {
        let mut r = Q::one();
        for _ in 0..e {
            r = r.mul(self);
        }
        r
    }

    /// Best rational approximation with denominator ≤ `max_den` (continued fractions).
    pub fn approximate(x: f64, max_den: i64) -> Option<Q> {
        if !x.is_finite() {
            return None;
        }
        let (mut h0, mut h1, mut k0, mut k1) = (0i128, 1i128, 1i128, 0i128);
        let mut y = x;
        for _ in 0..64 {
            let a = y.floor();
            if a.abs() > 1e15 {
                break;
            }
            let ai = a as i128;
            let h2 = ai * h1 + h0;
            let k2 = ai * k1 + k0;
            if k2 > max_den as i128 {
                break;
            }
            h0 = h1;
            h1 = h2;
            k0 = k1;
            k1 = k2;
            let frac = y - a;
            if frac.abs() < 1e-12 {
                break;
            }
            y = 1.0 / frac;
        }
        if k1 == 0 {
            return None;
        }
        Some(Q::from_i128(h1, k1))
    }
}

impl From<i64> for Q {
    fn from(n: i64) -> Q {
        Q::Small(n, 1)
    }
}

impl PartialEq for Q {
    fn eq(&self, o: &Q) -> bool {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => a == c && b == d,
            _ => self.to_big() == o.to_big(),
        }
    }
}
impl Eq for Q {}

impl PartialOrd for Q {
    fn partial_cmp(&self, o: &Q) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Q {
    fn cmp(&self, o: &Q) -> Ordering {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128)),
            _ => self.to_big().cmp(&o.to_big()),
        }
    }
}

impl fmt::Debug for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Q::Small(n, 1) => write!(f, "{n}"),
            Q::Small(n, d) => write!(f, "{n}/{d}"),
            Q::Big(b) => {
                if b.is_integer() {
                    write!(f, "{}", b.numer())
                } else {
                    write!(f, "{}/{}", b.numer(), b.denom())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse rational from {0:?}")]
pub struct ParseQError(pub String);

impl FromStr for Q {
    type Err = ParseQError;
    /// Accepts `n`, `n/d` and finite decimals like `-0.125`.
    fn from_str(s: &str) -> Result<Q, ParseQError> {
        let s = s.trim();
        let err = || ParseQError(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n = BigInt::from_str(n.trim()).map_err(|_| err())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            return Ok(Q::from_big(BigRational::new(n, d)));
        }
        if let Some((ip, fp)) = s.split_once('.') {
            let neg = ip.trim_start().starts_with('-');
            let ip = ip.trim_start_matches(['-', '+']);
            let digits = format!("{}{}", if ip.is_empty() { "0" } else { ip }, fp);
            let n = BigInt::from_str(&digits).map_err(|_| err())?;
            let d = num_traits::pow(BigInt::from(10), fp.len());
            let r = BigRational::new(if neg { -n } else { n }, d);
            return Ok(Q::from_big(r));
        }
        let n = BigInt::from_str(s).map_err(|_| err())?;
        Ok(Q::from_big(BigRational::from_integer(n)))
    }
}

impl Coeff for Q {
    fn zero() -> Q {
        Q::Small(0, 1)
    }
    fn one() -> Q {
        Q::Small(1, 1)
    }
    fn add(&self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => {
                if *b == 1 && *d == 1 {
                    if let Some(s) = a.checked_add(*c) {
                        return Q::Small(s, 1);
                    }
                }
                Q::from_i128(*a as i128 * *d as i128 + *c as i128 * *b as i128, *b as i128 * *d as i128)
            }
            _ => Q::from_big(self.to_big() + o.to_big()),
        }
    }
    fn sub(&self, o: &Q) -> Q {
        self.add(&o.neg())
    }
    fn neg(&self) -> Q {
        match self {
            Q::Small(a, b) => match a.checked_neg() {
                Some(n) => Q::Small(n, *b),
                None => Q::from_big(-self.to_big()),
            },
            Q::Big(r) => Q::from_big(-(**r).clone()),
        }
    }
    fn mul(&self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => {
                if *a == 0 || *c == 0 {
                    return Q::zero();
                }
                Q::from_i128(*a as i128 * *c as i128, *b as i128 * *d as i128)
            }
            _ => Q::from_big(self.to_big() * o.to_big()),
        }
    }
    fn is_zero(&self) -> bool {
        match self {
            Q::Small(a, _) => *a == 0,
            Q::Big(b) => b.is_zero(),
        }
    }
    fn from_q(q: &Q) -> Q {
        q.clone()
    }
}

impl Coeff for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn add(&self, o: &f64) -> f64 {
        self + o
    }
    fn sub(&self, o: &f64) -> f64 {
        self - o
    }
    fn neg(&self) -> f64 {
        -self
    }
    fn mul(&self, o: &f64) -> f64 {
        self * o
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_q(q: &Q) -> f64 {
        q.to_f64()
    }
}

// ---------------------------------------------------------------------------
// ExpRat: finite sums Σ c_q e^{-q} with rational c and q.

/// Exact combination of exponentials, Σ c·E(q) with E(q) = e^{−q}.
/// Distinct exponentials are linearly independent over ℚ, so the
/// representation is canonical and zero tests are exact.
#[derive(Clone, PartialEq, Default)]
pub struct ExpRat {
    pub terms: BTreeMap<Q, Q>,
}

impl ExpRat {
    /// e^{−q}
    pub fn exp_neg(q: Q) -> ExpRat {
        let mut terms = BTreeMap::new();
        terms.insert(q, Q::one());
        ExpRat { terms }
    }

    pub fn to_f64(&self) -> f64 {
        self.terms.iter().map(|(q, c)| c.to_f64() * (-q.to_f64()).exp()).sum()
    }

    /// The value when no exponential other than E(0) = 1 occurs.
    pub fn as_rational(&self) -> Option<Q> {
        match self.terms.len() {
            0 => Some(Q::zero()),
            1 => self.terms.get(&Q::zero()).cloned(),
            _ => None,
        }
    }

    fn push(&mut self, q: Q, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&q) {
            Some(x) => {
                *x = x.add(&c);
                if x.is_zero() {
                    self.terms.remove(&q);
                }
            }
            None => {
                self.terms.insert(q, c);
            }
        }
    }
}

impl fmt::Debug for ExpRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ExpRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (q, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if q.is_zero() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*E({q})")?;
            }
        }
        Ok(())
    }
}

impl Coeff for ExpRat {
    fn zero() -> Self {
        ExpRat::default()
    }
    fn one() -> Self {
        ExpRat::from_q(&Q::one())
    }
    fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (q, c) in &o.terms {
            r.push(q.clone(), c.clone());
        }
        r
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    fn neg(&self) -> Self {
        ExpRat { terms: self.terms.iter().map(|(q, c)| (q.clone(), c.neg())).collect() }
    }
    fn mul(&self, o: &Self) -> Self {
        let mut r = ExpRat::default();
        for (q1, c1) in &self.terms {
            for (q2, c2) in &o.terms {
                r.push(q1.add(q2), c1.mul(c2));
            }
        }
        r
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_q(q: &Q) -> Self {
        let mut r = ExpRat::default();
        r.push(Q::zero(), q.clone());
        r
    }
}

// ---------------------------------------------------------------------------
// Poly<C>: polynomials in one even variable.

#[derive(Clone, PartialEq, Default)]
pub struct Poly<C> {
    /// c[j] is the coefficient of s^j; no trailing zeros.
    pub c: Vec<C>,
}

impl<C: Coeff> Poly<C> {
    pub fn constant(c: C) -> Self {
        let mut p = Poly { c: vec![c] };
        p.trim();
        p
    }

    pub fn monomial(c: C, j: usize) -> Self {
        let mut v = vec![C::zero(); j + 1];
        v[j] = c;
        let mut p = Poly { c: v };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.c.last().is_some_and(|x| x.is_zero()) {
            self.c.pop();
        }
    }

    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn derivative(&self) -> Self {
        let mut v = Vec::new();
        for (j, x) in self.c.iter().enumerate().skip(1) {
            v.push(x.scale_q(&Q::from(j as i64)));
        }
        let mut p = Poly { c: v };
        p.trim();
        p
    }

    /// ∫_0^s
    pub fn integrate(&self) -> Self {
        let mut v = vec![C::zero()];
        for (j, x) in self.c.iter().enumerate() {
            v.push(x.scale_q(&Q::new(1, j as i64 + 1)));
        }
        let mut p = Poly { c: v };
        p.trim();
        p
    }

    pub fn eval(&self, x: &C) -> C {
        let mut r = C::zero();
        for c in self.c.iter().rev() {
            r = r.mul(x).add(c);
        }
        r
    }

    pub fn eval_one(&self) -> C {
        let mut r = C::zero();
        for c in &self.c {
            r = r.add(c);
        }
        r
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut p = Poly { c: self.c.iter().map(f).collect() };
        p.trim();
        p
    }
}

impl<C: Coeff> fmt::Debug for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl<C: Coeff> fmt::Display for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (j, x) in self.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match j {
                0 => write!(f, "({x})")?,
                1 => write!(f, "({x})*t")?,
                _ => write!(f, "({x})*t^{j}")?,
            }
        }
        Ok(())
    }
}

impl<C: Coeff> Coeff for Poly<C> {
    fn zero() -> Self {
        Poly { c: Vec::new() }
    }
    fn one() -> Self {
        Poly::constant(C::one())
    }
    fn add(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let mut v = Vec::with_capacity(n);
        for j in 0..n {
            v.push(match (self.c.get(j), o.c.get(j)) {
                (Some(a), Some(b)) => a.add(b),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            });
        }
        let mut p = Poly { c: v };
        p.trim();
        p
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    fn neg(&self) -> Self {
        Poly { c: self.c.iter().map(|x| x.neg()).collect() }
    }
    fn mul(&self, o: &Self) -> Self {
        if self.c.is_empty() || o.c.is_empty() {
            return Self::zero();
        }
        let mut v = vec![C::zero(); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.c.iter().enumerate() {
                if !b.is_zero() {
                    v[i + j].add_assign(&a.mul(b));
                }
            }
        }
        let mut p = Poly { c: v };
        p.trim();
        p
    }
    fn is_zero(&self) -> bool {
        self.c.is_empty()
    }
    fn from_q(q: &Q) -> Self {
        Poly::constant(C::from_q(q))
    }
    fn odd_part(&self) -> Self {
        self.map(|x| x.odd_part())
    }
    fn involution(&self) -> Self {
        self.map(|x| x.involution())
    }
    fn is_nilpotent(&self) -> bool {
        self.c.iter().all(|x| x.is_nilpotent())
    }
    fn graded() -> bool {
        C::graded()
    }
}

// ---------------------------------------------------------------------------
// Grass<C>: C ⊗ Λ[dt, δ].

pub const DT: usize = 1;
pub const DELTA: usize = 2;

/// Exterior algebra on the odd generators dt (bit 0) and δ (bit 1) over C.
/// The canonical order of the top monomial is dt·δ.
#[derive(Clone, PartialEq)]
pub struct Grass<C> {
    pub c: [C; 4],
}

fn mask_parity(a: usize) -> bool {
    (a.count_ones() % 2) == 1
}

fn mask_sign(a: usize, b: usize) -> i32 {
    // θ^A θ^B with A = δ, B = dt gives δ·dt = −dt·δ
    if a & DELTA != 0 && b & DT != 0 {
        -1
    } else {
        1
    }
}

impl<C: Coeff> Grass<C> {
    pub fn scalar(c: C) -> Self {
        Grass { c: [c, C::zero(), C::zero(), C::zero()] }
    }

    pub fn generator(mask: usize, c: C) -> Self {
        let mut g = Grass::zero();
        g.c[mask] = c;
        g
    }

    pub fn dt() -> Self {
        Self::generator(DT, C::one())
    }

    pub fn delta() -> Self {
        Self::generator(DELTA, C::one())
    }

    pub fn component(&self, mask: usize) -> &C {
        &self.c[mask]
    }

    /// Left derivative ∂/∂δ: δ ↦ 1, dt·δ ↦ −dt.
    pub fn d_delta_left(&self) -> Self {
        Grass { c: [self.c[DELTA].clone(), self.c[DT | DELTA].neg(), C::zero(), C::zero()] }
    }

    /// Drop every term containing δ.
    pub fn strip_delta(&self) -> Self {
        Grass { c: [self.c[0].clone(), self.c[DT].clone(), C::zero(), C::zero()] }
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Grass<D> {
        Grass { c: [f(&self.c[0]), f(&self.c[1]), f(&self.c[2]), f(&self.c[3])] }
    }
}

impl<C: Coeff> fmt::Debug for Grass<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl<C: Coeff> fmt::Display for Grass<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["", "dt", "d", "dt*d"];
        let mut first = true;
        for m in 0..4 {
            if self.c[m].is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if m == 0 {
                write!(f, "[{}]", self.c[m])?;
            } else {
                write!(f, "[{}]*{}", self.c[m], names[m])?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl<C: Coeff> Coeff for Grass<C> {
    fn zero() -> Self {
        Grass { c: [C::zero(), C::zero(), C::zero(), C::zero()] }
    }
    fn one() -> Self {
        Grass::scalar(C::one())
    }
    fn add(&self, o: &Self) -> Self {
        Grass { c: std::array::from_fn(|m| self.c[m].add(&o.c[m])) }
    }
    fn sub(&self, o: &Self) -> Self {
        Grass { c: std::array::from_fn(|m| self.c[m].sub(&o.c[m])) }
    }
    fn neg(&self) -> Self {
        Grass { c: std::array::from_fn(|m| self.c[m].neg()) }
    }
    fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for a in 0..4 {
            if self.c[a].is_zero() {
                continue;
            }
            for b in 0..4 {
                if a & b != 0 || o.c[b].is_zero() {
                    continue;
                }
                let rhs = if mask_parity(a) { o.c[b].involution() } else { o.c[b].clone() };
                let t = self.c[a].mul(&rhs);
                let t = if mask_sign(a, b) < 0 { t.neg() } else { t };
                r.c[a | b].add_assign(&t);
            }
        }
        r
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }
    fn from_q(q: &Q) -> Self {
        Grass::scalar(C::from_q(q))
    }
    fn odd_part(&self) -> Self {
        Grass {
            c: std::array::from_fn(|m| {
                if mask_parity(m) {
                    self.c[m].sub(&self.c[m].odd_part())
                } else {
                    self.c[m].odd_part()
                }
            }),
        }
    }
    fn involution(&self) -> Self {
        Grass {
            c: std::array::from_fn(|m| {
                let x = self.c[m].involution();
                if mask_parity(m) {
                    x.neg()
                } else {
                    x
                }
            }),
        }
    }
    fn is_nilpotent(&self) -> bool {
        self.c[0].is_nilpotent()
    }
    fn graded() -> bool {
        true
    }
}

/// Polynomial differential forms on the interval: p(t) + q(t)dt (+ δ-terms).
pub type Forms<C> = Grass<Poly<C>>;

impl<C: Coeff> Grass<Poly<C>> {
    /// Polynomial in t as a 0-form.
    pub fn from_poly(p: Poly<C>) -> Self {
        Grass::scalar(p)
    }

    /// d(p θ^A) = p′ dt θ^A for A ∌ dt.
    pub fn d_dr(&self) -> Self {
        let mut r = Self::zero();
        r.c[DT] = self.c[0].derivative();
        r.c[DT | DELTA] = self.c[DELTA].derivative();
        r
    }

    /// Pull back along t ↦ t0 (kills dt).
    pub fn eval_at(&self, t0: &C) -> Grass<C> {
        Grass { c: [self.c[0].eval(t0), C::zero(), self.c[DELTA].eval(t0), C::zero()] }
    }
}

// ---------------------------------------------------------------------------
// EpsExpansion<C>

/// Σ c_{q,m} ε^q (ln ε)^m with q ∈ ½ℤ stored as 2q.
#[derive(Clone, PartialEq, Default)]
pub struct EpsExpansion<C> {
    pub terms: BTreeMap<(i32, u32), C>,
}

impl<C: Coeff> EpsExpansion<C> {
    pub fn term(q2: i32, m: u32, c: C) -> Self {
        let mut e = EpsExpansion { terms: BTreeMap::new() };
        e.push(q2, m, c);
        e
    }

    pub fn constant(c: C) -> Self {
        Self::term(0, 0, c)
    }

    pub fn push(&mut self, q2: i32, m: u32, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&(q2, m)) {
            Some(x) => {
                *x = x.add(&c);
                if x.is_zero() {
                    self.terms.remove(&(q2, m));
                }
            }
            None => {
                self.terms.insert((q2, m), c);
            }
        }
    }

    pub fn coeff(&self, q2: i32, m: u32) -> C {
        self.terms.get(&(q2, m)).cloned().unwrap_or_else(C::zero)
    }

    /// The ε^0 (ln ε)^0 coefficient: the ε → 0 limit once singular terms are gone.
    pub fn constant_term(&self) -> C {
        self.coeff(0, 0)
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> EpsExpansion<D> {
        let mut r = EpsExpansion { terms: BTreeMap::new() };
        for (&(q2, m), c) in &self.terms {
            r.push(q2, m, f(c));
        }
        r
    }

    /// Drop terms with ε-power above `max_q2`/2.
    pub fn truncate_above(&self, max_q2: i32) -> Self {
        EpsExpansion { terms: self.terms.iter().filter(|(k, _)| k.0 <= max_q2).map(|(k, c)| (*k, c.clone())).collect() }
    }
}

impl EpsExpansion<f64> {
    pub fn eval(&self, eps: f64) -> f64 {
        let l = eps.ln();
        self.terms.iter().map(|(&(q2, m), c)| c * eps.powf(q2 as f64 / 2.0) * l.powi(m as i32)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

impl<C: Coeff> fmt::Debug for EpsExpansion<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl<C: Coeff> fmt::Display for EpsExpansion<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(q2, m), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let q = if q2 % 2 == 0 { format!("{}", q2 / 2) } else { format!("{q2}/2") };
            match (q2, m) {
                (0, 0) => write!(f, "({c})")?,
                (_, 0) => write!(f, "({c})*eps^{q}")?,
                (0, _) => write!(f, "({c})*ln(eps)^{m}")?,
                _ => write!(f, "({c})*eps^{q}*ln(eps)^{m}")?,
            }
        }
        Ok(())
    }
}

impl<C: Coeff> Coeff for EpsExpansion<C> {
    fn zero() -> Self {
        EpsExpansion { terms: BTreeMap::new() }
    }
    fn one() -> Self {
        Self::constant(C::one())
    }
    fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (&(q2, m), c) in &o.terms {
            r.push(q2, m, c.clone());
        }
        r
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    fn neg(&self) -> Self {
        self.map(|c| c.neg())
    }
    fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for (&(q1, m1), c1) in &self.terms {
            for (&(q2, m2), c2) in &o.terms {
                r.push(q1 + q2, m1 + m2, c1.mul(c2));
            }
        }
        r
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_q(q: &Q) -> Self {
        Self::constant(C::from_q(q))
    }
    fn odd_part(&self) -> Self {
        self.map(|c| c.odd_part())
    }
    fn involution(&self) -> Self {
        self.map(|c| c.involution())
    }
    fn is_nilpotent(&self) -> bool {
        self.terms.values().all(|c| c.is_nilpotent())
    }
    fn graded() -> bool {
        C::graded()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_overflow_promotes() {
        let big = Q::from(i64::MAX);
        let s = big.add(&big);
        assert!(matches!(s, Q::Big(_)));
        assert_eq!(s.sub(&big), big);
        assert!(matches!(s.sub(&big), Q::Small(..)));
        let x = Q::new(3, 4).mul(&Q::new(8, 9));
        assert_eq!(x, Q::new(2, 3));
    }

    #[test]
    fn q_parse() {
        assert_eq!("1/2".parse::<Q>().unwrap(), Q::new(1, 2));
        assert_eq!("-0.125".parse::<Q>().unwrap(), Q::new(-1, 8));
        assert_eq!(" 7 ".parse::<Q>().unwrap(), Q::from(7));
        assert!("1/0".parse::<Q>().is_err());
    }

    #[test]
    fn q_approximate() {
        assert_eq!(Q::approximate(0.75, 100).unwrap(), Q::new(3, 4));
        assert_eq!(Q::approximate(-2.0 / 3.0 + 1e-14, 1000).unwrap(), Q::new(-2, 3));
    }

    #[test]
    fn exprat_product() {
        let a = ExpRat::exp_neg(Q::new(1, 2)).add(&ExpRat::one());
        let b = ExpRat::exp_neg(Q::new(1, 2)).sub(&ExpRat::one());
        // (E+1)(E-1) = E(1) - 1
        let p = a.mul(&b);
        assert_eq!(p, ExpRat::exp_neg(Q::from(1)).sub(&ExpRat::one()));
        assert!((p.to_f64() - ((-1f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn grass_anticommutes() {
        let dt = Grass::<Q>::dt();
        let d = Grass::<Q>::delta();
        assert_eq!(dt.mul(&d), d.mul(&dt).neg());
        assert!(dt.mul(&dt).is_zero());
        assert_eq!(dt.mul(&d).d_delta_left(), dt.neg());
    }

    #[test]
    fn forms_d_squares_to_zero_and_is_derivation() {
        let t = Poly::monomial(Q::one(), 1);
        let a: Forms<Q> = Grass::from_poly(t.mul(&t)).add(&Grass::generator(DELTA, t.clone()));
        let b: Forms<Q> = Grass::generator(DT, t.clone()).add(&Grass::from_poly(Poly::constant(Q::from(3))));
        assert!(a.d_dr().d_dr().is_zero());
        let lhs = a.mul(&b).d_dr();
        let rhs = a.d_dr().mul(&b).add(&a.involution().mul(&b.d_dr()));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn eval_kills_dt() {
        let t = Poly::monomial(Q::one(), 1);
        let a: Forms<Q> = Grass::from_poly(t.clone()).add(&Grass::generator(DT, t));
        let e = a.eval_at(&Q::one());
        assert_eq!(e, Grass::scalar(Q::one()));
    }

    #[test]
    fn eps_ring_closure() {
        let a = EpsExpansion::term(-2, 0, 3.0).add(&EpsExpansion::term(0, 1, -1.0));
        let b = EpsExpansion::term(1, 1, 2.0);
        let p = a.mul(&b);
        assert_eq!(p.coeff(-1, 1), 6.0);
        assert_eq!(p.coeff(1, 2), -2.0);
        let e = 0.01;
        assert!((p.eval(e) - a.eval(e) * b.eval(e)).abs() < 1e-12);
    }
}
