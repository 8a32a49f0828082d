//! Brute-force Gaussian integral on a one-dimensional real slice.
//!
//! With v = √ħ·w the integral ∫ exp(−m²v²/2ħ + S(v+a)/ħ) dv / ∫ exp(−m²v²/2ħ) dv
//! becomes e^{S(a)/ħ}⟨e^X⟩ with X = (S(√ħw + a) − S(a))/ħ and w ~ N(0, 1/m²).
//! Everything is expanded as a formal series in h = √ħ and a; the Gaussian
//! moments ⟨w^j⟩ are computed by quadrature.

use crate::quad::{quad_1d, QuadError};
use std::collections::BTreeMap;

/// S(φ) = Σ ħ^i c φ^k given as (i, k, c); m2 > 0 is the mass term.
#[derive(Debug, Clone)]
pub struct GaussianLemmaInput {
    pub m2: f64,
    pub action: Vec<(u32, u32, f64)>,
    pub max_hbar: u32,
    pub max_degree: u32,
}

/// ⟨w^j⟩ for the normalized weight e^{−m2 w²/2}, both integrals by quadrature.
pub fn gaussian_moment_quad(m2: f64, j: u32) -> Result<f64, QuadError> {
    if j % 2 == 1 {
        return Ok(0.0);
    }
    let weight = move |w: f64| (-0.5 * m2 * w * w).exp();
    let moment = move |w: f64| {
        let e = (-0.5 * m2 * w * w).exp();
        if e == 0.0 {
            0.0
        } else {
            w.powi(j as i32) * e
        }
    };
    let z = rel_quad(&weight)?;
    let n = rel_quad(&moment)?;
    Ok(n / z)
}

fn rel_quad(f: &dyn Fn(f64) -> f64) -> Result<f64, QuadError> {
    // even integrand: integrate the half line, coarse pass fixes the scale
    let rough = quad_1d(f, 0.0, f64::INFINITY, 1e-3)?.value;
    let tol = (rough.abs() * 1e-13).max(1e-300);
    Ok(2.0 * quad_1d(f, 0.0, f64::INFINITY, tol)?.value)
}

// key (h-power, a-power, w-power)
type Series = BTreeMap<(i32, u32, u32), f64>;

struct Caps {
    h: i32,
    a: u32,
}

fn mul(x: &Series, y: &Series, caps: &Caps) -> Series {
    let mut out = Series::new();
    for (&(p1, r1, j1), &c1) in x {
        for (&(p2, r2, j2), &c2) in y {
            let p = p1 + p2;
            let r = r1 + r2;
            if p > caps.h || r > caps.a {
                continue;
            }
            *out.entry((p, r, j1 + j2)).or_insert(0.0) += c1 * c2;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

fn add_scaled(acc: &mut Series, x: &Series, s: f64) {
    for (&k, &c) in x {
        *acc.entry(k).or_insert(0.0) += s * c;
    }
}

fn binom(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Returns Γ(a) = S(a) + ħ log⟨e^X⟩ as (i, k, coefficient of ħ^i a^k) for
/// i ≤ max_hbar and k ≤ max_degree.
pub fn gaussian_lemma_expansion(input: &GaussianLemmaInput) -> Result<Vec<(u32, u32, f64)>, QuadError> {
    for &(i, k, c) in &input.action {
        assert!(i > 0 || k >= 3 || c == 0.0, "action must be at least cubic modulo ħ");
    }
    let target_h = 2 * input.max_hbar as i32 - 2;
    let caps = Caps {
        h: target_h + input.max_degree as i32,
        a: input.max_degree,
    };
    let mut x = Series::new();
    for &(i, k, c) in &input.action {
        for j in 1..=k {
            let key = (2 * i as i32 - 2 + j as i32, k - j, j);
            if key.0 > caps.h || key.1 > caps.a {
                continue;
            }
            *x.entry(key).or_insert(0.0) += c * binom(k, j);
        }
    }
    // each factor of X raises (h-power + a-power) by at least one
    let nmax = (caps.h + caps.a as i32).max(0) as u32;
    let mut expx = Series::new();
    expx.insert((0, 0, 0), 1.0);
    let mut power = expx.clone();
    let mut fact = 1.0;
    for n in 1..=nmax {
        power = mul(&power, &x, &caps);
        fact *= n as f64;
        add_scaled(&mut expx, &power, 1.0 / fact);
    }
    // average over w
    let mut moments: BTreeMap<u32, f64> = BTreeMap::new();
    let mut avg = Series::new();
    for (&(p, r, j), &c) in &expx {
        if j % 2 == 1 {
            continue;
        }
        let m = match moments.get(&j) {
            Some(&m) => m,
            None => {
                let m = gaussian_moment_quad(input.m2, j)?;
                moments.insert(j, m);
                m
            }
        };
        *avg.entry((p, r, 0)).or_insert(0.0) += c * m;
    }
    // log(1 + Y)
    let mut y = avg;
    if let Some(c) = y.remove(&(0, 0, 0)) {
        assert!((c - 1.0).abs() < 1e-12);
    }
    let mut log = Series::new();
    let mut power = Series::new();
    power.insert((0, 0, 0), 1.0);
    for n in 1..=nmax {
        power = mul(&power, &y, &caps);
        let s = if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
        add_scaled(&mut log, &power, s);
    }
    let mut out: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for &(i, k, c) in &input.action {
        if i <= input.max_hbar && k <= input.max_degree {
            *out.entry((i, k)).or_insert(0.0) += c;
        }
    }
    for (&(p, r, _), &c) in &log {
        // ħ · h^p = ħ^{(p+2)/2}
        if (p + 2) % 2 != 0 || p + 2 < 0 {
            continue;
        }
        let i = ((p + 2) / 2) as u32;
        if i <= input.max_hbar && r <= input.max_degree {
            *out.entry((i, r)).or_insert(0.0) += c;
        }
    }
    Ok(out.into_iter().filter(|(_, c)| *c != 0.0).map(|((i, k), c)| (i, k, c)).collect())
}
