//! Wick contractions by explicit enumeration of perfect matchings.

use std::ops::{Add, Mul};

/// All perfect matchings of `0..n` as lists of pairs. Empty for odd `n`.
pub fn perfect_matchings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        let first = rest[0];
        for j in 1..rest.len() {
            let mut next: Vec<usize> = Vec::with_capacity(rest.len() - 2);
            next.extend_from_slice(&rest[1..j]);
            next.extend_from_slice(&rest[j + 1..]);
            cur.push((first, rest[j]));
            rec(&next, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n % 2 == 1 {
        return out;
    }
    let idx: Vec<usize> = (0..n).collect();
    rec(&idx, &mut Vec::new(), &mut out);
    out
}

/// ⟨Π_i x_i^{powers[i]}⟩ for a centred Gaussian with covariance `prop`,
/// summed over every pairing of the half-edges.
pub fn wick_sum<T>(prop: &[Vec<T>], powers: &[usize], zero: T, one: T) -> T
where
    T: Clone + Add<Output = T> + Mul<Output = T>,
{
    let mut labels = Vec::new();
    for (i, &p) in powers.iter().enumerate() {
        for _ in 0..p {
            labels.push(i);
        }
    }
    assert!(labels.len() <= 12, "wick oracle limited to 12 half-edges");
    if labels.is_empty() {
        return one;
    }
    let mut total = zero;
    for m in perfect_matchings(labels.len()) {
        let mut term = one.clone();
        for (a, b) in m {
            term = term * prop[labels[a]][labels[b]].clone();
        }
        total = total + term;
    }
    total
}

/// ⟨x^n⟩ for a one-variable Gaussian with ⟨x²⟩ = p. Odd n gives 0.
pub fn wick_moments(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if n % 2 == 1 {
        return 0.0;
    }
    wick_sum(&[vec![p]], &[n], 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_counts() {
        assert_eq!(perfect_matchings(2).len(), 1);
        assert_eq!(perfect_matchings(4).len(), 3);
        assert_eq!(perfect_matchings(6).len(), 15);
        assert_eq!(perfect_matchings(8).len(), 105);
        assert_eq!(perfect_matchings(5).len(), 0);
    }

    #[test]
    fn scalar_moments() {
        assert_eq!(wick_moments(2.0, 2), 2.0);
        assert_eq!(wick_moments(2.0, 4), 12.0);
        assert_eq!(wick_moments(2.0, 6), 120.0);
        assert_eq!(wick_moments(2.0, 3), 0.0);
    }

    #[test]
    fn two_variable() {
        // <x y> with covariance [[a,c],[c,b]] -> c ; <x^2 y^2> = ab + 2c^2
        let prop = vec![vec![2.0, 0.5], vec![0.5, 3.0]];
        assert_eq!(wick_sum(&prop, &[1, 1], 0.0, 1.0), 0.5);
        assert!((wick_sum(&prop, &[2, 2], 0.0f64, 1.0) - (6.0 + 0.5)).abs() < 1e-15);
    }
}
