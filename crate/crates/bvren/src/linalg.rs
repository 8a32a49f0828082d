//! Dense matrices over a coefficient ring, exact elimination over ℚ, and a
//! few f64 helpers backed by nalgebra.

use crate::coeff::{Coeff, Q};
use nalgebra::DMatrix;

pub type Mat<C> = Vec<Vec<C>>;

pub fn zeros<C: Coeff>(r: usize, c: usize) -> Mat<C> {
    vec![vec![C::zero(); c]; r]
}

pub fn identity<C: Coeff>(n: usize) -> Mat<C> {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C::one();
    }
    m
}

pub fn matmul<C: Coeff>(a: &Mat<C>, b: &Mat<C>) -> Mat<C> {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out: Mat<C> = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..m {
                if !b[l][j].is_zero() {
                    out[i][j].add_assign(&a[i][l].mul(&b[l][j]));
                }
            }
        }
    }
    out
}

pub fn madd<C: Coeff>(a: &Mat<C>, b: &Mat<C>) -> Mat<C> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x.add(y)).collect()).collect()
}

pub fn msub<C: Coeff>(a: &Mat<C>, b: &Mat<C>) -> Mat<C> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x.sub(y)).collect()).collect()
}

pub fn mscale<C: Coeff>(a: &Mat<C>, c: &C) -> Mat<C> {
    a.iter().map(|r| r.iter().map(|x| c.mul(x)).collect()).collect()
}

pub fn transpose<C: Coeff>(a: &Mat<C>) -> Mat<C> {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j].clone()).collect()).collect()
}

pub fn mmap<C: Coeff, D: Coeff>(a: &Mat<C>, f: impl Fn(&C) -> D) -> Mat<D> {
    a.iter().map(|r| r.iter().map(&f).collect()).collect()
}

pub fn is_zero_mat<C: Coeff>(a: &Mat<C>) -> bool {
    a.iter().all(|r| r.iter().all(|x| x.is_zero()))
}

/// Row echelon form over ℚ; returns (reduced matrix, pivot columns).
pub fn rref(a: &Mat<Q>) -> (Mat<Q>, Vec<usize>) {
    let mut m = a.clone();
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].inv().expect("nonzero pivot");
        for j in c..cols {
            m[r][j] = m[r][j].mul(&inv);
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let t = f.mul(&m[r][j]);
                    m[i][j] = m[i][j].sub(&t);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (m, pivots)
}

pub fn rank(a: &Mat<Q>) -> usize {
    rref(a).1.len()
}

pub fn inverse(a: &Mat<Q>) -> Option<Mat<Q>> {
    let n = a.len();
    let aug: Mat<Q> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Q::one() } else { Q::zero() }));
            r
        })
        .collect();
    let (m, piv) = rref(&aug);
    if piv.len() < n || piv[n - 1] != n - 1 {
        return None;
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Basis of the null space, as column vectors.
pub fn nullspace(a: &Mat<Q>, ncols: usize) -> Vec<Vec<Q>> {
    if a.is_empty() {
        return (0..ncols)
            .map(|j| (0..ncols).map(|i| if i == j { Q::one() } else { Q::zero() }).collect())
            .collect();
    }
    let (m, piv) = rref(a);
    let mut out = Vec::new();
    for free in (0..ncols).filter(|c| !piv.contains(c)) {
        let mut v = vec![Q::zero(); ncols];
        v[free] = Q::one();
        for (r, &pc) in piv.iter().enumerate() {
            v[pc] = m[r][free].neg();
        }
        out.push(v);
    }
    out
}

pub fn columns_to_mat(cols: &[Vec<Q>], n: usize) -> Mat<Q> {
    (0..n).map(|i| cols.iter().map(|c| c[i].clone()).collect()).collect()
}

pub fn to_dmatrix(a: &Mat<Q>) -> DMatrix<f64> {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    DMatrix::from_fn(n, m, |i, j| a[i][j].to_f64())
}

pub fn from_dmatrix(a: &DMatrix<f64>) -> Mat<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// Scaling-and-squaring exponential with a degree-18 Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().fold(0.0f64, |s, x| s.max(x.abs())) * n as f64;
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Q {
        Q::from(n)
    }

    #[test]
    fn inverse_roundtrip() {
        let a = vec![vec![q(2), q(1)], vec![q(1), q(1)]];
        let ai = inverse(&a).unwrap();
        assert_eq!(matmul(&a, &ai), identity(2));
        assert!(inverse(&vec![vec![q(1), q(2)], vec![q(2), q(4)]]).is_none());
    }

    #[test]
    fn nullspace_dimension() {
        let a = vec![vec![q(1), q(2), q(3)], vec![q(2), q(4), q(6)]];
        let ns = nullspace(&a, 3);
        assert_eq!(ns.len(), 2);
        for v in ns {
            let col: Mat<Q> = v.iter().map(|x| vec![x.clone()]).collect();
            assert!(is_zero_mat(&matmul(&a, &col)));
        }
    }

    #[test]
    fn expm_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -4.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-4f64).exp()).abs() < 1e-14);
    }
}
