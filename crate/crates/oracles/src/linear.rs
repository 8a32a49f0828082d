//! Dense f64 linear algebra by plain Gaussian elimination.

/// Rank with partial pivoting; entries below `tol` (relative to the largest
/// entry) count as zero.
pub fn rank_f64(a: &[Vec<f64>], tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let scale = m.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (p, best) = (rank..rows)
            .map(|r| (r, m[r][c].abs()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol * scale {
            continue;
        }
        m.swap(rank, p);
        for r in 0..rows {
            if r != rank {
                let f = m[r][c] / m[rank][c];
                for j in c..cols {
                    m[r][j] -= f * m[rank][j];
                }
            }
        }
        rank += 1;
    }
    rank
}

fn inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))?;
        if m[p][c].abs() < 1e-14 {
            return None;
        }
        m.swap(c, p);
        let d = m[c][c];
        for j in 0..2 * n {
            m[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for j in 0..2 * n {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// V · diag(f(λ)) · V⁻¹ with eigenvectors as the columns of `v`.
pub fn matrix_function_from_eigen(v: &[Vec<f64>], lambda: &[f64], f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let n = v.len();
    let vinv = inverse(v).expect("eigenvector matrix must be invertible");
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| v[i][k] * f(lambda[k]) * vinv[k][j]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_f64(&[vec![1.0, 2.0], vec![2.0, 4.0]], 1e-12), 1);
        assert_eq!(rank_f64(&[vec![1.0, 0.0], vec![0.0, 3.0]], 1e-12), 2);
        assert_eq!(rank_f64(&[vec![0.0, 0.0]], 1e-12), 0);
    }

    #[test]
    fn function_of_diagonalizable() {
        let v = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let h = matrix_function_from_eigen(&v, &[1.0, 4.0], |x| x);
        // H = V diag(1,4) V⁻¹ = [[1,3],[0,4]]
        assert!((h[0][1] - 3.0).abs() < 1e-14);
        let e = matrix_function_from_eigen(&v, &[1.0, 4.0], |x| (-x).exp());
        assert!((e[0][0] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[1][1] - (-4f64).exp()).abs() < 1e-15);
    }
}
