//! Small dense kernels on row-major `n × n` slices. Large factorizations go
//! through faer in `simulate`.

/// In-place lower Cholesky factorization of the leading `n × n` block of a
/// row-major matrix with row stride `stride`. Only the lower triangle is read.
/// Returns `false` if a pivot is not strictly positive.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize, stride: usize) -> bool {
    for j in 0..n {
        let row_j = j * stride;
        let mut diag = a[row_j + j];
        for k in 0..j {
            diag -= a[row_j + k] * a[row_j + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[row_j + j] = ljj;
        let inv = 1.0 / ljj;
        for i in (j + 1)..n {
            let row_i = i * stride;
            let mut s = a[row_i + j];
            for k in 0..j {
                s -= a[row_i + k] * a[row_j + k];
            }
            a[row_i + j] = s * inv;
        }
    }
    true
}

/// Solves `L x = b` in place for lower-triangular `L` (row-major, stride).
pub(crate) fn forward_solve(l: &[f64], n: usize, stride: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = i * stride;
        let mut s = b[i];
        for k in 0..i {
            s -= l[row + k] * b[k];
        }
        b[i] = s / l[row + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn backward_solve_transposed(l: &[f64], n: usize, stride: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * stride + i] * b[k];
        }
        b[i] = s / l[i * stride + i];
    }
}

/// Inverse of a symmetric positive definite `n × n` matrix.
pub(crate) fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    if !cholesky_in_place(&mut l, n, n) {
        return None;
    }
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        forward_solve(&l, n, n, &mut col);
        backward_solve_transposed(&l, n, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    // Symmetrize against rounding.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = v;
            inv[j * n + i] = v;
        }
    }
    Some(inv)
}

/// Columns of a Gram matrix `XᵀX` that are (numerically) linear combinations
/// of earlier columns, found by a Cholesky sweep on the unit-diagonal scaling.
pub(crate) fn dependent_columns(gram: &[f64], n: usize, rel_tol: f64) -> Vec<usize> {
    let scale: Vec<f64> = (0..n).map(|i| gram[i * n + i].max(0.0).sqrt()).collect();
    let mut l = vec![0.0; n * n];
    let mut dependent = Vec::new();
    for j in 0..n {
        if scale[j] == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut diag = 1.0;
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= rel_tol {
            dependent.push(j);
            continue;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            if scale[i] == 0.0 {
                continue;
            }
            let mut s = gram[i * n + j] / (scale[i] * scale[j]);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (-((i as f64 - j as f64).abs()) / 3.0).exp();
            }
            a[i * n + i] += 0.1;
        }
        a
    }

    #[test]
    fn inverse_recovers_identity() {
        let n = 6;
        let a = spd(n);
        let inv = spd_inverse(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2, 2));
    }

    #[test]
    fn finds_dependent_columns() {
        // x0 = 1, x1 = t, x2 = 2 + 3t, x3 = 0
        let rows: Vec<[f64; 4]> = (0..10).map(|i| [1.0, i as f64, 2.0 + 3.0 * i as f64, 0.0]).collect();
        let mut g = vec![0.0; 16];
        for r in &rows {
            for i in 0..4 {
                for j in 0..4 {
                    g[i * 4 + j] += r[i] * r[j];
                }
            }
        }
        assert_eq!(dependent_columns(&g, 4, 1e-10), vec![2, 3]);
    }
}
