//! Tiny dense solvers for the 1x1..3x3 systems that appear in the model fits.
//! Row-major flat storage, Gaussian elimination with partial pivoting.

/// Solve `A x = b` for an `n x n` row-major matrix. Returns `None` when a
/// pivot is smaller than `1e-12` relative to the largest entry of `A`.
pub(crate) fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let tol = 1e-12 * scale;

    let cols = n + 1;
    let mut aug = vec![0.0; n * cols];
    for i in 0..n {
        aug[i * cols..i * cols + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        aug[i * cols + n] = b[i];
    }

    for col in 0..n {
        let mut piv = col;
        for row in (col + 1)..n {
            if aug[row * cols + col].abs() > aug[piv * cols + col].abs() {
                piv = row;
            }
        }
        if aug[piv * cols + col].abs() < tol {
            return None;
        }
        if piv != col {
            for j in 0..cols {
                aug.swap(col * cols + j, piv * cols + j);
            }
        }
        let pivot = aug[col * cols + col];
        for row in (col + 1)..n {
            let factor = aug[row * cols + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..cols {
                let v = aug[col * cols + j];
                aug[row * cols + j] -= factor * v;
            }
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = aug[i * cols + n];
        for j in (i + 1)..n {
            sum -= aug[i * cols + j] * x[j];
        }
        x[i] = sum / aug[i * cols + i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Invert an `n x n` row-major matrix by solving against the identity.
pub(crate) fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[col] = 1.0;
        let x = solve(a, &e, n)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_3x3() {
        // A = [[2,1,0],[1,3,1],[0,1,2]], x = (1,-2,3) -> b = (0, -2, 4)
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let b = [0.0, -2.0, 4.0];
        let x = solve(&a, &b, 3).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] + 2.0).abs() < 1e-12);
        assert!((x[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn invert_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_is_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2).is_none());
    }
}
