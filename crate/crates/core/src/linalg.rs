//! Dense linear algebra kernels used by the PnP solver.

use crate::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Returns singular values in descending order and the matching right
/// singular vectors as the columns of `v` (`cols x cols`). Requires
/// `rows >= cols`.
pub struct Svd<T> {
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
    /// `A V`, whose columns are `σ_i u_i`.
    pub av: Matrix<T>,
}

pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    assert!(a.rows >= a.cols, "svd needs rows >= cols");
    let (m, n) = (a.rows, a.cols);
    // Column-major working copies for cache-friendly column sweeps.
    let mut u: Vec<Vec<T>> = (0..n).map(|c| (0..m).map(|r| a.at(r, c)).collect()).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    alpha += u[p][i] * u[p][i];
                    beta += u[q][i] * u[q][i];
                    gamma += u[p][i] * u[q][i];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (up, uq) = (u[p][i], u[q][i]);
                    u[p][i] = c * up - s * uq;
                    u[q][i] = s * up + c * uq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[p][i], v[q][i]);
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = u
        .iter()
        .map(|col| col.iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut vm = Matrix::zeros(n, n);
    let mut av = Matrix::zeros(m, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vm.set(r, dst, v[src][r]);
        }
        for r in 0..m {
            av.set(r, dst, u[src][r]);
        }
    }
    Svd {
        singular_values: order.iter().map(|&i| norms[i]).collect(),
        v: vm,
        av,
    }
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. `None` if `a` is numerically singular.
pub fn solve<T: Real>(mut a: Matrix<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() {
        return None;
    }
    let tiny = scale * T::epsilon() * T::from_count(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a.at(i, col)
                    .abs()
                    .partial_cmp(&a.at(j, col).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if !(a.at(pivot, col).abs() > tiny) {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                a.data.swap(pivot * n + c, col * n + c);
            }
            b.swap(pivot, col);
        }
        let d = a.at(col, col);
        for r in col + 1..n {
            let f = a.at(r, col) / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = a.at(r, c) - f * a.at(col, c);
                a.set(r, c, v);
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a.at(r, c) * x[c];
        }
        x[r] = acc / a.at(r, r);
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix {
            rows,
            cols,
            data: v.to_vec(),
        }
    }

    #[test]
    fn svd_reconstructs_singular_values() {
        let a = mat(4, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0, 0.0, 2.0, 0.5, 0.5, 0.5]);
        let s = svd(&a);
        // Singular values squared are eigenvalues of AᵀA; check trace identity.
        let fro: f64 = a.data.iter().map(|x| x * x).sum();
        let sum_sq: f64 = s.singular_values.iter().map(|x| x * x).sum();
        assert!((fro - sum_sq).abs() < 1e-12);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        // A v_i has norm σ_i.
        for i in 0..3 {
            let mut norm = 0.0;
            for r in 0..4 {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += a.at(r, c) * s.v.at(c, i);
                }
                norm += acc * acc;
            }
            assert!((norm.sqrt() - s.singular_values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_finds_null_vector() {
        // Rows orthogonal to (1, -2, 1).
        let a = mat(3, 3, &[1.0, 1.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 1.0]);
        let s = svd(&a);
        assert!(s.singular_values[2] < 1e-14);
        let n = [s.v.at(0, 2), s.v.at(1, 2), s.v.at(2, 2)];
        let k = n[0];
        assert!((n[1] / k + 2.0).abs() < 1e-12 && (n[2] / k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_small_system() {
        let a = mat(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let x = solve(a, vec![5.0, 3.0, 6.0]).unwrap();
        let expect = [1.4, 1.6, 1.8];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(solve(mat(2, 2, &[1.0, 2.0, 2.0, 4.0]), vec![1.0, 1.0]).is_none());
    }
}
