//! Small dense linear algebra: symmetric matrices that grow one row per game
//! round, an incrementally extended Cholesky factorization, and a few helpers
//! used by tests and oracles (explicit SPD inverse, Jacobi eigenvalues).
//!
//! Game covariance matrices stay small (one row per round), so everything is
//! dense and row-major. The Cholesky factor is append-only: adding a query
//! costs O(i²) instead of refactoring at O(i³).

use std::fmt;

/// Errors from factorizations and solves.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Matrix is not positive definite at the given pivot.
    NotPositiveDefinite { pivot: usize, value: f64 },
    /// Operand dimensions do not agree.
    DimensionMismatch { expected: usize, actual: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotPositiveDefinite { pivot, value } => {
                write!(f, "matrix not positive definite: pivot {pivot} = {value:e}")
            }
            Self::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Dense symmetric matrix, row-major, grown one bordered row/column at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn empty() -> Self {
        SymMatrix { dim: 0, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut data = vec![0.0; dim * dim];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "square matrix required");
            data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        SymMatrix { dim, data }
    }

    pub fn identity(dim: usize, scale: f64) -> Self {
        let mut m = SymMatrix { dim, data: vec![0.0; dim * dim] };
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Appends the bordered row `[cov^T, diag]`, growing the dimension by one.
    pub fn extend(&mut self, cov: &[f64], diag: f64) {
        assert_eq!(cov.len(), self.dim, "border length must match dimension");
        let old = self.dim;
        let new = old + 1;
        let mut data = vec![0.0; new * new];
        for i in 0..old {
            data[i * new..i * new + old].copy_from_slice(&self.data[i * old..(i + 1) * old]);
            data[i * new + old] = cov[i];
            data[old * new + i] = cov[i];
        }
        data[old * new + old] = diag;
        self.dim = new;
        self.data = data;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            y[i] = dot(row, x);
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// Explicit inverse by Gauss-Jordan with partial pivoting. Test/oracle use
    /// only; game code goes through [`Cholesky`].
    pub fn inverse(&self) -> Result<SymMatrix, LinalgError> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut inv = SymMatrix::identity(n, 1.0).data;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[piv * n + col].abs() {
                    piv = r;
                }
            }
            if a[piv * n + col].abs() < 1e-300 {
                return Err(LinalgError::NotPositiveDefinite { pivot: col, value: a[piv * n + col] });
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Ok(SymMatrix { dim: n, data: inv })
    }

    /// Eigenvalues by cyclic Jacobi rotations. Used by tests to certify
    /// positive semidefiniteness of augmented covariances.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        if n == 0 {
            return Vec::new();
        }
        let mut a = self.data.clone();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i * n + j] * a[i * n + j];
                }
            }
            if off.sqrt() < 1e-14 * (1.0 + frobenius(&a)) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor, packed row-major, extended one row at a
/// time as queries accumulate.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    // Row i occupies the packed range [i(i+1)/2, i(i+1)/2 + i].
    l: Vec<f64>,
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { dim: 0, l: Vec::new() }
    }

    /// Factors a full symmetric matrix (test/setup convenience).
    pub fn factor(m: &SymMatrix) -> Result<Self, LinalgError> {
        let mut c = Cholesky::empty();
        for i in 0..m.dim() {
            let row: Vec<f64> = (0..i).map(|j| m.get(i, j)).collect();
            c.extend(&row, m.get(i, i), 0.0)?;
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.l[start..start + i + 1]
    }

    /// Appends the bordered row for a matrix extension `[cov^T, diag]`.
    ///
    /// `floor` is the smallest admissible pivot: degenerate extensions (the
    /// least-favorable adversary sits exactly on the PSD boundary) clamp the
    /// new diagonal entry of L to sqrt(floor) instead of failing.
    pub fn extend(&mut self, cov: &[f64], diag: f64, floor: f64) -> Result<(), LinalgError> {
        if cov.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, actual: cov.len() });
        }
        let y = self.solve_lower(cov);
        let mut pivot = diag - dot(&y, &y);
        if pivot < floor {
            if floor == 0.0 {
                return Err(LinalgError::NotPositiveDefinite { pivot: self.dim, value: pivot });
            }
            pivot = floor;
        }
        self.l.extend_from_slice(&y);
        self.l.push(pivot.sqrt());
        self.dim += 1;
        Ok(())
    }

    /// Residual `diag - ||L^{-1} cov||²` of a hypothetical extension: the
    /// Schur complement, i.e. the conditional variance of the new coordinate.
    pub fn extension_pivot(&self, cov: &[f64], diag: f64) -> f64 {
        let y = self.solve_lower(cov);
        diag - dot(&y, &y)
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = self.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (b[i] - s) / row[i];
        }
        y
    }

    /// Solves `L^T x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.dim);
        let mut x = y.to_vec();
        for i in (0..self.dim).rev() {
            let row = self.row(i);
            x[i] /= row[i];
            let xi = x[i];
            for j in 0..i {
                x[j] -= row[j] * xi;
            }
        }
        x
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(dim: usize, seed: u64) -> SymMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut b = vec![0.0; dim * dim];
        for v in b.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let mut m = SymMatrix::identity(dim, 0.1);
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += b[i * dim + k] * b[j * dim + k];
                }
                m.set(i, j, s + if i == j { 0.1 } else { 0.0 });
            }
        }
        m
    }

    #[test]
    fn cholesky_solves_match_inverse() {
        for seed in 0..20 {
            let dim = 1 + (seed as usize % 6);
            let m = random_spd(dim, seed);
            let c = Cholesky::factor(&m).unwrap();
            let inv = m.inverse().unwrap();
            let b: Vec<f64> = (0..dim).map(|i| (i as f64) - 1.3).collect();
            let x = c.solve(&b);
            let x_ref = inv.matvec(&b);
            for (a, r) in x.iter().zip(&x_ref) {
                assert!((a - r).abs() < 1e-9 * (1.0 + r.abs()), "{a} vs {r}");
            }
        }
    }

    #[test]
    fn incremental_extension_matches_full_factor() {
        let m = random_spd(5, 7);
        let full = Cholesky::factor(&m).unwrap();
        let mut inc = Cholesky::empty();
        for i in 0..5 {
            let row: Vec<f64> = (0..i).map(|j| m.get(i, j)).collect();
            inc.extend(&row, m.get(i, i), 0.0).unwrap();
        }
        assert_eq!(full.l.len(), inc.l.len());
        for (a, b) in full.l.iter().zip(&inc.l) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_rejects_indefinite_border() {
        let m = SymMatrix::identity(2, 1.0);
        let mut c = Cholesky::factor(&m).unwrap();
        // ||v||² = 2 > diag = 1: not PSD.
        let err = c.extend(&[1.0, 1.0], 1.0, 0.0).unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn jacobi_eigenvalues_sum_to_trace() {
        let m = random_spd(6, 3);
        let ev = m.eigenvalues();
        let trace: f64 = (0..6).map(|i| m.get(i, i)).sum();
        let sum: f64 = ev.iter().sum();
        assert!((trace - sum).abs() < 1e-9 * trace.abs());
        assert!(ev.iter().all(|&l| l > 0.0));
    }
}
