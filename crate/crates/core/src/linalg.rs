//! Small dense linear algebra.
//!
//! Everything here is sized for the handful of degrees of freedom the
//! oscillatory systems use (d ≤ ~32). Storage is row-major `Vec<f64>`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from a list of rows. Panics if the rows are ragged
    /// or do not form a square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must form a square");
            data.extend_from_slice(row);
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    /// Max-abs entry.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        dot(x, &ay)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Symmetric matrix. Symmetry is checked exactly on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for i in 0..m.n {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotStructured("symmetric"));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diag(diag))
    }

    /// `self + s·other`, which stays symmetric.
    pub fn add_scaled(&self, other: &SymMatrix, s: f64) -> SymMatrix {
        SymMatrix(self.0.add(&other.0.scaled(s)))
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.0.bilinear(x, x)
    }

    /// Diagonal entries if every off-diagonal entry is zero.
    pub fn diagonal(&self) -> Option<Vec<f64>> {
        let n = self.0.n;
        for i in 0..n {
            for j in 0..n {
                if i != j && self.0[(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        Some((0..n).map(|i| self.0[(i, i)]).collect())
    }

    /// Positive semidefinite up to a relative tolerance, checked by
    /// factoring `A + tol·(1 + ‖A‖)·I`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let shift = tol * (1.0 + self.0.norm_max());
        Cholesky::factor(&self.add_scaled(&SymMatrix::identity(self.dim()), shift)).is_ok()
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Skew-symmetric matrix (Sᵀ = −S, zero diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix(Matrix);

impl SkewMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for i in 0..m.n {
            if m[(i, i)] != 0.0 {
                return Err(Error::NotStructured("skew-symmetric"));
            }
            for j in 0..i {
                if m[(i, j)] != -m[(j, i)] {
                    return Err(Error::NotStructured("skew-symmetric"));
                }
            }
        }
        Ok(SkewMatrix(m))
    }

    /// The oscillatory generator `[[0, Ω], [−Ω, 0]]` for a diagonal Ω,
    /// scaled by `h`.
    pub fn oscillator_generator(h: f64, omega: &[f64]) -> Self {
        let d = omega.len();
        let mut m = Matrix::zeros(2 * d);
        for (i, &w) in omega.iter().enumerate() {
            m[(i, d + i)] = h * w;
            m[(d + i, i)] = -h * w;
        }
        SkewMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// Solves in place. `x.len()` must equal the factor dimension.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        // L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    Cholesky::factor(a)?.solve(b)
}

/// Cayley transform `(I − S/2)⁻¹ (I + S/2)`, a special orthogonal matrix.
///
/// `I − S/2` is not symmetric, so this uses Gaussian elimination with
/// partial pivoting, one solve per column of `I + S/2`.
pub fn cayley(s: &SkewMatrix) -> Matrix {
    let n = s.dim();
    let half = s.as_matrix().scaled(0.5);
    let lhs = Matrix::identity(n).add(&half.scaled(-1.0));
    let rhs = Matrix::identity(n).add(&half);
    let lu = Lu::factor(&lhs).expect("I - S/2 is invertible for real skew S");
    let mut out = Matrix::zeros(n);
    for j in 0..n {
        let col = lu.solve(&rhs.column(j));
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    out
}

/// LU with partial pivoting; only used for the Cayley transform.
struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Matrix) -> Option<Self> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs()))?;
            if lu[(p, k)] == 0.0 {
                return None;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Some(Lu { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Largest eigenvalue modulus of a 2×2 matrix, from the characteristic
/// polynomial λ² − tr·λ + det.
pub fn spectral_radius_2x2(p: [[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (p[0][0] + p[1][1]);
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (half_tr + r).abs().max((half_tr - r).abs())
    } else {
        // complex pair: |λ|² = det
        det.sqrt()
    }
}

pub fn det_2x2(p: [[f64; 2]; 2]) -> f64 {
    p[0][0] * p[1][1] - p[0][1] * p[1][0]
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
