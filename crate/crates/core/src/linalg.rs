//! Minimal dense kernel for small square systems: vectors, matrices, LU with
//! partial pivoting, and spectral-norm estimation by power iteration.
//!
//! Everything here is sized for the n <= ~200 regime the rest of the crate
//! works in. No blocking, no SIMD, no sparsity: certificates feed exact
//! inequalities, so norm semantics (largest singular value) matter more than
//! throughput.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default relative pivot tolerance: a pivot below `1e-12 * max|a_ij|` is
/// treated as numerically zero. Scale-invariant by construction.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

/// Relative convergence tolerance on the Rayleigh quotient in power iteration.
const POWER_ITER_TOL: f64 = 1e-10;

/// Iteration cap for power iteration; generous since n is small.
const POWER_ITER_CAP: usize = 10_000;

/// Raised when elimination meets a pivot below the relative tolerance. This is
/// a first-class outcome (a numerically non-invertible Jacobian), not a bug.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("matrix numerically singular at column {col}: |pivot| = {pivot:.3e} < {threshold:.3e}")]
pub struct SingularError {
    /// Column at which elimination failed.
    pub col: usize,
    /// Absolute value of the offending pivot.
    pub pivot: f64,
    /// Threshold it fell below (`pivot_tol * max|a_ij|`).
    pub threshold: f64,
}

// ─── Vector ──────────────────────────────────────────────────────────────

/// Dense real vector with the Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        assert!(!entries.is_empty(), "vectors have dimension >= 1");
        Self(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self::new((0..n).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "add: dimension mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "sub: dimension mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|x| a * x).collect())
    }

    /// `self + a * other`, the workhorse of the integrators.
    pub fn axpy(&self, a: f64, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "axpy: dimension mismatch");
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

// ─── Matrix ──────────────────────────────────────────────────────────────

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrices have dimension >= 1");
        Self {
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

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "from_rows: not square");
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.n, v.dim(), "matvec: dimension mismatch");
        Vector::from_fn(self.n, |i| {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            row.iter().zip(v.iter()).map(|(a, x)| a * x).sum()
        })
    }

    /// `Aᵀ · v` without forming the transpose.
    pub fn tr_matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.n, v.dim(), "tr_matvec: dimension mismatch");
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let vi = v[i];
            let row = &self.data[i * self.n..(i + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Vector::new(out)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "sub: dimension mismatch");
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

// ─── LU factorization ────────────────────────────────────────────────────

/// Packed LU factors of a row-permuted matrix: `P·A = L·U` with unit lower
/// triangle L stored below the diagonal of `lu` and U on and above it.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Matrix,
    // perm[i] = source row of A living at position i after pivoting.
    perm: Vec<usize>,
    smallest_pivot: f64,
}

/// Factor `a` with partial (row) pivoting. Fails with [`SingularError`] iff
/// some pivot has absolute value below `pivot_tol * max|a_ij|`.
pub fn lu_factor(a: &Matrix, pivot_tol: f64) -> Result<LuFactors, SingularError> {
    assert!(pivot_tol > 0.0, "pivot_tol must be positive");
    let n = a.dim();
    let max_abs = a.max_abs();
    let threshold = pivot_tol * max_abs;
    if max_abs == 0.0 {
        // The zero matrix never trips the relative test; reject it outright.
        return Err(SingularError {
            col: 0,
            pivot: 0.0,
            threshold,
        });
    }

    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut smallest_pivot = f64::INFINITY;

    for k in 0..n {
        let (imax, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty pivot column");
        if pmax < threshold || !pmax.is_finite() {
            return Err(SingularError {
                col: k,
                pivot: pmax,
                threshold,
            });
        }
        if imax != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(imax, j)];
                lu[(imax, j)] = tmp;
            }
            perm.swap(k, imax);
        }
        smallest_pivot = smallest_pivot.min(pmax);
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                lu[(i, j)] -= factor * ukj;
            }
        }
    }

    Ok(LuFactors {
        lu,
        perm,
        smallest_pivot,
    })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    /// Smallest absolute pivot met during elimination.
    pub fn smallest_pivot(&self) -> f64 {
        self.smallest_pivot
    }

    /// Solve `A·x = b`.
    pub fn solve(&self, b: &Vector) -> Vector {
        let n = self.dim();
        assert_eq!(n, b.dim(), "solve: dimension mismatch");
        // Apply the row permutation, then forward/backward substitution.
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Vector::new(x)
    }

    /// Solve `Aᵀ·w = b` using the same factors (`Aᵀ = Uᵀ·Lᵀ·P`).
    pub fn solve_transposed(&self, b: &Vector) -> Vector {
        let n = self.dim();
        assert_eq!(n, b.dim(), "solve_transposed: dimension mismatch");
        // Uᵀ s = b (forward, diagonal of U), then Lᵀ r = s (backward, unit).
        let mut s = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for (j, sj) in s.iter().enumerate().take(i) {
                acc -= self.lu[(j, i)] * sj;
            }
            s[i] = acc / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let rj = s[j];
                s[i] -= self.lu[(j, i)] * rj;
            }
        }
        // Undo the permutation: P·w = r.
        let mut w = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            w[p] = s[i];
        }
        Vector::new(w)
    }

    /// Explicit inverse by column-wise solves. Quadratic in solve cost; meant
    /// as an oracle for small n, not a fast path.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n);
        for j in 0..n {
            let col = self.solve(&Vector::from_fn(n, |i| if i == j { 1.0 } else { 0.0 }));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

// ─── Spectral norms ──────────────────────────────────────────────────────

// Power iteration on the Gram operator v -> adj(fwd(v)). The Rayleigh
// quotient is nondecreasing, so a relative stall is a safe stopping rule.
fn largest_singular_value(
    n: usize,
    fwd: impl Fn(&Vector) -> Vector,
    adj: impl Fn(&Vector) -> Vector,
) -> f64 {
    // Fixed-seed start: deterministic, and almost surely not orthogonal to
    // the dominant singular subspace.
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v = Vector::from_fn(n, |_| rng.random::<f64>() - 0.5);
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return 0.0;
    }
    v = v.scale(1.0 / vnorm);

    let mut lambda_prev = 0.0;
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let z = fwd(&v);
        lambda = z.dot(&z);
        if lambda == 0.0 {
            return 0.0;
        }
        if (lambda - lambda_prev).abs() <= POWER_ITER_TOL * lambda {
            break;
        }
        lambda_prev = lambda;
        let w = adj(&z);
        let wnorm = w.norm();
        if wnorm == 0.0 {
            break;
        }
        v = w.scale(1.0 / wnorm);
    }
    lambda.sqrt()
}

/// Largest singular value of `a` (the operator norm induced by the Euclidean
/// norm), to ~1e-8 relative accuracy.
pub fn operator_norm(a: &Matrix) -> f64 {
    if a.max_abs() == 0.0 {
        return 0.0;
    }
    largest_singular_value(a.dim(), |v| a.matvec(v), |v| a.tr_matvec(v))
}

/// `‖A⁻¹‖` in the spectral norm, i.e. the reciprocal of the smallest singular
/// value of `a`, computed by power iteration on the inverse Gram operator via
/// the LU factors (never forming the inverse).
pub fn inverse_operator_norm(a: &Matrix) -> Result<f64, SingularError> {
    let factors = lu_factor(a, DEFAULT_PIVOT_TOL)?;
    Ok(largest_singular_value(
        a.dim(),
        |v| factors.solve(v),
        |v| factors.solve_transposed(v),
    ))
}

/// Spectral condition number `‖A‖·‖A⁻¹‖`; at least 1 for any invertible `a`.
pub fn condition_number(a: &Matrix) -> Result<f64, SingularError> {
    Ok(operator_norm(a) * inverse_operator_norm(a)?)
}
