//! Small dense complex linear algebra.
//!
//! Everything here works on matrices of dimension at most a few dozen: the
//! internal spaces of collisional thermostats are tiny, so the routines favour
//! robustness and reproducibility over asymptotic speed. Matrices are stored
//! row-major.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Relative tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Pivots below this fraction of the largest entry are treated as singular.
pub const SINGULAR_PIVOT: f64 = 1e-14;
/// Condition estimate above which `solve` logs a warning.
pub const CONDITION_WARN: f64 = 1e8;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian: max |A_ij - conj(A_ji)| = {max_asymmetry:e}")]
    NotHermitian { max_asymmetry: f64 },
    #[error("matrix is singular: pivot {pivot:e} at column {column}, condition estimate {condition:e}")]
    Singular { column: usize, pivot: f64, condition: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },
    #[error("function not defined at eigenvalue {eigenvalue}")]
    FunctionUndefined { eigenvalue: f64 },
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        assert_eq!(data.len(), rows * cols, "entry count must equal rows * cols");
        Self { rows, cols, data }
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self::from_fn(n, m, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Assembles `[[a, b], [c, d]]` from four equally sized square blocks.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let n = a.rows;
        for blk in [a, b, c, d] {
            assert!(blk.rows == n && blk.cols == n, "blocks must be square and equal");
        }
        Self::from_fn(2 * n, 2 * n, |i, j| {
            let blk = match (i < n, j < n) {
                (true, true) => a,
                (true, false) => b,
                (false, true) => c,
                (false, false) => d,
            };
            blk[(i % n, j % n)]
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Copies the `rows x cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Picks the given rows and columns, in order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Left-multiplies by a diagonal matrix given as a vector.
    pub fn diag_mul_left(&self, d: &[C64]) -> Self {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    /// Right-multiplies by a diagonal matrix given as a vector.
    pub fn diag_mul_right(&self, d: &[C64]) -> Self {
        assert_eq!(d.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    /// Largest entry magnitude, `‖A‖_max`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// `max |A_ij - conj(A_ji)|`; zero for Hermitian matrices.
    pub fn hermitian_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// `max |A_ij - A_ji|`; zero for (complex) symmetric matrices.
    pub fn symmetry_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)]).norm());
            }
        }
        d
    }

    /// `‖A†A − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        (&(&self.adjoint() * self) - &Self::identity(self.cols)).max_abs()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().iter().sum()
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Square root with non-negative imaginary part.
///
/// On the real axis this is the principal root, with `sqrt(-x) = +i sqrt(x)`,
/// so evanescent wave vectors decay away from the scatterer.
pub fn principal_sqrt(z: C64) -> C64 {
    if z.im == 0.0 {
        return if z.re >= 0.0 {
            C64::new(z.re.sqrt(), 0.0)
        } else {
            C64::new(0.0, (-z.re).sqrt())
        };
    }
    let r = z.sqrt();
    if r.im < 0.0 {
        -r
    } else {
        r
    }
}

/// Eigendecomposition `A = V diag(λ) V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unitary; column `j` is the eigenvector of `values[j]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Evaluates `V diag(f(λ)) V†`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> Result<ComplexMatrix, LinalgError> {
        let mut fv = Vec::with_capacity(self.dim());
        for &l in &self.values {
            let y = f(l);
            if !(y.re.is_finite() && y.im.is_finite()) {
                return Err(LinalgError::FunctionUndefined { eigenvalue: l });
            }
            fv.push(y);
        }
        Ok(self.reconstruct_with(&fv))
    }

    /// `V diag(d) V†` for an arbitrary diagonal.
    pub fn reconstruct_with(&self, d: &[C64]) -> ComplexMatrix {
        let v = &self.vectors;
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * d[k] * v[(j, k)].conj()).sum()
        })
    }
}

fn check_hermitian(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL * a.max_abs().max(1.0) {
        return Err(LinalgError::NotHermitian {
            max_asymmetry: defect,
        });
    }
    Ok(())
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Eigenvalues come out ascending; each eigenvector is rotated so that its
/// largest-magnitude component (first one on ties) is real and positive.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<HermitianEigen, LinalgError> {
    check_hermitian(a)?;
    let n = a.rows;
    // symmetrize exactly so rounding in the input does not leak in
    let mut m = ComplexMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(a[(i, i)].re, 0.0)
        } else {
            0.5 * (a[(i, j)] + a[(j, i)].conj())
        }
    });
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius();
    let target = JACOBI_OFF_TOL * scale;

    let mut sweeps = 0;
    while off_diagonal_norm(&m) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off: off_diagonal_norm(&m),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    fix_phases(&mut vectors);
    Ok(HermitianEigen { values, vectors })
}

fn jacobi_rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let h = apq.norm();
    if h == 0.0 {
        return;
    }
    let n = m.rows;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // phase e^{-i phi} turns a_pq real, then a real rotation zeroes it
    let phase = apq.conj() / h;
    let zeta = (aqq - app) / (2.0 * h);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // G restricted to (p, q): [[c, s], [-s*phase, c*phase]]
    let g_pp = C64::new(c, 0.0);
    let g_pq = C64::new(s, 0.0);
    let g_qp = -phase * s;
    let g_qq = phase * c;

    // m <- m G
    for i in 0..n {
        let mip = m[(i, p)];
        let miq = m[(i, q)];
        m[(i, p)] = mip * g_pp + miq * g_qp;
        m[(i, q)] = mip * g_pq + miq * g_qq;
    }
    // m <- G† m
    for j in 0..n {
        let mpj = m[(p, j)];
        let mqj = m[(q, j)];
        m[(p, j)] = g_pp.conj() * mpj + g_qp.conj() * mqj;
        m[(q, j)] = g_pq.conj() * mpj + g_qq.conj() * mqj;
    }
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);
    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
    // v <- v G
    for i in 0..n {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * g_pp + viq * g_qp;
        v[(i, q)] = vip * g_pq + viq * g_qq;
    }
}

fn fix_phases(v: &mut ComplexMatrix) {
    let n = v.rows;
    for j in 0..n {
        let big = (0..n).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
        let pivot = (0..n)
            .find(|&i| v[(i, j)].norm() >= big * (1.0 - 1e-12))
            .unwrap_or(0);
        let z = v[(pivot, j)];
        let rot = z.conj() / z.norm();
        for i in 0..n {
            v[(i, j)] *= rot;
        }
        v[(pivot, j)] = C64::new(v[(pivot, j)].norm(), 0.0);
    }
}

/// `f(A) = V diag(f(λ)) V†` for Hermitian `A`.
pub fn func_of_hermitian(
    a: &ComplexMatrix,
    f: impl Fn(f64) -> C64,
) -> Result<ComplexMatrix, LinalgError> {
    eig_hermitian(a)?.apply(f)
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    /// Ratio of the largest to the smallest pivot magnitude.
    pub condition_estimate: f64,
}

impl Lu {
    pub fn factor(a: &ComplexMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let (pr, pmag) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            pivots.push(pmag);
            if pmag <= SINGULAR_PIVOT * scale || pmag == 0.0 {
                let big = pivots.iter().cloned().fold(0.0, f64::max);
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: pmag,
                    condition: if pmag > 0.0 { big / pmag } else { f64::INFINITY },
                });
            }
            if pr != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pr, j)];
                    lu[(pr, j)] = tmp;
                }
                perm.swap(k, pr);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        let big = pivots.iter().cloned().fold(0.0, f64::max);
        let small = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            lu,
            perm,
            condition_estimate: big / small,
        })
    }

    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        let n = self.lu.rows;
        if b.rows != n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has {} rows, system has {}",
                b.rows, n
            )));
        }
        let m = b.cols;
        let mut x = ComplexMatrix::from_fn(n, m, |i, j| b[(self.perm[i], j)]);
        for c in 0..m {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let lu = Lu::factor(a)?;
    if lu.condition_estimate > CONDITION_WARN {
        log::warn!(
            "ill-conditioned solve: pivot-ratio condition estimate {:e}",
            lu.condition_estimate
        );
    }
    lu.solve(b)
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    solve(a, &ComplexMatrix::identity(a.rows))
}

/// Dense real square matrix, row-major. Used for probability tables.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RealMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(n: usize) -> Self {
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

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
    }

    fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&[1.0, -1.0])
    }

    #[test]
    fn pauli_z_spectrum_and_canonical_vectors() {
        let e = eig_hermitian(&sigma_z()).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)], c(1.0, 0.0));
        assert_eq!(e.vectors[(0, 1)], c(1.0, 0.0));
        assert_eq!(e.vectors[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn pauli_x_spectrum() {
        let e = eig_hermitian(&sigma_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        assert!(e.vectors.unitarity_defect() < 1e-14);
    }

    #[test]
    fn two_qubit_block_spectrum() {
        // Omega = 2, xi = 1, delta_omega = 0, Xi = 1
        let h = ComplexMatrix::from_real_rows(&[
            vec![2.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, -2.0],
        ]);
        let e = eig_hermitian(&h).unwrap();
        let s5 = 5f64.sqrt();
        let want = [-s5, -1.0, 1.0, s5];
        for (got, want) in e.values.iter().zip(want) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn complex_hermitian_reconstruction() {
        let h = ComplexMatrix::from_row_major(
            3,
            3,
            vec![
                c(1.0, 0.0),
                c(0.5, 0.3),
                c(0.0, -1.2),
                c(0.5, -0.3),
                c(-0.7, 0.0),
                c(0.2, 0.1),
                c(0.0, 1.2),
                c(0.2, -0.1),
                c(2.5, 0.0),
            ],
        );
        let e = eig_hermitian(&h).unwrap();
        let d: Vec<C64> = e.values.iter().map(|&l| c(l, 0.0)).collect();
        let back = e.reconstruct_with(&d);
        assert!(back.max_abs_diff(&h) < 1e-13);
        assert!(e.vectors.unitarity_defect() < 1e-13);
        for j in 0..3 {
            let big = (0..3).map(|i| e.vectors[(i, j)].norm()).fold(0.0, f64::max);
            let pivot = (0..3).find(|&i| e.vectors[(i, j)].norm() >= big * (1.0 - 1e-12));
            let z = e.vectors[(pivot.unwrap(), j)];
            assert!(z.im == 0.0 && z.re > 0.0);
        }
    }

    #[test]
    fn non_hermitian_rejected_with_asymmetry() {
        let a = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        match eig_hermitian(&a) {
            Err(LinalgError::NotHermitian { max_asymmetry }) => {
                assert!((max_asymmetry - 2.0).abs() < 1e-15)
            }
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn func_identity_returns_input() {
        let out = func_of_hermitian(&sigma_z(), |l| c(l, 0.0)).unwrap();
        assert!(out.max_abs_diff(&sigma_z()) < 1e-15);
    }

    #[test]
    fn wave_vector_of_diagonal_model() {
        let h0 = ComplexMatrix::from_real_diag(&[2.0, 0.0, 0.0, -2.0]);
        let (e, m) = (10.0, 0.1);
        let k = func_of_hermitian(&h0, |l| principal_sqrt(c(2.0 * m * (e - l), 0.0))).unwrap();
        let want = [1.6f64.sqrt(), 2f64.sqrt(), 2f64.sqrt(), 2.4f64.sqrt()];
        for (i, w) in want.iter().enumerate() {
            assert!((k[(i, i)] - c(*w, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn wave_vector_below_top_eigenvalue_is_evanescent() {
        let h0 = ComplexMatrix::from_real_diag(&[2.0, 0.0, -2.0]);
        let (e, m) = (1.0, 0.1);
        let k = func_of_hermitian(&h0, |l| principal_sqrt(c(2.0 * m * (e - l), 0.0))).unwrap();
        // scalar principal roots, eigenvalue by eigenvalue
        assert!((k[(0, 0)] - c(-0.2, 0.0).sqrt()).norm() < 1e-15);
        assert!((k[(0, 0)] - c(0.0, 0.2f64.sqrt())).norm() < 1e-15);
        assert!((k[(1, 1)] - c(0.2f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn undefined_function_rejected() {
        let r = func_of_hermitian(&sigma_z(), |l| c(1.0 / (l - 1.0), 0.0));
        assert!(matches!(r, Err(LinalgError::FunctionUndefined { .. })));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 2.0), c(3.0, 0.0), c(0.0, -1.0), c(4.0, 4.0)]);
        let x = solve(&ComplexMatrix::identity(2), &b).unwrap();
        assert_eq!(x, b);
        let a = ComplexMatrix::from_real_diag(&[2.0, 4.0]);
        let x = solve(&a, &ComplexMatrix::identity(2)).unwrap();
        assert!(x.max_abs_diff(&ComplexMatrix::from_real_diag(&[0.5, 0.25])) < 1e-16);
    }

    #[test]
    fn singular_solve_rejected() {
        let a = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(
            solve(&a, &ComplexMatrix::identity(2)),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn sqrt_branch_examples() {
        assert_eq!(principal_sqrt(c(-4.0, 0.0)), c(0.0, 2.0));
        assert_eq!(principal_sqrt(c(4.0, 0.0)), c(2.0, 0.0));
        let z = c(-1.0, -0.1);
        let r = principal_sqrt(z);
        assert!(r.im >= 0.0);
        assert!((r * r - z).norm() < 1e-15);
    }
}
