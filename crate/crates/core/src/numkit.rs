//! Dense linear algebra and finite-difference oracles.
//!
//! Every reduction runs in ascending index order so that repeated runs on the
//! same inputs give bitwise-identical results.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dimension at or below which `op_norm` uses a full Jacobi SVD.
pub const JACOBI_MAX_DIM: usize = 32;

const POWER_REL_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
const PIVOT_REL_TOL: f64 = 1e-12;

/// A real column vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Checked constructor: rejects NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("vector entry {i} is not finite")));
        }
        Ok(Vector(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[j] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|v| a * v).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Vector) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    /// Entries at the given positions, in the given order.
    pub fn select(&self, idx: &[usize]) -> Vector {
        Vector(idx.iter().map(|&i| self.0[i]).collect())
    }
}

impl From<Vec<f64>> for Vector {
    /// Unchecked: the caller asserts finiteness. Use [`Vector::new`] at trust boundaries.
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        assert_eq!(self.len(), rhs.len(), "vector length mismatch");
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        assert_eq!(self.len(), rhs.len(), "vector length mismatch");
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<&Vector> for f64 {
    type Output = Vector;
    fn mul(self, rhs: &Vector) -> Vector {
        rhs.scale(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    // Scaled to stay finite for entries near the overflow threshold.
    let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for v in a {
        let t = v / m;
        s += t * t;
    }
    m * s.sqrt()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Checked constructor: the entry count must match and every entry must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entry ({}, {}) is not finite",
                k / cols.max(1),
                k % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_dim(c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        DenseMatrix { rows, cols, data }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Columns at the given positions, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Self::from_raw(self.rows, idx.len(), data)
    }

    /// Rows at the given positions, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.cols * idx.len());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.cols, data)
    }

    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.cols, x.len())?;
        Ok(Vector((0..self.rows).map(|i| dot(self.row(i), x.as_slice())).collect()))
    }

    /// `selfᵀ x`
    pub fn t_matvec(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(Vector(out))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, a: f64) -> DenseMatrix {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|v| a * v).collect())
    }

    /// `self += w * x xᵀ`
    pub fn add_outer(&mut self, w: f64, x: &[f64]) {
        debug_assert!(self.is_square() && self.rows == x.len());
        let n = self.cols;
        for i in 0..n {
            let wi = w * x[i];
            if wi == 0.0 {
                continue;
            }
            let dst = &mut self.data[i * n..(i + 1) * n];
            for (d, xj) in dst.iter_mut().zip(x) {
                *d += wi * xj;
            }
        }
    }

    /// Copy of the upper triangle into the lower one.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                self[(i, j)] = self[(j, i)];
            }
        }
    }

    /// Block matrix `[a b; c d]`.
    pub fn block(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(a.rows, b.rows)?;
        check_dim(c.rows, d.rows)?;
        check_dim(a.cols, c.cols)?;
        check_dim(b.cols, d.cols)?;
        let (r, cc) = (a.rows + c.rows, a.cols + b.cols);
        let mut m = Self::zeros(r, cc);
        for i in 0..r {
            for j in 0..cc {
                m[(i, j)] = match (i < a.rows, j < a.cols) {
                    (true, true) => a[(i, j)],
                    (true, false) => b[(i, j - a.cols)],
                    (false, true) => c[(i - a.rows, j)],
                    (false, false) => d[(i - a.rows, j - a.cols)],
                };
            }
        }
        Ok(m)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    a: DenseMatrix,
    min_pivot: f64,
}

impl Lu {
    /// Fails with [`Error::Singular`] when some pivot falls below `1e-12 * max|a_ij|`.
    pub fn factor(a: &DenseMatrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::InvalidInput(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let threshold = PIVOT_REL_TOL * a.max_abs();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            min_pivot = min_pivot.min(best);
            if best == 0.0 || best < threshold {
                return Err(Error::Singular { pivot: best });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            for i in k + 1..n {
                let m = lu[i * n + k] / piv;
                lu[i * n + k] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= m * lu[k * n + j];
                    }
                }
            }
        }
        if n == 0 {
            min_pivot = 0.0;
        }
        Ok(Lu { n, lu, perm, a: a.clone(), min_pivot })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    fn substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solve `A x = b`, with one step of iterative refinement.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        check_dim(self.n, b.len())?;
        let mut x = Vector(self.substitute(b.as_slice()));
        let r = &self.a.matvec(&x)? - b;
        if r.norm2() > 0.0 {
            let dx = self.substitute(r.as_slice());
            for (xi, d) in x.0.iter_mut().zip(dx) {
                *xi -= d;
            }
        }
        Ok(x)
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.n, b.rows)?;
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = self.solve(&b.col(j))?;
            for i in 0..b.rows {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        self.solve_matrix(&DenseMatrix::identity(self.n))
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &Vector) -> Result<Vector> {
        Lu::factor(&self.a.transpose())?.solve(b)
    }
}

/// Lower-triangular `L` with `A = L Lᵀ`; fails unless `A` is symmetric positive definite.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::InvalidInput("cholesky needs a square matrix".into()));
    }
    let n = a.rows;
    let scale = a.max_abs();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PIVOT_REL_TOL * scale) {
            return Err(Error::Singular { pivot: d.max(0.0) });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Pivoted solve of `A x = b`.
pub fn solve_linear(a: &DenseMatrix, b: &Vector) -> Result<Vector> {
    check_dim(a.rows, b.len())?;
    Lu::factor(a)?.solve(b)
}

/// Largest singular value.
///
/// Uses one-sided Jacobi SVD when the smaller dimension is at most
/// [`JACOBI_MAX_DIM`], power iteration on `MᵀM` otherwise.
pub fn op_norm(m: &DenseMatrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("op_norm: non-finite entries".into()));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(0.0);
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let ms = m.scale(1.0 / scale);
    let s = if m.rows.min(m.cols) <= JACOBI_MAX_DIM {
        singular_values(&ms)[0]
    } else {
        power_norm(&ms)
    };
    Ok(s * scale)
}

/// Singular values in descending order (one-sided Jacobi).
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    // Orthogonalize the columns of a tall copy; the column norms are the singular values.
    let a = if m.rows >= m.cols { m.clone() } else { m.transpose() };
    let (r, c) = (a.rows, a.cols);
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| a[(i, j)]).collect()).collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..r {
                    let u = cp[i];
                    let v = cq[i];
                    cp[i] = cs * u - sn * v;
                    cq[i] = sn * u + cs * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn power_norm(m: &DenseMatrix) -> f64 {
    let n = m.cols;
    // Deterministic start with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.5 * ((j as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITER {
        let mv = m.matvec(&Vector(v.clone())).expect("dims");
        let w = m.t_matvec(&mv).expect("dims").0;
        let rq = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.iter().map(|x| x / nw).collect();
        if (rq - lambda).abs() <= POWER_REL_TOL * rq.abs() {
            lambda = rq;
            break;
        }
        lambda = rq;
    }
    lambda.max(0.0).sqrt()
}

/// Central-difference Jacobian; column `j` is `(f(θ+h e_j) − f(θ−h e_j)) / 2h`.
pub fn fd_jacobian<F>(f: F, theta: &Vector, h: f64) -> Result<DenseMatrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("fd step must be positive, got {h}")));
    }
    let p = theta.len();
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        let fp = f(&tp)?;
        let fm = f(&tm)?;
        check_dim(fp.len(), fm.len())?;
        cols.push((&fp - &fm).scale(0.5 / h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    let mut jac = DenseMatrix::zeros(m, p);
    for (j, c) in cols.iter().enumerate() {
        check_dim(m, c.len())?;
        for i in 0..m {
            jac[(i, j)] = c[i];
        }
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, theta: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let jac = fd_jacobian(|t| Ok(Vector(vec![f(t)?])), theta, h)?;
    Ok(Vector(jac.row(0).to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&DenseMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-12);
        assert!((op_norm(&DenseMatrix::from_diag(&[3.0, 4.0])).unwrap() - 4.0).abs() < 1e-12);
        assert!((op_norm(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(op_norm(&DenseMatrix::zeros(2, 3)).unwrap(), 0.0);
    }

    #[test]
    fn op_norm_rejects_nonfinite() {
        let bad = DenseMatrix::from_raw(1, 1, vec![f64::NAN]);
        assert!(matches!(op_norm(&bad), Err(Error::InvalidInput(_))));
        assert!(DenseMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn power_path_agrees_with_jacobi() {
        let n = 40;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 3.0 } else { 0.0 };
            }
        }
        let p = power_norm(&a.scale(1.0 / a.max_abs())) * a.max_abs();
        let s = singular_values(&a)[0];
        assert!((p - s).abs() <= 1e-10 * s, "{p} vs {s}");
    }

    #[test]
    fn rectangular_norm() {
        // [[3,0],[4,0],[0,0]] has a single nonzero singular value 5.
        let a = m(&[&[3.0, 0.0], &[4.0, 0.0], &[0.0, 0.0]]);
        assert!((op_norm(&a).unwrap() - 5.0).abs() < 1e-12);
        assert!((op_norm(&a.transpose()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn solve_examples() {
        let x = solve_linear(&DenseMatrix::identity(2), &Vector::from(vec![1.0, 2.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let x = solve_linear(&DenseMatrix::from_diag(&[2.0, 4.0]), &Vector::from(vec![2.0, 4.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
        let x = solve_linear(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), &Vector::from(vec![3.0, 3.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_reports_pivot() {
        match solve_linear(&m(&[&[1.0, 2.0], &[2.0, 4.0]]), &Vector::from(vec![1.0, 1.0])) {
            Err(Error::Singular { pivot }) => assert!(pivot < 1e-12),
            other => panic!("expected singular, got {other:?}"),
        }
        assert!(matches!(Lu::factor(&DenseMatrix::zeros(2, 2)), Err(Error::Singular { .. })));
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = solve_linear(&a, &Vector::from(vec![5.0, 7.0])).unwrap();
        assert_eq!(x.as_slice(), &[7.0, 5.0]);
    }

    #[test]
    fn fd_examples() {
        let t = Vector::from(vec![0.3, -1.1]);
        let id = fd_jacobian(|x| Ok(x.clone()), &t, 1e-5).unwrap();
        assert!(id.sub(&DenseMatrix::identity(2)).unwrap().max_abs() < 1e-10);

        let sq = fd_jacobian(|x| Ok(Vector::from(vec![x[0] * x[0], x[1] * x[1]])), &Vector::from(vec![1.0, 2.0]), 1e-5)
            .unwrap();
        assert!(sq.sub(&DenseMatrix::from_diag(&[2.0, 4.0])).unwrap().max_abs() < 1e-6);

        let c = fd_jacobian(|_| Ok(Vector::from(vec![4.0, 2.0, 1.0])), &t, 1e-3).unwrap();
        assert_eq!((c.rows(), c.cols()), (3, 2));
        assert_eq!(c.max_abs(), 0.0);

        assert!(fd_jacobian(|x| Ok(x.clone()), &t, 0.0).is_err());
    }

    #[test]
    fn fd_propagates_errors() {
        let r = fd_jacobian(|_| Err(Error::InvalidInput("boom".into())), &Vector::zeros(1), 1e-3);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn block_assembly() {
        let a = DenseMatrix::identity(2);
        let b = m(&[&[1.0], &[1.0]]);
        let k = DenseMatrix::block(&a, &b, &b.transpose(), &DenseMatrix::zeros(1, 1)).unwrap();
        assert_eq!(k.row(2), &[1.0, 1.0, 0.0]);
        assert_eq!(k.row(0), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn norm2_is_overflow_safe() {
        let v = Vector::from(vec![1e200, 1e200]);
        assert!((v.norm2() / 1e200 - 2f64.sqrt()).abs() < 1e-15);
    }
}
