//! Dense row-major `f64` matrices and the handful of linear-algebra
//! primitives the solvers need: products, Frobenius norm, thin SVD,
//! numerical rank and row-space containment.
//!
//! The SVD is delegated to `nalgebra` and checked; on the rare inputs where
//! its output does not reconstruct the matrix, a one-sided Jacobi SVD takes
//! over. Everything else is plain loops with a fixed accumulation order so
//! results are bitwise reproducible.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Iteration cap handed to the SVD backend.
pub const SVD_MAX_ITERS: usize = 10_000;

/// A backend SVD whose reconstruction or orthogonality error exceeds this
/// (relative) is discarded.
pub const SVD_CHECK_RTOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Absolute singular-value threshold used by the compression pipeline.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-3;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Crate-internal constructor for data produced by finite arithmetic.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_vec_unchecked(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Panics on non-finite values; the matrix never holds NaN or Inf.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        assert!(value.is_finite(), "non-finite matrix entry");
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub(crate) fn set_col(&mut self, c: usize, values: &[f64]) {
        for (r, &v) in values.iter().enumerate() {
            self.data[r * self.cols + c] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    /// Euclidean norm of each column.
    pub fn col_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (a, x) in acc.iter_mut().zip(self.row(r)) {
                *a += x * x;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|r| norm2(self.row(r))).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec_unchecked(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |r, c| self.get(r, idx[c]))
    }

    /// Stacks `other` below `self`.
    pub fn stack_rows(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self::from_vec_unchecked(self.rows + other.rows, self.cols, data))
    }

    /// Places `other` to the right of `self`.
    pub fn stack_cols(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "cannot place {} rows beside {} rows",
                other.rows, self.rows
            )));
        }
        Ok(Self::from_fn(self.rows, self.cols + other.cols, |r, c| {
            if c < self.cols {
                self.get(r, c)
            } else {
                other.get(r, c - self.cols)
            }
        }))
    }

    /// Subtracts each row's mean from that row.
    pub fn center_rows(&self) -> Self {
        let mut out = self.clone();
        if self.cols == 0 {
            return out;
        }
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter_mut().for_each(|x| *x -= mean);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let o_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in o_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ * b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_tn {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let b_row = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let o_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in o_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// `a * bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "matmul_nt {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(a_row, b.row(j));
        }
    }
    Ok(out)
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    norm2(&a.data)
}

/// Thin singular value decomposition `a = U diag(s) Vt`, singular values
/// sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    let k = a.rows.min(a.cols);
    if k == 0 {
        return Ok(Svd {
            u: Matrix::zeros(a.rows, 0),
            singular_values: Vec::new(),
            vt: Matrix::zeros(0, a.cols),
        });
    }
    match backend_svd(a) {
        Some(d) if svd_is_accurate(a, &d) => Ok(d),
        _ => jacobi_svd(a),
    }
}

fn backend_svd(a: &Matrix) -> Option<Svd> {
    let raw = a.to_nalgebra().try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)?;
    let (u, vt) = (raw.u?, raw.v_t?);
    let s = raw.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    Some(Svd {
        u: Matrix::from_nalgebra(&u).select_cols(&order),
        singular_values: order.iter().map(|&i| s[i].max(0.0)).collect(),
        vt: Matrix::from_nalgebra(&vt).select_rows(&order),
    })
}

fn svd_is_accurate(a: &Matrix, d: &Svd) -> bool {
    let us = Matrix::from_fn(d.u.rows, d.u.cols, |r, c| d.u.get(r, c) * d.singular_values[c]);
    let Ok(rec) = matmul(&us, &d.vt) else {
        return false;
    };
    let scale = frobenius_norm(a);
    let eye = Matrix::identity(d.singular_values.len());
    let off = |g: Matrix| g.sub(&eye).map(|e| e.max_abs()).unwrap_or(f64::INFINITY);
    rec.sub(a).map(|e| frobenius_norm(&e)).unwrap_or(f64::INFINITY) <= SVD_CHECK_RTOL * scale
        && off(matmul_tn(&d.u, &d.u).unwrap_or_else(|_| Matrix::zeros(0, 0))) <= SVD_CHECK_RTOL
        && off(matmul_nt(&d.vt, &d.vt).unwrap_or_else(|_| Matrix::zeros(0, 0))) <= SVD_CHECK_RTOL
}

/// One-sided (Hestenes) Jacobi on the tall orientation of `a`.
fn jacobi_svd(a: &Matrix) -> Result<Svd> {
    let tall = a.rows >= a.cols;
    let b = if tall { a.clone() } else { a.transpose() };
    let (m, n) = b.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| b.col(j)).collect();
    let mut basis: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = (m as f64).sqrt() * f64::EPSILON;
    // Columns below this carry only round-off and are left alone.
    let floor = (f64::EPSILON * frobenius_norm(&b)).powi(2);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha <= floor || beta <= floor || gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for vecs in [&mut cols, &mut basis] {
                    let (lo, hi) = vecs.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence(JACOBI_MAX_SWEEPS));
    }
    let sigma: Vec<f64> = cols
        .iter()
        .map(|c| {
            let n2 = dot(c, c);
            if n2 <= floor {
                0.0
            } else {
                n2.sqrt()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &j in &order {
        if sigma[j] > 0.0 {
            left.push(cols[j].iter().map(|x| x / sigma[j]).collect());
        } else {
            left.push(vec![0.0; m]);
        }
    }
    // Complete the columns belonging to zero singular values.
    let filled = order.iter().filter(|&&j| sigma[j] > 0.0).count();
    let mut e = 0;
    for slot in filled..n {
        while e < m {
            let mut v: Vec<f64> = (0..m).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            e += 1;
            for _ in 0..2 {
                for prev in &left[..slot] {
                    let h = dot(prev, &v);
                    v.iter_mut().zip(prev).for_each(|(x, p)| *x -= h * p);
                }
            }
            let nv = norm2(&v);
            if nv > 0.5 {
                left[slot] = v.iter().map(|x| x / nv).collect();
                break;
            }
        }
    }
    let u = Matrix::from_fn(m, n, |r, c| left[c][r]);
    let vt = Matrix::from_fn(n, n, |r, c| basis[order[r]][c]);
    let singular_values = order.iter().map(|&j| sigma[j]).collect();
    Ok(if tall {
        Svd { u, singular_values, vt }
    } else {
        Svd {
            u: vt.transpose(),
            singular_values,
            vt: u.transpose(),
        }
    })
}

/// How singular values are compared when counting rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Count singular values strictly above this value.
    Absolute(f64),
    /// Count singular values strictly above this fraction of the largest.
    Relative(f64),
}

impl Threshold {
    pub fn resolve(&self, sigma_max: f64) -> f64 {
        match *self {
            Threshold::Absolute(t) => t,
            Threshold::Relative(f) => f * sigma_max,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = match *self {
            Threshold::Absolute(t) | Threshold::Relative(t) => t,
        };
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rank threshold must be finite and nonnegative, got {t}"
            )));
        }
        Ok(())
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Absolute(DEFAULT_RANK_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub rank: usize,
}

pub fn numerical_rank(a: &Matrix, threshold: Threshold) -> Result<RankReport> {
    threshold.validate()?;
    let singular_values = svd(a)?.singular_values;
    let t = threshold.resolve(singular_values.first().copied().unwrap_or(0.0));
    let rank = singular_values.iter().filter(|&&s| s > t).count();
    Ok(RankReport {
        singular_values,
        threshold: t,
        rank,
    })
}

/// Whether every row of `psi` lies in the row space of `phi`, judged by
/// comparing numerical ranks of `phi` and `[phi; psi]`. A relative threshold
/// is resolved against the largest singular value of the stacked matrix so
/// both ranks use the same cut.
pub fn row_space_contained(psi: &Matrix, phi: &Matrix, threshold: Threshold) -> Result<bool> {
    if psi.cols != phi.cols {
        return Err(Error::Shape(format!(
            "psi has {} columns, phi has {}",
            psi.cols, phi.cols
        )));
    }
    threshold.validate()?;
    let stacked = svd(&phi.stack_rows(psi)?)?.singular_values;
    let t = threshold.resolve(stacked.first().copied().unwrap_or(0.0));
    let own = svd(phi)?.singular_values;
    let rank_stacked = stacked.iter().filter(|&&s| s > t).count();
    let rank_phi = own.iter().filter(|&&s| s > t).count();
    Ok(rank_stacked == rank_phi)
}

/// Moore-Penrose pseudo-inverse, dropping singular values at or below the
/// threshold.
pub fn pinv(a: &Matrix, threshold: Threshold) -> Result<Matrix> {
    let Svd { u, singular_values, vt } = svd(a)?;
    let t = threshold.resolve(singular_values.first().copied().unwrap_or(0.0));
    let mut out = Matrix::zeros(a.cols, a.rows);
    for (k, &s) in singular_values.iter().enumerate() {
        if s <= t {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..a.cols {
            let vik = vt.get(k, i) * inv;
            if vik == 0.0 {
                continue;
            }
            let o_row = out.row_mut(i);
            for (j, o) in o_row.iter_mut().enumerate() {
                *o += vik * u.get(j, k);
            }
        }
    }
    Ok(out)
}

/// Orthonormal basis (as rows) of the row space of `a`.
pub fn row_space_basis(a: &Matrix, threshold: Threshold) -> Result<Matrix> {
    let Svd {
        singular_values, vt, ..
    } = svd(a)?;
    let t = threshold.resolve(singular_values.first().copied().unwrap_or(0.0));
    let keep: Vec<usize> = (0..singular_values.len()).filter(|&i| singular_values[i] > t).collect();
    Ok(vt.select_rows(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = CounterRng::new(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            s
        })
    }

    fn reconstruct(d: &Svd) -> Matrix {
        let us = Matrix::from_fn(d.u.rows(), d.u.cols(), |r, c| d.u.get(r, c) * d.singular_values[c]);
        matmul(&us, &d.vt).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(Matrix::from_vec(2, 2, vec![1.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn identity_and_zero_products() {
        let a = gaussian(3, 4, 1);
        assert_eq!(matmul(&Matrix::identity(3), &a).unwrap(), a);
        assert!(matmul(&a, &Matrix::zeros(4, 2)).unwrap().is_zero());
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = gaussian(2, 3, 7);
        let b = gaussian(3, 2, 8);
        let c = matmul(&a, &b).unwrap();
        let oracle = naive_matmul(&a, &b);
        for (x, y) in c.as_slice().iter().zip(oracle.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn transposed_products_agree() {
        let a = gaussian(5, 3, 2);
        let b = gaussian(5, 4, 3);
        let c = gaussian(6, 3, 4);
        let tn = matmul_tn(&a, &b).unwrap();
        let tn_ref = matmul(&a.transpose(), &b).unwrap();
        let nt = matmul_nt(&a, &c).unwrap();
        let nt_ref = matmul(&a, &c.transpose()).unwrap();
        assert!(frobenius_norm(&tn.sub(&tn_ref).unwrap()) < 1e-12);
        assert!(frobenius_norm(&nt.sub(&nt_ref).unwrap()) < 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 3)), 0.0);
        assert!((frobenius_norm(&Matrix::identity(7)) - 7f64.sqrt()).abs() < 1e-15);
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let d = svd(&Matrix::diag(&[1.0, 3.0])).unwrap();
        assert!((d.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((d.singular_values[1] - 1.0).abs() < 1e-14);
        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert!(z.singular_values.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        for (r, c, seed) in [(6, 4, 11), (4, 6, 12), (30, 30, 13), (200, 200, 14)] {
            let a = gaussian(r, c, seed);
            let d = svd(&a).unwrap();
            let res = frobenius_norm(&a.sub(&reconstruct(&d)).unwrap());
            assert!(res <= 1e-10 * frobenius_norm(&a), "{r}x{c}: {res}");
            assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let utu = matmul_tn(&d.u, &d.u).unwrap();
            let vvt = matmul_nt(&d.vt, &d.vt).unwrap();
            let eye = Matrix::identity(r.min(c));
            assert!(frobenius_norm(&utu.sub(&eye).unwrap()) < 1e-10);
            assert!(frobenius_norm(&vvt.sub(&eye).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn jacobi_matches_backend() {
        for (r, c, seed) in [(7, 3, 21), (3, 7, 22), (12, 12, 23)] {
            let a = gaussian(r, c, seed);
            let j = jacobi_svd(&a).unwrap();
            let b = backend_svd(&a).unwrap();
            assert!(svd_is_accurate(&a, &j), "{r}x{c}");
            for (x, y) in j.singular_values.iter().zip(&b.singular_values) {
                assert!((x - y).abs() <= 1e-12 * b.singular_values[0]);
            }
        }
        // Rank one, with orthonormal completion of the left vectors.
        let outer = Matrix::from_fn(7, 3, |i, j| (i as f64 - 3.0) * (j as f64 + 1.0));
        let j = jacobi_svd(&outer).unwrap();
        assert!(svd_is_accurate(&outer, &j));
        assert!(j.singular_values[1] <= 1e-12 * j.singular_values[0]);
        let padded = outer.transpose().stack_rows(&Matrix::zeros(4, 7)).unwrap();
        assert!(svd_is_accurate(&padded, &jacobi_svd(&padded).unwrap()));
    }

    #[test]
    fn rank_examples() {
        let t = Threshold::Absolute(1e-3);
        assert_eq!(numerical_rank(&Matrix::identity(5), t).unwrap().rank, 5);
        let outer = Matrix::from_fn(4, 6, |i, j| (i as f64 + 1.0) * (j as f64 - 2.5));
        assert_eq!(numerical_rank(&outer, t).unwrap().rank, 1);
        assert!(numerical_rank(&outer, Threshold::Absolute(-1.0)).is_err());
    }

    fn det(m: &Matrix) -> f64 {
        // Gaussian elimination with partial pivoting.
        let n = m.rows();
        let mut a = m.clone();
        let mut d = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a.get(i, k).abs().total_cmp(&a.get(j, k).abs()))
                .unwrap();
            if a.get(p, k) == 0.0 {
                return 0.0;
            }
            if p != k {
                for c in 0..n {
                    let t = a.get(k, c);
                    a.set(k, c, a.get(p, c));
                    a.set(p, c, t);
                }
                d = -d;
            }
            d *= a.get(k, k);
            for i in k + 1..n {
                let f = a.get(i, k) / a.get(k, k);
                for c in k..n {
                    a.set(i, c, a.get(i, c) - f * a.get(k, c));
                }
            }
        }
        d
    }

    #[test]
    fn gaussian_factor_product_has_inner_rank() {
        let b = gaussian(20, 5, 21);
        let c = gaussian(5, 30, 22);
        let a = matmul(&b, &c).unwrap();
        assert_eq!(numerical_rank(&a, Threshold::Absolute(1e-3)).unwrap().rank, 5);
        // Independent check: the leading 5x5 Gram minors of both factors are
        // nonsingular, so the product has rank exactly 5.
        let gb = matmul_tn(&b, &b).unwrap();
        let gc = matmul_nt(&c, &c).unwrap();
        assert!(det(&gb).abs() > 1e-6);
        assert!(det(&gc).abs() > 1e-6);
        let top = a.select_rows(&[0, 1, 2, 3, 4, 5]);
        assert!(det(&matmul_nt(&top, &top).unwrap()).abs() < 1e-6 * det(&gb).abs().max(1.0));
    }

    #[test]
    fn containment_examples() {
        let t = Threshold::Absolute(1e-3);
        let phi = gaussian(4, 6, 31);
        let m = gaussian(3, 4, 32);
        assert!(row_space_contained(&matmul(&m, &phi).unwrap(), &phi, t).unwrap());
        assert!(row_space_contained(&gaussian(3, 5, 33), &Matrix::identity(5), t).unwrap());

        let low = matmul(&gaussian(3, 2, 34), &gaussian(2, 5, 35)).unwrap();
        let psi = gaussian(1, 5, 36);
        assert!(!row_space_contained(&psi, &low, t).unwrap());
        // Least-squares residual of psi against the row space is clearly nonzero.
        let basis = row_space_basis(&low, t).unwrap();
        let coef = matmul_nt(&psi, &basis).unwrap();
        let proj = matmul(&coef, &basis).unwrap();
        assert!(frobenius_norm(&psi.sub(&proj).unwrap()) > 1e-2);
        assert!(row_space_contained(&psi, &Matrix::zeros(2, 4), t).is_err());
    }

    #[test]
    fn pinv_inverts_full_rank() {
        let a = gaussian(4, 4, 41);
        let p = pinv(&a, Threshold::Relative(1e-12)).unwrap();
        let e = matmul(&a, &p).unwrap().sub(&Matrix::identity(4)).unwrap();
        assert!(frobenius_norm(&e) < 1e-9);
    }

    #[test]
    fn centering_zeroes_row_means() {
        let a = gaussian(3, 7, 51).center_rows();
        for r in 0..3 {
            assert!(a.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, p in 1usize..6, q in 1usize..6) {
                let a = gaussian(m, n, seed);
                let b = gaussian(n, p, seed ^ 1);
                let c = gaussian(p, q, seed ^ 2);
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                let scale = frobenius_norm(&left).max(1.0);
                prop_assert!(frobenius_norm(&left.sub(&right).unwrap()) <= 1e-10 * scale);
            }

            #[test]
            fn rank_is_transpose_and_permutation_invariant(seed in any::<u64>(), r in 1usize..5) {
                let a = matmul(&gaussian(6, r, seed), &gaussian(r, 5, seed ^ 9)).unwrap();
                let t = Threshold::Relative(1e-9);
                let ra = numerical_rank(&a, t).unwrap().rank;
                prop_assert_eq!(ra, r);
                prop_assert_eq!(numerical_rank(&a.transpose(), t).unwrap().rank, ra);
                let perm = a.select_rows(&[5, 3, 1, 0, 2, 4]);
                prop_assert_eq!(numerical_rank(&perm, t).unwrap().rank, ra);
            }

            #[test]
            fn product_rows_stay_in_row_space(seed in any::<u64>(), k in 1usize..6, d in 1usize..4) {
                let phi = gaussian(k, 7, seed);
                let m = gaussian(d, k, seed ^ 5);
                let psi = matmul(&m, &phi).unwrap();
                prop_assert!(row_space_contained(&psi, &phi, Threshold::Relative(1e-9)).unwrap());
            }
        }
    }
}
