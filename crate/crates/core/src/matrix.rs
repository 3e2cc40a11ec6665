//! Dense reference matrices.
//!
//! This module is the verification oracle: every protocol state machine in
//! [`crate::protocol`] has an equivalent matrix form, and the matrices built
//! here are multiplied out directly and compared against the simulated state.
//! Storage is dense row-major; the systems checked are small (n + m well under
//! a hundred).

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Absolute tolerance for row/column sums in stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stochasticity {
    Row,
    Column,
}

impl Stochasticity {
    pub fn name(self) -> &'static str {
        match self {
            Stochasticity::Row => "row",
            Stochasticity::Column => "column",
        }
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row vectors; rows must be equally long and finite.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (c, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(Error::NonFiniteEntry {
                        row: r,
                        col: c,
                        value,
                    });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Copy of the sub-matrix starting at `(row0, col0)`.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out[(r, c)] = self[(row0 + r, col0 + c)];
            }
        }
        out
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest strictly positive entry, if any.
    pub fn min_positive_entry(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .reduce(f64::min)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `[A]_alpha`: entries below `alpha` become zero.
pub fn threshold(a: &DenseMatrix, alpha: f64) -> DenseMatrix {
    let mut out = a.clone();
    for v in &mut out.data {
        if *v < alpha {
            *v = 0.0;
        }
    }
    out
}

/// Left-folding accumulator for `A^{k2:k1} = A^{k2} ... A^{k1}`.
///
/// Push matrices in increasing index order; each push left-multiplies.
#[derive(Debug, Clone)]
pub struct ProductAccumulator {
    product: Option<DenseMatrix>,
    len: usize,
}

impl Default for ProductAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ProductAccumulator {
    pub fn new() -> Self {
        ProductAccumulator {
            product: None,
            len: 0,
        }
    }

    pub fn push(&mut self, next: &DenseMatrix) -> Result<()> {
        if !next.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "sequence element must be square, got {}x{}",
                next.rows, next.cols
            )));
        }
        self.product = Some(match self.product.take() {
            None => next.clone(),
            Some(p) => next.matmul(&p)?,
        });
        self.len += 1;
        Ok(())
    }

    /// Number of factors pushed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn product(&self) -> Option<&DenseMatrix> {
        self.product.as_ref()
    }

    pub fn into_product(self) -> Option<DenseMatrix> {
        self.product
    }
}

/// `A^{k2:k1} = A^{k2} A^{k2-1} ... A^{k1}` over `seq` indexed from 0.
pub fn product_range(seq: &[DenseMatrix], k1: usize, k2: usize) -> Result<DenseMatrix> {
    if k1 > k2 {
        return Err(Error::InvalidRange { k1, k2 });
    }
    if k2 >= seq.len() {
        return Err(Error::MissingMatrix(k2));
    }
    let mut acc = ProductAccumulator::new();
    for m in &seq[k1..=k2] {
        acc.push(m)?;
    }
    Ok(acc.into_product().expect("range is nonempty"))
}

/// True iff all entries are `>= -tol` and every row (or column) sums to 1
/// within `tol`.
pub fn check_stochastic(a: &DenseMatrix, mode: Stochasticity, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    if a.data.iter().any(|&v| v < -tol || !v.is_finite()) {
        return false;
    }
    let sums = match mode {
        Stochasticity::Row => a.row_sums(),
        Stochasticity::Column => a.col_sums(),
    };
    sums.iter().all(|s| (s - 1.0).abs() <= tol)
}

/// Like [`check_stochastic`] but returns an error naming the mode.
pub fn require_stochastic(a: &DenseMatrix, mode: Stochasticity, tol: f64) -> Result<()> {
    if check_stochastic(a, mode, tol) {
        Ok(())
    } else {
        Err(Error::NotStochastic(mode.name()))
    }
}

/// `max(v) - min(v)`.
pub fn spread(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Ok(hi - lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPositivityReport {
    /// All checked rows of the product are strictly positive.
    pub strictly_positive: bool,
    /// Smallest entry over the checked rows.
    pub min_entry: f64,
    /// Smallest positive entry over the whole product.
    pub min_positive_entry: f64,
    /// `alpha^(mu_ln - mu_l)`.
    pub bound: f64,
}

impl BlockPositivityReport {
    /// Strict positivity plus every positive entry at or above the bound.
    pub fn holds(&self) -> bool {
        self.strictly_positive && self.min_positive_entry >= self.bound
    }
}

/// Checks that `A^{mu_ln - 1 : mu_l}` is strictly positive with entries at
/// least `alpha^(mu_ln - mu_l)`.
pub fn verify_block_positivity(
    seq: &[DenseMatrix],
    mu_l: usize,
    mu_ln: usize,
    alpha: f64,
) -> Result<BlockPositivityReport> {
    let rows = seq.first().map_or(0, DenseMatrix::rows);
    verify_leading_rows_positivity(seq, mu_l, mu_ln, alpha, rows)
}

/// Variant of [`verify_block_positivity`] that requires strict positivity only
/// in the first `rows` rows; used for the agent rows of buffer-augmented
/// products, whose buffer rows may legitimately be zero.
pub fn verify_leading_rows_positivity(
    seq: &[DenseMatrix],
    mu_l: usize,
    mu_ln: usize,
    alpha: f64,
    rows: usize,
) -> Result<BlockPositivityReport> {
    if mu_ln <= mu_l {
        return Err(Error::InvalidRange {
            k1: mu_l,
            k2: mu_ln,
        });
    }
    let product = product_range(seq, mu_l, mu_ln - 1)?;
    Ok(leading_rows_report(&product, rows, alpha, mu_ln - mu_l))
}

/// Positivity report for an already-multiplied window of `len` factors.
pub fn leading_rows_report(
    product: &DenseMatrix,
    rows: usize,
    alpha: f64,
    len: usize,
) -> BlockPositivityReport {
    let rows = rows.min(product.rows());
    let min_entry = product.data[..rows * product.cols]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    BlockPositivityReport {
        strictly_positive: min_entry > 0.0,
        min_entry,
        min_positive_entry: product.min_positive_entry().unwrap_or(0.0),
        bound: alpha.powi(len as i32),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub spread_before: f64,
    pub spread_after: f64,
    /// `(1 - n beta) * spread_before`.
    pub bound: f64,
    /// `spread_after <= bound`.
    pub contraction_holds: bool,
    /// Every output lies within `[min(u), max(u)]`.
    pub convex_holds: bool,
}

/// Relative slack for the max-min inequality; the bound is tight for
/// averaging matrices so exact comparison would flag rounding.
const CONTRACTION_SLACK: f64 = 1e-12;

/// Checks `spread(A u) <= (1 - n beta) spread(u)` and that each `(A u)_i` is a
/// convex combination of `u`, for a row-stochastic `A` with entries `>= beta`.
pub fn contraction_check(a: &DenseMatrix, beta: f64, u: &[f64]) -> Result<ContractionReport> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("entry floor must be positive, got {beta}"),
        });
    }
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let value = a[(r, c)];
            if value < beta {
                return Err(Error::BelowFloor {
                    row: r,
                    col: c,
                    value,
                    floor: beta,
                });
            }
        }
    }
    require_stochastic(a, Stochasticity::Row, STOCHASTIC_TOL)?;
    let v = a.mul_vec(u)?;
    let spread_before = spread(u)?;
    let spread_after = spread(&v)?;
    let n = a.rows() as f64;
    let bound = (1.0 - n * beta) * spread_before;
    let slack = CONTRACTION_SLACK * spread_before.max(1.0);
    let (lo, hi) = (
        u.iter().copied().fold(f64::INFINITY, f64::min),
        u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(ContractionReport {
        spread_before,
        spread_after,
        bound,
        contraction_holds: spread_after <= bound + slack,
        convex_holds: v.iter().all(|&x| x >= lo - slack && x <= hi + slack),
    })
}
