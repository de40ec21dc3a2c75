//! Small dense linear algebra and statistics kernel.
//!
//! Everything here is a pure function over owned or borrowed values. Random
//! draws always come from a generator passed in by the caller.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest jitter the Cholesky factorisation is allowed to add to the diagonal.
pub const MAX_JITTER: f64 = 1e-3;

/// Default first jitter step.
pub const DEFAULT_JITTER_START: f64 = 1e-9;

/// Pooled sample size up to which the rank test enumerates labelings exactly.
pub const EXACT_RANK_TEST_LIMIT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("cholesky decomposition failed even with jitter {0:e}")]
    DecompositionFailed(f64),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("sample must not be empty")]
    EmptySample,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("data has zero variance in every direction")]
    ZeroVariance,
    #[error("non-finite value encountered")]
    NonFinite,
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), m, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: n,
            cols: m,
            data,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumError> {
        if self.cols != other.rows {
            return Err(NumError::DimensionMismatch {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
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

    /// `selfᵀ · self`, the Gram matrix of the columns.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..n {
                    out.data[i * n + j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, NumError> {
        if v.len() != self.cols {
            return Err(NumError::DimensionMismatch {
                expected: self.cols,
                actual: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest `|a_ij - a_ji|`, or `None` for a non-square matrix.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Some(worst)
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Lower-triangular Cholesky factor together with the jitter it needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub lower: Matrix,
    pub jitter: f64,
}

/// Factorises a symmetric PSD matrix as `L·Lᵀ = a + δI`.
///
/// `δ` starts at 0 and then walks `jitter_start, 10·jitter_start, …` up to
/// [`MAX_JITTER`]. A diagonal entry whose whole row in `a` is exactly zero
/// gets a zero column in `L` instead of forcing jitter, so fully degenerate
/// directions stay degenerate.
pub fn cholesky(a: &Matrix, jitter_start: f64) -> Result<Cholesky, NumError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NumError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(NumError::NonFinite);
    }
    let scale = a.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = a.asymmetry().unwrap_or(0.0);
    if asym > 1e-10 * scale {
        return Err(NumError::NotSymmetric(asym));
    }

    let mut jitter = 0.0;
    loop {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(Cholesky { lower, jitter });
        }
        jitter = if jitter == 0.0 {
            jitter_start
        } else {
            jitter * 10.0
        };
        if jitter > MAX_JITTER * (1.0 + 1e-12) || jitter <= 0.0 {
            return Err(NumError::DecompositionFailed(jitter));
        }
    }
}

fn try_cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let decoupled = jitter == 0.0 && (0..n).all(|k| a[(j, k)] == 0.0);
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if decoupled {
            // zero column: L[i][j] stays 0 for every i
            continue;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Draws `mean + L·u` with `u` a vector of independent standard normals.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    chol_lower: &Matrix,
    rng: &mut R,
) -> Result<Vec<f64>, NumError> {
    let n = mean.len();
    if chol_lower.rows() != n || chol_lower.cols() != n {
        return Err(NumError::DimensionMismatch {
            expected: n,
            actual: chol_lower.rows(),
        });
    }
    let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, uk) in u.iter().enumerate().take(i + 1) {
                acc += chol_lower[(i, k)] * uk;
            }
            mean[i] + acc
        })
        .collect())
}

/// Least-squares slope of `ys` against the indices `0..n`.
pub fn fit_line_slope(ys: &[f64]) -> Result<f64, NumError> {
    let n = ys.len();
    if n < 2 {
        return Err(NumError::TooFewPoints(n));
    }
    let x_mean = (n - 1) as f64 / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// The first sample tends to be larger than the second.
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApproximation,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestMethod::Exact => f.write_str("exact"),
            TestMethod::NormalApproximation => f.write_str("normal-approximation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Midranks (1-based) of `values`, ties sharing the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney U test of `first` against `second`.
///
/// The reported statistic is the U of `first`. With [`Alternative::Greater`]
/// the p-value is the probability, under exchangeability, of a U at least as
/// large as the observed one. Pooled sizes up to [`EXACT_RANK_TEST_LIMIT`]
/// enumerate every labeling of the pooled midranks; larger samples use the
/// tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(
    first: &[f64],
    second: &[f64],
    alternative: Alternative,
) -> Result<RankTestResult, NumError> {
    if first.is_empty() || second.is_empty() {
        return Err(NumError::EmptySample);
    }
    if first.iter().chain(second).any(|x| !x.is_finite()) {
        return Err(NumError::NonFinite);
    }
    let n1 = first.len();
    let n2 = second.len();
    let n = n1 + n2;
    let pooled: Vec<f64> = first.iter().chain(second).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u_obs = ranks[..n1].iter().sum::<f64>() - offset;

    if n <= EXACT_RANK_TEST_LIMIT {
        let mut total = 0u64;
        let mut ge = 0u64;
        let mut le = 0u64;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let rank_sum: f64 = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            let u = rank_sum - offset;
            total += 1;
            if u >= u_obs {
                ge += 1;
            }
            if u <= u_obs {
                le += 1;
            }
        }
        let p_ge = ge as f64 / total as f64;
        let p_le = le as f64 / total as f64;
        let p_value = match alternative {
            Alternative::Greater => p_ge,
            Alternative::TwoSided => (2.0 * p_ge.min(p_le)).min(1.0),
        };
        return Ok(RankTestResult {
            u_statistic: u_obs,
            p_value,
            method: TestMethod::Exact,
        });
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 = tie_group_sizes(&pooled)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let sd = var.sqrt();
        match alternative {
            Alternative::Greater => {
                let z = (u_obs - mean - 0.5) / sd;
                std_normal.sf(z)
            }
            Alternative::TwoSided => {
                let z = ((u_obs - mean).abs() - 0.5).max(0.0) / sd;
                (2.0 * std_normal.sf(z)).min(1.0)
            }
        }
    };
    Ok(RankTestResult {
        u_statistic: u_obs,
        p_value,
        method: TestMethod::NormalApproximation,
    })
}

fn tie_group_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Result of a principal component fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// `P × M`, orthonormal columns ordered by decreasing variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

/// Top-`latent_dim` principal directions of the rows of `data`.
///
/// Each component's sign is fixed so that its largest-magnitude entry is
/// positive, which keeps fits reproducible across runs.
pub fn pca_fit(data: &Matrix, latent_dim: usize) -> Result<PcaFit, NumError> {
    let n = data.rows();
    let p = data.cols();
    if n < 2 {
        return Err(NumError::InsufficientData(format!(
            "pca needs at least 2 rows, got {n}"
        )));
    }
    if latent_dim == 0 || latent_dim > n.min(p) {
        return Err(NumError::InsufficientData(format!(
            "latent dimension {latent_dim} must be in 1..={}",
            n.min(p)
        )));
    }
    if !data.is_finite() {
        return Err(NumError::NonFinite);
    }
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = data.to_nalgebra();
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] -= mean[j];
        }
    }
    if centered.iter().all(|x| *x == 0.0) {
        return Err(NumError::ZeroVariance);
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.ok_or(NumError::ZeroVariance)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = Matrix::zeros(p, latent_dim);
    let mut explained_variance = Vec::with_capacity(latent_dim);
    for (col, &k) in order.iter().take(latent_dim).enumerate() {
        let row = v_t.row(k);
        let pivot = row
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            components[(j, col)] = sign * row[j];
        }
        let s = svd.singular_values[k];
        explained_variance.push(s * s / (n - 1) as f64);
    }
    Ok(PcaFit {
        mean,
        components,
        explained_variance,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
