//! Dense feature vectors and matrices, plus the similarity kernels shared by
//! every scorer in the crate.
//!
//! Everything here is double precision and unnormalized: `dot_similarity` is
//! a raw inner product, and only `cosine_similarity` divides by norms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for the crate's deterministic random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent seed for a named sub-stream.
    pub fn derive(self, salt: u64) -> RngSeed {
        // splitmix64 finalizer
        let mut z = self.0 ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

/// An embedding vector with at least one coordinate, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must have dim > 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector has a non-finite entry"));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major dense matrix. Used both for feature stacks (one embedding per
/// row) and for score tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// A stack of embeddings, one per row.
pub type FeatureMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has a non-finite entry"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from rows; all rows must share one length. An empty slice
    /// yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Column-wise mean of the rows, or `None` for a matrix without rows.
    pub fn mean_row(&self) -> Option<Vec<f64>> {
        if self.rows == 0 {
            return None;
        }
        let mut acc = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        let n = self.rows as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }

    /// Horizontal concatenation `[self | other]`; row counts must agree.
    pub fn hconcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::invalid(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine on raw slices; zero when either side has zero norm.
pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        (dot(a, b) / denom).clamp(-1.0, 1.0)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub fn dot_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(dot(a.as_slice(), b.as_slice()))
}

/// `S[i][j] = psi_i · phi_j`: rows index shots, columns index sentences.
pub fn similarity_matrix(phi: &FeatureMatrix, psi: &FeatureMatrix) -> Result<Matrix> {
    check_dims(phi.cols(), psi.cols())?;
    let mut s = Matrix::zeros(psi.rows(), phi.rows());
    for i in 0..psi.rows() {
        let shot = psi.row(i);
        for j in 0..phi.rows() {
            s.set(i, j, dot(shot, phi.row(j)));
        }
    }
    Ok(s)
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(cosine(a.as_slice(), b.as_slice()))
}
