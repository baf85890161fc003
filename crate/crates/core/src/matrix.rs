//! Dense complex matrices and the elementwise/structural kernels the rest of
//! the crate is built on.
//!
//! Values are double-precision complex scalars in row-major order. All
//! operations are pure; nothing here holds shared mutable state.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense m×n complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting bad dimensions,
    /// wrong entry counts, and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                left_rows: rows,
                left_cols: cols,
                right_rows: data.len() / cols.max(1),
                right_cols: cols,
            });
        }
        for (idx, z) in data.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / cols,
                    col: idx % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Basis matrix with a single 1 at (i, j).
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.set(i, j, Complex64::new(1.0, 0.0));
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let data = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(self.shape_mismatch(other));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(self.shape_mismatch(other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(self.shape_mismatch(other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.scale_complex(Complex64::new(alpha, 0.0))
    }

    pub fn scale_complex(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| alpha * z).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conjugate(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> Result<Complex64> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut t = Complex64::new(0.0, 0.0);
        for i in 0..self.rows {
            t += self.get(i, i);
        }
        Ok(t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn shape_mismatch(&self, other: &Self) -> Error {
        Error::ShapeMismatch {
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }

    /// Serializes to the matrix file format:
    /// `{"rows": m, "cols": n, "data": [[re, im], ...]}` row-major.
    pub fn to_json_string(&self) -> String {
        let file = MatrixFile {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| [z.re, z.im]).collect(),
        };
        serde_json::to_string(&file).expect("matrix serialization cannot fail")
    }

    /// Parses the matrix file format, validating entry count and finiteness.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MatrixFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidMatrixFile(e.to_string()))?;
        if file.rows == 0 || file.cols == 0 {
            return Err(Error::InvalidMatrixFile(
                "rows and cols must be positive".into(),
            ));
        }
        if file.data.len() != file.rows * file.cols {
            return Err(Error::InvalidMatrixFile(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                file.rows * file.cols,
                file.rows,
                file.cols,
                file.data.len()
            )));
        }
        let data = file
            .data
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        Self::new(file.rows, file.cols, data)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

/// Real diagonal of order k; carries singular values and their cotangents.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDiagonal {
    values: Vec<f64>,
}

impl RealDiagonal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: i });
            }
        }
        Ok(Self { values })
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Expands into a dense k×k complex matrix.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let k = self.order();
        let mut m = ComplexMatrix::zeros(k, k);
        for (i, &v) in self.values.iter().enumerate() {
            m.set(i, i, Complex64::new(v, 0.0));
        }
        m
    }
}

/// Elementwise product of two equal-shaped matrices.
pub fn hadamard(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch {
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: y.rows(),
            right_cols: y.cols(),
        });
    }
    Ok(ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        x.get(i, j) * y.get(i, j)
    }))
}

/// Keeps the diagonal of a square matrix, zeroing everything else.
pub fn diag_part(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::NotSquare {
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        if i == j {
            x.get(i, j)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Zeroes the diagonal of a square matrix, keeping everything else.
pub fn offdiag_part(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::NotSquare {
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        if i == j {
            Complex64::new(0.0, 0.0)
        } else {
            x.get(i, j)
        }
    }))
}

/// Real inner product Re tr(X† Y). This is the pairing under which all
/// gradients in the crate are defined.
pub fn real_inner(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch {
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: y.rows(),
            right_cols: y.cols(),
        });
    }
    let mut acc = 0.0;
    for (a, b) in x.entries().iter().zip(y.entries()) {
        acc += a.re * b.re + a.im * b.im;
    }
    Ok(acc)
}

/// ‖a − b‖_F / max(‖b‖_F, 1e-300).
pub fn rel_frobenius_error(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = a.sub(b).map(|d| d.frobenius_norm()).unwrap_or(f64::NAN);
    diff / b.frobenius_norm().max(1e-300)
}

/// How `seeded_random` shapes the spectrum of the generated matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumPolicy {
    /// U₀·diag(2^(k-1), ..., 2, 1)·V₀† with random unitary factors; the
    /// power-of-two singular values guarantee pairwise gaps.
    WellSeparated,
    /// I.i.d. complex Gaussian entries.
    Unconstrained,
}

/// Deterministic random matrix generation; identical seeds give bitwise
/// identical matrices.
pub fn seeded_random(rows: usize, cols: usize, seed: u64, policy: SpectrumPolicy) -> ComplexMatrix {
    assert!(rows > 0 && cols > 0, "dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match policy {
        SpectrumPolicy::Unconstrained => {
            ComplexMatrix::from_fn(rows, cols, |_, _| gaussian_complex(&mut rng))
        }
        SpectrumPolicy::WellSeparated => {
            let k = rows.min(cols);
            let u0 = haar_columns(rows, k, &mut rng);
            let v0 = haar_columns(cols, k, &mut rng);
            let mut scaled = u0;
            for j in 0..k {
                let s = (1u64 << (k - 1 - j)) as f64;
                for i in 0..rows {
                    let v = scaled.get(i, j) * s;
                    scaled.set(i, j, v);
                }
            }
            scaled.matmul(&v0.adjoint()).expect("shapes fixed")
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on (0,1] uniforms.
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn gaussian_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(standard_normal(rng), standard_normal(rng))
}

/// n×k matrix with orthonormal columns from Gram-Schmidt on Gaussian data.
fn haar_columns(n: usize, k: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    assert!(k <= n);
    let mut q = ComplexMatrix::zeros(n, k);
    for j in 0..k {
        loop {
            let mut col: Vec<Complex64> = (0..n).map(|_| gaussian_complex(rng)).collect();
            // Two orthogonalization passes keep loss of orthogonality at
            // machine precision.
            for _ in 0..2 {
                for prev in 0..j {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        dot += q.get(i, prev).conj() * col[i];
                    }
                    for i in 0..n {
                        col[i] -= dot * q.get(i, prev);
                    }
                }
            }
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for i in 0..n {
                    q.set(i, j, col[i] / norm);
                }
                break;
            }
        }
    }
    q
}
