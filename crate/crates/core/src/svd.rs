//! Thin SVD A = U S V† with deterministic, gauge-normalized factors.
//!
//! The factorization is computed by one-sided Jacobi: unitary 2×2 rotations
//! mix column pairs of the working matrix until all columns are mutually
//! orthogonal, which diagonalizes the Gram matrix implicitly. The method is
//! slow but accurate to machine precision, which is what the gradient rules
//! downstream need.
//!
//! A phase gauge U → UΛ, V → VΛ (Λ diagonal unitary) leaves U S V† unchanged,
//! so raw factors are not unique. The engine always finishes with a gauge
//! normalization step picking a deterministic representative: each column of
//! U is rotated so its largest-magnitude entry is real and non-negative.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, RealDiagonal};

/// Thin SVD factors with unitary U (m×k), V (n×k) and non-increasing S.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: ComplexMatrix,
    s: RealDiagonal,
    v: ComplexMatrix,
    rank: usize,
}

impl SvdFactors {
    /// Assembles factors from parts, checking shape conformance only; the
    /// unitarity and ordering invariants are the caller's responsibility.
    pub fn new(u: ComplexMatrix, s: RealDiagonal, v: ComplexMatrix) -> Result<Self> {
        let k = s.order();
        if u.cols() != k || v.cols() != k {
            return Err(Error::ShapeMismatch {
                left_rows: u.rows(),
                left_cols: u.cols(),
                right_rows: v.rows(),
                right_cols: v.cols(),
            });
        }
        let rank = full_rank_count(&s, u.rows().max(v.rows()));
        Ok(Self { u, s, v, rank })
    }

    pub fn u(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn s(&self) -> &RealDiagonal {
        &self.s
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    /// Rows of the decomposed matrix.
    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    /// Columns of the decomposed matrix.
    pub fn cols(&self) -> usize {
        self.v.rows()
    }

    pub fn k(&self) -> usize {
        self.s.order()
    }

    /// Number of singular values above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.k()
    }

    /// U·diag(S)·V†.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut scaled = self.u.clone();
        for j in 0..self.k() {
            let s = self.s.values()[j];
            for i in 0..scaled.rows() {
                let v = scaled.get(i, j) * s;
                scaled.set(i, j, v);
            }
        }
        scaled.matmul(&self.v.adjoint()).expect("shapes conform")
    }
}

fn full_rank_count(s: &RealDiagonal, max_dim: usize) -> usize {
    let tol = 1e-12 * max_dim as f64 * s.max();
    s.values().iter().filter(|&&v| v > tol).count()
}

/// Diagonal unitary Λ = diag(e^{iθ_j}); the gauge freedom of the SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTransform {
    thetas: Vec<f64>,
}

impl GaugeTransform {
    pub fn new(thetas: Vec<f64>) -> Self {
        Self { thetas }
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn order(&self) -> usize {
        self.thetas.len()
    }

    pub fn phases(&self) -> Vec<Complex64> {
        self.thetas
            .iter()
            .map(|&t| Complex64::new(t.cos(), t.sin()))
            .collect()
    }
}

/// Iteration controls for the Jacobi sweep.
#[derive(Debug, Clone)]
pub struct SvdConfig {
    pub max_sweeps: usize,
    /// Columns p, q count as orthogonal once |⟨p,q⟩| ≤ tol·‖p‖‖q‖.
    pub tol: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 64,
            tol: 1e-15,
        }
    }
}

/// Thin SVD with default iteration controls.
pub fn svd(a: &ComplexMatrix) -> Result<SvdFactors> {
    svd_with(a, &SvdConfig::default())
}

/// Thin SVD. Wide inputs are factored through their adjoint; the gauge
/// normalization runs last in either orientation.
pub fn svd_with(a: &ComplexMatrix, config: &SvdConfig) -> Result<SvdFactors> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if a.rows() < a.cols() {
        let f = jacobi_tall(&a.adjoint(), config)?;
        let (u, s, v) = (f.v, f.s, f.u);
        let mut factors = SvdFactors::new(u, s, v)?;
        gauge_normalize(&mut factors);
        return Ok(factors);
    }
    let mut factors = jacobi_tall(a, config)?;
    gauge_normalize(&mut factors);
    Ok(factors)
}

/// One-sided Jacobi on a tall (m ≥ n) matrix.
fn jacobi_tall(a: &ComplexMatrix, config: &SvdConfig) -> Result<SvdFactors> {
    let m = a.rows();
    let n = a.cols();
    let mut w = a.clone();
    let mut v = ComplexMatrix::identity(n);

    let mut converged = n < 2;
    for _ in 0..config.max_sweeps {
        if n < 2 {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (app, aqq, apq) = column_gram(&w, p, q);
                if apq.norm() <= config.tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                apply_rotation(&mut w, &mut v, p, q, app, aqq, apq);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            sweeps: config.max_sweeps,
        });
    }

    // Column norms are the singular values; sort non-increasing, stable in
    // the original column order on ties.
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = ComplexMatrix::zeros(m, n);
    let mut vs = ComplexMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        for i in 0..n {
            vs.set(i, dst, v.get(i, src));
        }
        if norms[src] > 0.0 {
            for i in 0..m {
                u.set(i, dst, w.get(i, src) / norms[src]);
            }
        }
    }

    complete_zero_columns(&mut u, &s);

    SvdFactors::new(u, RealDiagonal::new(s)?, vs)
}

/// Gram data for a column pair: ‖p‖², ‖q‖², ⟨p,q⟩.
fn column_gram(w: &ComplexMatrix, p: usize, q: usize) -> (f64, f64, Complex64) {
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = Complex64::new(0.0, 0.0);
    for i in 0..w.rows() {
        let wp = w.get(i, p);
        let wq = w.get(i, q);
        app += wp.norm_sqr();
        aqq += wq.norm_sqr();
        apq += wp.conj() * wq;
    }
    (app, aqq, apq)
}

/// Unitary 2×2 rotation making columns p and q orthogonal, applied to both
/// the working matrix and the accumulated V.
fn apply_rotation(
    w: &mut ComplexMatrix,
    v: &mut ComplexMatrix,
    p: usize,
    q: usize,
    app: f64,
    aqq: f64,
    apq: Complex64,
) {
    // Strip the phase of the cross term, then solve the real 2×2 problem
    // [[app, |apq|], [|apq|, aqq]].
    let abs_apq = apq.norm();
    let phase = apq / abs_apq;
    let tau = (aqq - app) / (2.0 * abs_apq);
    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;

    // New columns:
    //   p' =  c·p − s·conj(phase)·q
    //   q' =  s·phase·p + c·q
    // which rotates the Gram 2×2 block to diagonal form.
    let sp = s * phase;
    let spc = s * phase.conj();
    for i in 0..w.rows() {
        let wp = w.get(i, p);
        let wq = w.get(i, q);
        w.set(i, p, wp * c - wq * spc);
        w.set(i, q, wp * sp + wq * c);
    }
    for i in 0..v.rows() {
        let vp = v.get(i, p);
        let vq = v.get(i, q);
        v.set(i, p, vp * c - vq * spc);
        v.set(i, q, vp * sp + vq * c);
    }
}

/// Fills U columns belonging to zero singular values with an orthonormal
/// completion built from canonical basis vectors.
fn complete_zero_columns(u: &mut ComplexMatrix, s: &[f64]) {
    let m = u.rows();
    for j in 0..s.len() {
        if s[j] > 0.0 {
            continue;
        }
        // Pick the basis vector whose residual after projection is largest.
        let mut best: Option<(f64, Vec<Complex64>)> = None;
        for cand in 0..m {
            let mut col: Vec<Complex64> = (0..m)
                .map(|i| Complex64::new(if i == cand { 1.0 } else { 0.0 }, 0.0))
                .collect();
            for prev in 0..s.len() {
                if prev == j || (s[prev] == 0.0 && prev > j) {
                    continue;
                }
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    dot += u.get(i, prev).conj() * col[i];
                }
                for i in 0..m {
                    col[i] -= dot * u.get(i, prev);
                }
            }
            let norm2: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            if best.as_ref().is_none_or(|(b, _)| norm2 > *b) {
                best = Some((norm2, col));
            }
        }
        let (norm2, col) = best.expect("m >= 1");
        let norm = norm2.sqrt();
        for i in 0..m {
            u.set(i, j, col[i] / norm);
        }
    }
}

/// Rotates each column pair (U_j, V_j) so that the largest-magnitude entry
/// of U_j (ties broken by lowest row index) becomes real and non-negative.
fn gauge_normalize(f: &mut SvdFactors) {
    let k = f.k();
    for j in 0..k {
        let mut p = 0;
        let mut best = 0.0;
        for i in 0..f.u.rows() {
            let mag = f.u.get(i, j).norm();
            if mag > best {
                best = mag;
                p = i;
            }
        }
        if best == 0.0 {
            continue;
        }
        let pivot = f.u.get(p, j);
        let factor = pivot.conj() / best;
        for i in 0..f.u.rows() {
            let v = f.u.get(i, j) * factor;
            f.u.set(i, j, v);
        }
        for i in 0..f.v.rows() {
            let v = f.v.get(i, j) * factor;
            f.v.set(i, j, v);
        }
    }
}

/// Applies U' = U·Λ, V' = V·Λ. S and the reconstruction are unchanged.
pub fn apply_gauge(f: &SvdFactors, g: &GaugeTransform) -> Result<SvdFactors> {
    if g.order() != f.k() {
        return Err(Error::ShapeMismatch {
            left_rows: f.u().rows(),
            left_cols: f.k(),
            right_rows: g.order(),
            right_cols: 1,
        });
    }
    let phases = g.phases();
    let mut u = f.u().clone();
    let mut v = f.v().clone();
    for j in 0..f.k() {
        for i in 0..u.rows() {
            let val = u.get(i, j) * phases[j];
            u.set(i, j, val);
        }
        for i in 0..v.rows() {
            let val = v.get(i, j) * phases[j];
            v.set(i, j, val);
        }
    }
    SvdFactors::new(u, f.s().clone(), v)
}

/// Minimum relative separation of squared singular values:
/// min_{i≠j} |s_i² − s_j²| / max(1, s_max²), +∞ for a single value.
pub fn spectral_gap(s: &RealDiagonal) -> f64 {
    let k = s.order();
    if k < 2 {
        return f64::INFINITY;
    }
    let sq: Vec<f64> = s.values().iter().map(|v| v * v).collect();
    let scale = sq.iter().copied().fold(0.0, f64::max).max(1.0);
    let mut min_gap = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_gap = min_gap.min((sq[i] - sq[j]).abs());
        }
    }
    min_gap / scale
}
