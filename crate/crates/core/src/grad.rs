//! Reverse-mode (VJP) and forward-mode (JVP) rules for the complex SVD.
//!
//! All gradients use the convention ∇_z L = 2 ∂L/∂z*, the steepest-ascent
//! direction for a real loss of complex variables, and pair with
//! perturbations through `real_inner`.
//!
//! For square A = U S V† with factor gradients (Ū, S̄, V̄) the input gradient
//! is
//!
//!   Ā = U S̄ V† + U (J + J†) S V† + U S (K + K†) V† + ½ U S⁻¹ (L† − L) V†
//!
//! with J = F∘(U†Ū), K = F∘(V†V̄), L = I∘(V†V̄) and F_ij = 1/(s_j² − s_i²)
//! off the diagonal. The fourth, diagonal term exists only for complex
//! inputs: it is sourced by the purely imaginary diagonals of the factor
//! differentials, which vanish identically in the real case. Rectangular
//! inputs add the two projector terms
//!
//!   (I − UU†) Ū S⁻¹ V†   and   U S⁻¹ V̄† (I − VV†).
//!
//! The diagonal term is not unique: gauge invariance of the loss lets it be
//! rewritten through U†Ū instead of V†V̄ (`svd_vjp_square_variant`); the two
//! forms agree exactly on gauge-consistent cotangents and differ otherwise.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{diag_part, hadamard, ComplexMatrix, RealDiagonal};
use crate::svd::{spectral_gap, SvdFactors};

/// Gradients of a real loss with respect to the SVD factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdCotangents {
    /// ∇_U L, shaped like U (m×k).
    pub ubar: ComplexMatrix,
    /// ∂L/∂s_i, real because both L and S are real.
    pub sbar: RealDiagonal,
    /// ∇_V L, shaped like V (n×k).
    pub vbar: ComplexMatrix,
}

impl SvdCotangents {
    pub fn zeros(f: &SvdFactors) -> Self {
        Self {
            ubar: ComplexMatrix::zeros(f.u().rows(), f.k()),
            sbar: RealDiagonal::new(vec![0.0; f.k()]).expect("k >= 1"),
            vbar: ComplexMatrix::zeros(f.v().rows(), f.k()),
        }
    }

    pub fn conforms(&self, f: &SvdFactors) -> bool {
        self.ubar.shape() == f.u().shape()
            && self.vbar.shape() == f.v().shape()
            && self.sbar.order() == f.k()
    }
}

/// k×k gap matrix F with F_ij = 1/(s_j² − s_i²) off-diagonal, zero diagonal.
/// Entries are real; antisymmetry F = −Fᵀ holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMatrix {
    f: ComplexMatrix,
}

impl GapMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.f
    }
}

/// Builds the gap matrix. With broadening ε > 0 the entries become the
/// Lorentzian g/(g² + ε) with g = s_j² − s_i², which stays finite through
/// degeneracies at the cost of bias; with ε = 0 a spectrum whose relative
/// gap is below `degeneracy_tol` is rejected instead of silently
/// regularized.
pub fn build_gap_matrix(
    s: &RealDiagonal,
    degeneracy_tol: f64,
    broadening: f64,
) -> Result<GapMatrix> {
    let k = s.order();
    if broadening == 0.0 {
        let gap = spectral_gap(s);
        if gap < degeneracy_tol {
            return Err(Error::DegenerateSpectrum {
                gap,
                tol: degeneracy_tol,
            });
        }
    }
    let sq: Vec<f64> = s.values().iter().map(|v| v * v).collect();
    let f = ComplexMatrix::from_fn(k, k, |i, j| {
        if i == j {
            Complex64::new(0.0, 0.0)
        } else {
            let g = sq[j] - sq[i];
            let val = if broadening == 0.0 {
                1.0 / g
            } else {
                g / (g * g + broadening)
            };
            Complex64::new(val, 0.0)
        }
    });
    Ok(GapMatrix { f })
}

/// Controls for the VJP formulas.
#[derive(Debug, Clone)]
pub struct VjpOptions {
    /// Ablation switch for the diagonal term; keep `true` for correct
    /// gradients of losses coupling U and V.
    pub include_diagonal_term: bool,
    /// Lorentzian broadening ε for the gap matrix, 0 disables.
    pub broadening: f64,
    /// Degenerate spectra below this relative gap are an error when
    /// broadening is off.
    pub degeneracy_tol: f64,
    /// S⁻¹ is refused when min(S) ≤ sinv_tol_factor · max(S).
    pub sinv_tol_factor: f64,
}

impl Default for VjpOptions {
    fn default() -> Self {
        Self {
            include_diagonal_term: true,
            broadening: 0.0,
            degeneracy_tol: 1e-10,
            sinv_tol_factor: 1e-12,
        }
    }
}

/// The k×k intermediates of the VJP: J = F∘(U†Ū), K = F∘(V†V̄) (both with
/// zero diagonal) and the diagonal L = I∘(V†V̄).
#[derive(Debug, Clone)]
pub struct VjpIntermediates {
    pub j: ComplexMatrix,
    pub k: ComplexMatrix,
    pub ldiag: ComplexMatrix,
}

pub fn vjp_intermediates(
    f: &SvdFactors,
    c: &SvdCotangents,
    opts: &VjpOptions,
) -> Result<VjpIntermediates> {
    check_conformance(f, c)?;
    let gap = build_gap_matrix(f.s(), opts.degeneracy_tol, opts.broadening)?;
    let udu = f.u().adjoint().matmul(&c.ubar)?;
    let vdv = f.v().adjoint().matmul(&c.vbar)?;
    Ok(VjpIntermediates {
        j: hadamard(gap.matrix(), &udu)?,
        k: hadamard(gap.matrix(), &vdv)?,
        ldiag: diag_part(&vdv)?,
    })
}

/// VJP for square matrices: maps factor gradients to the input gradient Ā.
pub fn svd_vjp_square(
    f: &SvdFactors,
    c: &SvdCotangents,
    opts: &VjpOptions,
) -> Result<ComplexMatrix> {
    if f.rows() != f.cols() {
        return Err(Error::NotSquare {
            rows: f.rows(),
            cols: f.cols(),
        });
    }
    let core = vjp_core(f, c, opts, DiagTermSource::VSide)?;
    Ok(core)
}

/// VJP for general rectangular matrices: the square-form core built from the
/// k×k blocks plus the two range-complement projector terms. Coincides with
/// `svd_vjp_square` when m = n because the projectors annihilate everything.
pub fn svd_vjp_rect(f: &SvdFactors, c: &SvdCotangents, opts: &VjpOptions) -> Result<ComplexMatrix> {
    check_conformance(f, c)?;
    let s_max = f.s().max();
    let s_min = f.s().min();
    let sinv_tol = opts.sinv_tol_factor * s_max;
    if s_min <= sinv_tol {
        return Err(Error::SingularSInverse {
            value: s_min,
            tol: sinv_tol,
        });
    }

    let mut out = vjp_core(f, c, opts, DiagTermSource::VSide)?;
    let s = f.s().values();

    // (I − UU†) Ū S⁻¹ V†, with the projector applied as Ū − U(U†Ū).
    let udu = f.u().adjoint().matmul(&c.ubar)?;
    let mut proj_u = c.ubar.sub(&f.u().matmul(&udu)?)?;
    for j in 0..f.k() {
        for i in 0..proj_u.rows() {
            let v = proj_u.get(i, j) / s[j];
            proj_u.set(i, j, v);
        }
    }
    out = out.add(&proj_u.matmul(&f.v().adjoint())?)?;

    // U S⁻¹ V̄† (I − VV†), with the projector applied as V̄† − (V̄†V)V†.
    let vbar_adj = c.vbar.adjoint();
    let vdv_adj = vbar_adj.matmul(f.v())?;
    let mut proj_v = vbar_adj.sub(&vdv_adj.matmul(&f.v().adjoint())?)?;
    for i in 0..f.k() {
        for j in 0..proj_v.cols() {
            let v = proj_v.get(i, j) / s[i];
            proj_v.set(i, j, v);
        }
    }
    out = out.add(&f.u().matmul(&proj_v)?)?;
    Ok(out)
}

/// Gauge-variant form of the square VJP: the diagonal term is expressed
/// through M = I∘(U†Ū) as ½ U S⁻¹ (M − M†) V†. Numerically equal to
/// `svd_vjp_square` exactly when the cotangents satisfy the gauge-invariance
/// condition (zero `gauge_residual`).
pub fn svd_vjp_square_variant(
    f: &SvdFactors,
    c: &SvdCotangents,
    opts: &VjpOptions,
) -> Result<ComplexMatrix> {
    if f.rows() != f.cols() {
        return Err(Error::NotSquare {
            rows: f.rows(),
            cols: f.cols(),
        });
    }
    vjp_core(f, c, opts, DiagTermSource::USide)
}

enum DiagTermSource {
    /// ½ U S⁻¹ (L† − L) V† with L = I∘(V†V̄).
    VSide,
    /// ½ U S⁻¹ (M − M†) V† with M = I∘(U†Ū).
    USide,
}

fn check_conformance(f: &SvdFactors, c: &SvdCotangents) -> Result<()> {
    if !c.conforms(f) {
        return Err(Error::ShapeMismatch {
            left_rows: f.u().rows(),
            left_cols: f.k(),
            right_rows: c.ubar.rows(),
            right_cols: c.ubar.cols(),
        });
    }
    Ok(())
}

/// The four-term square-form VJP on the k×k core.
fn vjp_core(
    f: &SvdFactors,
    c: &SvdCotangents,
    opts: &VjpOptions,
    diag_source: DiagTermSource,
) -> Result<ComplexMatrix> {
    check_conformance(f, c)?;
    let k = f.k();
    let s = f.s().values();
    let gap = build_gap_matrix(f.s(), opts.degeneracy_tol, opts.broadening)?;

    let udu = f.u().adjoint().matmul(&c.ubar)?;
    let vdv = f.v().adjoint().matmul(&c.vbar)?;

    // Term 1: U S̄ V† — the only piece surviving for spectrum-only losses.
    let mut mid = ComplexMatrix::zeros(k, k);
    for i in 0..k {
        mid.set(i, i, Complex64::new(c.sbar.values()[i], 0.0));
    }

    // Term 2: (J + J†) S, column-scaled by s_j.
    let j_mat = hadamard(gap.matrix(), &udu)?;
    let j_sym = j_mat.add(&j_mat.adjoint())?;
    for col in 0..k {
        for row in 0..k {
            let v = mid.get(row, col) + j_sym.get(row, col) * s[col];
            mid.set(row, col, v);
        }
    }

    // Term 3: S (K + K†), row-scaled by s_i.
    let k_mat = hadamard(gap.matrix(), &vdv)?;
    let k_sym = k_mat.add(&k_mat.adjoint())?;
    for row in 0..k {
        for col in 0..k {
            let v = mid.get(row, col) + s[row] * k_sym.get(row, col);
            mid.set(row, col, v);
        }
    }

    // Term 4: the diagonal term, ½ S⁻¹ (L† − L) or ½ S⁻¹ (M − M†). Both
    // reduce to diag(±i·Im(diag)) / s and vanish when the relevant diagonal
    // is real, which is exactly the real-SVD case.
    if opts.include_diagonal_term {
        let source = match diag_source {
            DiagTermSource::VSide => &vdv,
            DiagTermSource::USide => &udu,
        };
        let sign = match diag_source {
            DiagTermSource::VSide => -1.0,
            DiagTermSource::USide => 1.0,
        };
        let imags: Vec<f64> = (0..k).map(|i| source.get(i, i).im).collect();
        if imags.iter().any(|&x| x != 0.0) {
            let s_max = f.s().max();
            let s_min = f.s().min();
            let sinv_tol = opts.sinv_tol_factor * s_max;
            if s_min <= sinv_tol {
                return Err(Error::SingularSInverse {
                    value: s_min,
                    tol: sinv_tol,
                });
            }
            for i in 0..k {
                let v = mid.get(i, i) + Complex64::new(0.0, sign * imags[i] / s[i]);
                mid.set(i, i, v);
            }
        }
    }

    f.u().matmul(&mid)?.matmul(&f.v().adjoint())
}

/// Convention for distributing the purely imaginary diagonal of the factor
/// differentials between dC and dD; only the difference is determined by
/// the differential system, the split itself is gauge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagSplit {
    /// diag(dD) = 0, diag(dC) carries everything (canonical).
    DZero,
    /// The imaginary diagonal is shared evenly between dC and −dD.
    Even,
}

/// Controls for the JVP.
#[derive(Debug, Clone)]
pub struct JvpOptions {
    pub degeneracy_tol: f64,
    pub split: DiagSplit,
}

impl Default for JvpOptions {
    fn default() -> Self {
        Self {
            degeneracy_tol: 1e-10,
            split: DiagSplit::DZero,
        }
    }
}

/// The k×k intermediates of the JVP differential system.
#[derive(Debug, Clone)]
pub struct JvpIntermediates {
    /// U† dA V.
    pub dp: ComplexMatrix,
    /// U† dU; anti-Hermitian with purely imaginary diagonal.
    pub dc: ComplexMatrix,
    /// V† dV; anti-Hermitian with purely imaginary diagonal.
    pub dd: ComplexMatrix,
    pub ds: RealDiagonal,
}

/// Forward-mode rule for square matrices with the canonical diagonal split.
pub fn svd_jvp_square(
    f: &SvdFactors,
    da: &ComplexMatrix,
) -> Result<(ComplexMatrix, RealDiagonal, ComplexMatrix)> {
    svd_jvp_square_with(f, da, &JvpOptions::default())
}

/// Forward-mode rule for square matrices: perturbation dA of the input maps
/// to factor perturbations (dU, dS, dV).
pub fn svd_jvp_square_with(
    f: &SvdFactors,
    da: &ComplexMatrix,
    opts: &JvpOptions,
) -> Result<(ComplexMatrix, RealDiagonal, ComplexMatrix)> {
    let parts = jvp_intermediates(f, da, opts)?;
    let du = f.u().matmul(&parts.dc)?;
    let dv = f.v().matmul(&parts.dd)?;
    Ok((du, parts.ds, dv))
}

pub fn jvp_intermediates(
    f: &SvdFactors,
    da: &ComplexMatrix,
    opts: &JvpOptions,
) -> Result<JvpIntermediates> {
    if f.rows() != f.cols() {
        return Err(Error::NotSquare {
            rows: f.rows(),
            cols: f.cols(),
        });
    }
    if da.shape() != (f.rows(), f.cols()) {
        return Err(Error::ShapeMismatch {
            left_rows: f.rows(),
            left_cols: f.cols(),
            right_rows: da.rows(),
            right_cols: da.cols(),
        });
    }
    let k = f.k();
    let s = f.s().values();
    let gap = build_gap_matrix(f.s(), opts.degeneracy_tol, 0.0)?;

    let dp = f.u().adjoint().matmul(da)?.matmul(f.v())?;

    // dS is the real diagonal part of (dP + dP†)/2.
    let ds: Vec<f64> = (0..k).map(|i| dp.get(i, i).re).collect();

    // Off-diagonals from the Sylvester-type relations
    //   dC_ij = F_ij (dP S + S dP†)_ij,  dD_ij = F_ij (S dP + dP† S)_ij.
    let mut dc = ComplexMatrix::zeros(k, k);
    let mut dd = ComplexMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let fij = gap.matrix().get(i, j).re;
            let dp_ij = dp.get(i, j);
            let dp_ji_conj = dp.get(j, i).conj();
            dc.set(i, j, (dp_ij * s[j] + s[i] * dp_ji_conj).scale(fij));
            dd.set(i, j, (s[i] * dp_ij + dp_ji_conj * s[j]).scale(fij));
        }
    }

    // Diagonals: only diag(dC − dD) = diag((dP − dP†)/2) S⁻¹ is fixed;
    // the split is a free gauge choice.
    let sinv_tol = 1e-12 * f.s().max();
    for i in 0..k {
        let im = dp.get(i, i).im;
        if im == 0.0 {
            continue;
        }
        if s[i] <= sinv_tol {
            return Err(Error::SingularSInverse {
                value: s[i],
                tol: sinv_tol,
            });
        }
        let phi = Complex64::new(0.0, im / s[i]);
        match opts.split {
            DiagSplit::DZero => {
                dc.set(i, i, phi);
            }
            DiagSplit::Even => {
                dc.set(i, i, phi.scale(0.5));
                dd.set(i, i, -phi.scale(0.5));
            }
        }
    }

    Ok(JvpIntermediates {
        dp,
        dc,
        dd,
        ds: RealDiagonal::new(ds)?,
    })
}

/// Violation of the gauge-invariance condition: ‖Im diag(Ū†U + V̄†V)‖₂.
/// Zero exactly when the cotangents are consistent with a gauge-invariant
/// loss at these factors.
pub fn gauge_residual(f: &SvdFactors, c: &SvdCotangents) -> f64 {
    let k = f.k();
    let mut acc = 0.0;
    for j in 0..k {
        let mut diag = Complex64::new(0.0, 0.0);
        for p in 0..f.u().rows() {
            diag += c.ubar.get(p, j).conj() * f.u().get(p, j);
        }
        for q in 0..f.v().rows() {
            diag += c.vbar.get(q, j).conj() * f.v().get(q, j);
        }
        acc += diag.im * diag.im;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{real_inner, rel_frobenius_error, seeded_random, SpectrumPolicy};
    use crate::svd::{apply_gauge, svd, GaugeTransform};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_factors(values: &[f64]) -> SvdFactors {
        let k = values.len();
        SvdFactors::new(
            ComplexMatrix::identity(k),
            RealDiagonal::new(values.to_vec()).unwrap(),
            ComplexMatrix::identity(k),
        )
        .unwrap()
    }

    #[test]
    fn gap_matrix_two_by_two() {
        let s = RealDiagonal::new(vec![2.0, 1.0]).unwrap();
        let g = build_gap_matrix(&s, 1e-10, 0.0).unwrap();
        assert_eq!(g.matrix().get(0, 0), c(0.0, 0.0));
        assert!((g.matrix().get(0, 1).re + 1.0 / 3.0).abs() <= 1e-15);
        assert!((g.matrix().get(1, 0).re - 1.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn gap_matrix_three_by_three() {
        let s = RealDiagonal::new(vec![3.0, 2.0, 1.0]).unwrap();
        let g = build_gap_matrix(&s, 1e-10, 0.0).unwrap();
        let m = g.matrix();
        assert!((m.get(0, 1).re + 0.2).abs() <= 1e-15);
        assert!((m.get(0, 2).re + 0.125).abs() <= 1e-15);
        assert!((m.get(1, 2).re + 1.0 / 3.0).abs() <= 1e-15);
        // Antisymmetry and zero diagonal.
        let sum = m.add(&m.transpose()).unwrap();
        assert!(sum.frobenius_norm() <= 1e-15);
    }

    #[test]
    fn gap_matrix_rejects_degenerate() {
        let s = RealDiagonal::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            build_gap_matrix(&s, 1e-10, 0.0),
            Err(Error::DegenerateSpectrum { .. })
        ));
        // Broadening turns the error into a finite matrix.
        let g = build_gap_matrix(&s, 1e-10, 1e-8).unwrap();
        assert_eq!(g.matrix().get(0, 1), c(0.0, 0.0));
    }

    #[test]
    fn vjp_nuclear_norm_direction() {
        let f = diag_factors(&[2.0, 1.0]);
        let mut cot = SvdCotangents::zeros(&f);
        cot.sbar = RealDiagonal::new(vec![1.0, 1.0]).unwrap();
        let abar = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        assert!(rel_frobenius_error(&abar, &ComplexMatrix::identity(2)) <= 1e-15);
    }

    #[test]
    fn vjp_frobenius_direction() {
        let f = diag_factors(&[2.0, 1.0]);
        let mut cot = SvdCotangents::zeros(&f);
        cot.sbar = f.s().clone();
        let abar = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        let expected = ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(rel_frobenius_error(&abar, &expected) <= 1e-15);
    }

    #[test]
    fn vjp_diagonal_term_worked_example() {
        // V̄ = i·e₀₀ makes L = i·e₀₀; the whole gradient is the diagonal
        // term diag(−i/2, 0).
        let f = diag_factors(&[2.0, 1.0]);
        let mut cot = SvdCotangents::zeros(&f);
        cot.vbar.set(0, 0, c(0.0, 1.0));
        let abar = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        assert!((abar.get(0, 0) - c(0.0, -0.5)).norm() <= 1e-15);
        assert!(abar.get(0, 1).norm() <= 1e-15);
        assert!(abar.get(1, 0).norm() <= 1e-15);
        assert!(abar.get(1, 1).norm() <= 1e-15);

        // Without the diagonal term the gradient vanishes entirely.
        let opts = VjpOptions {
            include_diagonal_term: false,
            ..VjpOptions::default()
        };
        let ablated = svd_vjp_square(&f, &cot, &opts).unwrap();
        assert!(ablated.frobenius_norm() <= 1e-15);
    }

    #[test]
    fn vjp_real_case_hand_check() {
        // Ū = e₀₁ at U = V = I, S = diag(2,1): only the J-term fires and
        // gives [[0, −1/3], [−2/3, 0]].
        let f = diag_factors(&[2.0, 1.0]);
        let mut cot = SvdCotangents::zeros(&f);
        cot.ubar.set(0, 1, c(1.0, 0.0));
        let abar = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        assert!((abar.get(0, 1) - c(-1.0 / 3.0, 0.0)).norm() <= 1e-15);
        assert!((abar.get(1, 0) - c(-2.0 / 3.0, 0.0)).norm() <= 1e-15);
        assert!(abar.get(0, 0).norm() <= 1e-15);
        assert!(abar.get(1, 1).norm() <= 1e-15);
    }

    #[test]
    fn rect_reduces_to_square() {
        let a = seeded_random(3, 3, 40, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let cot = SvdCotangents {
            ubar: seeded_random(3, 3, 41, SpectrumPolicy::Unconstrained),
            sbar: RealDiagonal::new(vec![0.5, -0.25, 1.5]).unwrap(),
            vbar: seeded_random(3, 3, 42, SpectrumPolicy::Unconstrained),
        };
        let opts = VjpOptions::default();
        let square = svd_vjp_square(&f, &cot, &opts).unwrap();
        let rect = svd_vjp_rect(&f, &cot, &opts).unwrap();
        let diff = square.sub(&rect).unwrap().frobenius_norm();
        assert!(
            diff <= 1e-13 * square.frobenius_norm().max(1.0),
            "projector remnants {diff}"
        );
    }

    #[test]
    fn rect_pure_projector_perturbation() {
        let a = seeded_random(4, 2, 6, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        // Build Ū entirely inside the orthogonal complement of range(U).
        let raw = seeded_random(4, 2, 61, SpectrumPolicy::Unconstrained);
        let proj = raw
            .sub(
                &f.u()
                    .matmul(&f.u().adjoint().matmul(&raw).unwrap())
                    .unwrap(),
            )
            .unwrap();
        let cot = SvdCotangents {
            ubar: proj.clone(),
            sbar: RealDiagonal::new(vec![0.0, 0.0]).unwrap(),
            vbar: ComplexMatrix::zeros(2, 2),
        };
        let out = svd_vjp_rect(&f, &cot, &VjpOptions::default()).unwrap();
        // Expected: proj · S⁻¹ · V†.
        let mut scaled = proj;
        for j in 0..2 {
            for i in 0..4 {
                let v = scaled.get(i, j) / f.s().values()[j];
                scaled.set(i, j, v);
            }
        }
        let expected = scaled.matmul(&f.v().adjoint()).unwrap();
        assert!(rel_frobenius_error(&out, &expected) <= 1e-12);
    }

    #[test]
    fn rect_pure_projector_perturbation_wide_side() {
        // Mirror case: V̄ confined to the orthogonal complement of range(V)
        // isolates the U S⁻¹ V̄† (I − VV†) term.
        let a = seeded_random(2, 4, 6, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let raw = seeded_random(4, 2, 62, SpectrumPolicy::Unconstrained);
        let proj = raw
            .sub(
                &f.v()
                    .matmul(&f.v().adjoint().matmul(&raw).unwrap())
                    .unwrap(),
            )
            .unwrap();
        let cot = SvdCotangents {
            ubar: ComplexMatrix::zeros(2, 2),
            sbar: RealDiagonal::new(vec![0.0, 0.0]).unwrap(),
            vbar: proj.clone(),
        };
        let out = svd_vjp_rect(&f, &cot, &VjpOptions::default()).unwrap();
        // Expected: U · S⁻¹ · proj†.
        let mut scaled = proj.adjoint();
        for i in 0..2 {
            for j in 0..4 {
                let v = scaled.get(i, j) / f.s().values()[i];
                scaled.set(i, j, v);
            }
        }
        let expected = f.u().matmul(&scaled).unwrap();
        assert!(rel_frobenius_error(&out, &expected) <= 1e-12);
    }

    #[test]
    fn jvp_diagonal_real_perturbation() {
        let f = diag_factors(&[2.0, 1.0]);
        let da = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let (du, ds, dv) = svd_jvp_square(&f, &da).unwrap();
        assert_eq!(ds.values(), &[1.0, 0.0]);
        assert!(du.frobenius_norm() <= 1e-15);
        assert!(dv.frobenius_norm() <= 1e-15);
    }

    #[test]
    fn jvp_imaginary_perturbation_hits_gauge_diagonal() {
        let f = diag_factors(&[2.0, 1.0]);
        let mut da = ComplexMatrix::zeros(2, 2);
        da.set(0, 0, c(0.0, 1.0));
        let (du, ds, dv) = svd_jvp_square(&f, &da).unwrap();
        assert!(ds.values().iter().all(|&x| x.abs() <= 1e-15));
        assert!((du.get(0, 0) - c(0.0, 0.5)).norm() <= 1e-15);
        assert!(du.get(1, 1).norm() <= 1e-15);
        assert!(dv.frobenius_norm() <= 1e-15);
    }

    #[test]
    fn jvp_differentials_are_anti_hermitian() {
        let a = seeded_random(4, 4, 50, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let da = seeded_random(4, 4, 51, SpectrumPolicy::Unconstrained);
        for split in [DiagSplit::DZero, DiagSplit::Even] {
            let opts = JvpOptions {
                split,
                ..JvpOptions::default()
            };
            let parts = jvp_intermediates(&f, &da, &opts).unwrap();
            let dc_sym = parts.dc.add(&parts.dc.adjoint()).unwrap();
            let dd_sym = parts.dd.add(&parts.dd.adjoint()).unwrap();
            assert!(dc_sym.frobenius_norm() <= 1e-12);
            assert!(dd_sym.frobenius_norm() <= 1e-12);
            for i in 0..4 {
                assert!(parts.dc.get(i, i).re.abs() <= 1e-15);
                assert!(parts.dd.get(i, i).re.abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn variant_equals_primary_for_spectrum_only_cotangents() {
        // With Ū = V̄ = 0 both diagonal-term forms vanish and the two
        // assemblies are the same three terms.
        let a = seeded_random(3, 3, 45, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let mut cot = SvdCotangents::zeros(&f);
        cot.sbar = f.s().clone();
        let primary = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        let variant = svd_vjp_square_variant(&f, &cot, &VjpOptions::default()).unwrap();
        assert!(rel_frobenius_error(&variant, &primary) <= 1e-12);
    }

    #[test]
    fn vjp_intermediates_structure() {
        // J and K carry zero diagonals (masked by the gap matrix); L is
        // diagonal by construction.
        let a = seeded_random(4, 4, 55, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let cot = SvdCotangents {
            ubar: seeded_random(4, 4, 56, SpectrumPolicy::Unconstrained),
            sbar: RealDiagonal::new(vec![0.0; 4]).unwrap(),
            vbar: seeded_random(4, 4, 57, SpectrumPolicy::Unconstrained),
        };
        let parts = vjp_intermediates(&f, &cot, &VjpOptions::default()).unwrap();
        for i in 0..4 {
            assert_eq!(parts.j.get(i, i), c(0.0, 0.0));
            assert_eq!(parts.k.get(i, i), c(0.0, 0.0));
            for j in 0..4 {
                if i != j {
                    assert_eq!(parts.ldiag.get(i, j), c(0.0, 0.0));
                }
            }
        }
        assert!(parts.j.frobenius_norm() > 0.0);
        assert!(parts.ldiag.frobenius_norm() > 0.0);
    }

    #[test]
    fn jvp_matches_factor_finite_differences() {
        // dS is gauge independent and can be differenced directly; dU is
        // gauge dependent, but the left singular projectors u_j u_j† are
        // not, and their differentials are insensitive to the diagonal
        // split. Both give the JVP an oracle that does not route through
        // the VJP.
        let a = seeded_random(4, 4, 58, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let da = seeded_random(4, 4, 59, SpectrumPolicy::Unconstrained);
        let (du, ds, _dv) = svd_jvp_square(&f, &da).unwrap();

        let h = 1e-6;
        let fp = svd(&a.add(&da.scale(h)).unwrap()).unwrap();
        let fm = svd(&a.sub(&da.scale(h)).unwrap()).unwrap();

        for j in 0..4 {
            let fd = (fp.s().values()[j] - fm.s().values()[j]) / (2.0 * h);
            assert!(
                (ds.values()[j] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
                "dS[{j}]: jvp {} fd {fd}",
                ds.values()[j]
            );
        }

        let projector = |u: &ComplexMatrix, j: usize| {
            let col = ComplexMatrix::from_fn(4, 1, |i, _| u.get(i, j));
            col.matmul(&col.adjoint()).unwrap()
        };
        for j in 0..4 {
            let fd_proj = projector(fp.u(), j)
                .sub(&projector(fm.u(), j))
                .unwrap()
                .scale(1.0 / (2.0 * h));
            let du_col = ComplexMatrix::from_fn(4, 1, |i, _| du.get(i, j));
            let u_col = ComplexMatrix::from_fn(4, 1, |i, _| f.u().get(i, j));
            let jvp_proj = du_col
                .matmul(&u_col.adjoint())
                .unwrap()
                .add(&u_col.matmul(&du_col.adjoint()).unwrap())
                .unwrap();
            let rel = rel_frobenius_error(&jvp_proj, &fd_proj);
            assert!(rel <= 1e-6, "projector {j}: rel {rel}");
        }
    }

    #[test]
    fn gauge_residual_examples() {
        let a = seeded_random(3, 3, 30, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();

        // |u00|²: Ū = 2u₀₀·e₀₀ is gauge consistent.
        let mut cot = SvdCotangents::zeros(&f);
        cot.ubar.set(0, 0, f.u().get(0, 0) * 2.0);
        assert!(gauge_residual(&f, &cot) <= 1e-14);

        // Zero cotangents.
        assert_eq!(gauge_residual(&f, &SvdCotangents::zeros(&f)), 0.0);

        // Ū = i·U·e₀₀ is a pure gauge direction with residual 1.
        let e00 = ComplexMatrix::unit(3, 3, 0, 0);
        let mut cot = SvdCotangents::zeros(&f);
        cot.ubar = f.u().matmul(&e00).unwrap().scale_complex(c(0.0, 1.0));
        assert!((gauge_residual(&f, &cot) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn real_case_diagonal_term_is_exactly_zero() {
        // Real factors and real cotangents: L is real so L† − L = 0.
        let f = diag_factors(&[3.0, 1.5, 1.0]);
        let cot = SvdCotangents {
            ubar: ComplexMatrix::from_real(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
                .unwrap(),
            sbar: RealDiagonal::new(vec![1.0, 2.0, 3.0]).unwrap(),
            vbar: ComplexMatrix::from_real(3, 3, &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
                .unwrap(),
        };
        let full = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        let opts = VjpOptions {
            include_diagonal_term: false,
            ..VjpOptions::default()
        };
        let ablated = svd_vjp_square(&f, &cot, &opts).unwrap();
        let term = full.sub(&ablated).unwrap();
        assert!(term.frobenius_norm() <= 1e-14);
    }

    #[test]
    fn gauge_covariance_of_output() {
        let a = seeded_random(4, 4, 70, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let cot = SvdCotangents {
            ubar: seeded_random(4, 4, 71, SpectrumPolicy::Unconstrained),
            sbar: RealDiagonal::new(vec![0.3, -0.4, 0.5, 0.9]).unwrap(),
            vbar: seeded_random(4, 4, 72, SpectrumPolicy::Unconstrained),
        };
        let base = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();

        let g = GaugeTransform::new(vec![0.7, -0.2, 1.9, 2.4]);
        let fg = apply_gauge(&f, &g).unwrap();
        let phases = g.phases();
        let rotate = |m: &ComplexMatrix| {
            let mut out = m.clone();
            for j in 0..4 {
                for i in 0..4 {
                    let v = out.get(i, j) * phases[j];
                    out.set(i, j, v);
                }
            }
            out
        };
        let cot_g = SvdCotangents {
            ubar: rotate(&cot.ubar),
            sbar: cot.sbar.clone(),
            vbar: rotate(&cot.vbar),
        };
        let transformed = svd_vjp_square(&fg, &cot_g, &VjpOptions::default()).unwrap();
        assert!(rel_frobenius_error(&transformed, &base) <= 1e-10);
    }

    #[test]
    fn singular_inverse_guard() {
        let f = diag_factors(&[1.0, 0.0]);
        // Degenerate gap check would fire first for {1,0}? gap = 1, fine.
        let mut cot = SvdCotangents::zeros(&f);
        cot.vbar.set(1, 1, c(0.0, 1.0));
        assert!(matches!(
            svd_vjp_square(&f, &cot, &VjpOptions::default()),
            Err(Error::SingularSInverse { .. })
        ));
        // With a real V̄ the diagonal term never activates, so no error.
        let mut cot = SvdCotangents::zeros(&f);
        cot.sbar = RealDiagonal::new(vec![1.0, 1.0]).unwrap();
        assert!(svd_vjp_square(&f, &cot, &VjpOptions::default()).is_ok());
    }

    #[test]
    fn dot_product_consistency_direct() {
        // real_inner(Ā, dA) == real_inner(Ū, dU) + Σ s̄ᵢ dsᵢ + real_inner(V̄, dV)
        // for gauge-consistent cotangents.
        let a = seeded_random(3, 3, 90, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let cot = crate::oracle::project_gauge_invariant(
            &f,
            &SvdCotangents {
                ubar: seeded_random(3, 3, 91, SpectrumPolicy::Unconstrained),
                sbar: RealDiagonal::new(vec![0.2, 0.4, -0.8]).unwrap(),
                vbar: seeded_random(3, 3, 92, SpectrumPolicy::Unconstrained),
            },
        );
        let da = seeded_random(3, 3, 93, SpectrumPolicy::Unconstrained);
        let abar = svd_vjp_square(&f, &cot, &VjpOptions::default()).unwrap();
        let (du, ds, dv) = svd_jvp_square(&f, &da).unwrap();
        let lhs = real_inner(&abar, &da).unwrap();
        let rhs = real_inner(&cot.ubar, &du).unwrap()
            + cot
                .sbar
                .values()
                .iter()
                .zip(ds.values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
            + real_inner(&cot.vbar, &dv).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1.0),
            "lhs {lhs} rhs {rhs}"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn gap_matrix_antisymmetric(seed in 0u64..500, k in 2usize..6) {
                let values: Vec<f64> = (0..k).map(|i| (1u64 << (k - i)) as f64).collect();
                let _ = seed;
                let s = RealDiagonal::new(values).unwrap();
                let g = build_gap_matrix(&s, 1e-10, 0.0).unwrap();
                let sum = g.matrix().add(&g.matrix().transpose()).unwrap();
                prop_assert!(sum.frobenius_norm() <= 1e-14);
                for i in 0..k {
                    prop_assert_eq!(g.matrix().get(i, i), Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}
