//! Independent ground truth for gradient checks: central-difference
//! Wirtinger gradients, cotangent projection onto the gauge-consistent
//! subspace, and the forward/reverse dot-product test.
//!
//! The finite differences always perturb the decomposed matrix A, never the
//! factors, so gauge and ordering discontinuities of the factorization are
//! invisible as long as the loss itself is gauge invariant.

use num_complex::Complex64;

use crate::error::Result;
use crate::grad::{svd_jvp_square, svd_vjp_square, SvdCotangents, VjpOptions};
use crate::matrix::{real_inner, ComplexMatrix};
use crate::svd::SvdFactors;

/// Central-difference gradient ∇f = ∂f/∂x + i·∂f/∂y of a real function of
/// one complex variable.
pub fn wirtinger_grad_scalar<F>(f: F, z: Complex64, h: f64) -> Complex64
where
    F: Fn(Complex64) -> f64,
{
    let dx = (f(z + h) - f(z - h)) / (2.0 * h);
    let ih = Complex64::new(0.0, h);
    let dy = (f(z + ih) - f(z - ih)) / (2.0 * h);
    Complex64::new(dx, dy)
}

/// Entrywise Wirtinger gradient of a real loss of a complex matrix;
/// 4·rows·cols loss evaluations. Loss failures (degenerate spectra on a
/// perturbed point, say) propagate.
pub fn wirtinger_grad_matrix<L>(loss: L, a: &ComplexMatrix, h: f64) -> Result<ComplexMatrix>
where
    L: Fn(&ComplexMatrix) -> Result<f64>,
{
    let mut grad = ComplexMatrix::zeros(a.rows(), a.cols());
    let mut work = a.clone();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let base = a.get(i, j);
            let mut eval = |delta: Complex64| -> Result<f64> {
                work.set(i, j, base + delta);
                let v = loss(&work);
                work.set(i, j, base);
                v
            };
            let fxp = eval(Complex64::new(h, 0.0))?;
            let fxm = eval(Complex64::new(-h, 0.0))?;
            let fyp = eval(Complex64::new(0.0, h))?;
            let fym = eval(Complex64::new(0.0, -h))?;
            grad.set(
                i,
                j,
                Complex64::new((fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h)),
            );
        }
    }
    Ok(grad)
}

/// Removes the pure-gauge component of the cotangents: Ū ← Ū − U·Δ with
/// Δ = i·Im diag(U†Ū + V†V̄). The correction lies entirely in the span of
/// the gauge directions i·U·e_jj, and the result has zero `gauge_residual`
/// up to roundoff.
pub fn project_gauge_invariant(f: &SvdFactors, c: &SvdCotangents) -> SvdCotangents {
    let k = f.k();
    let mut delta = vec![0.0; k];
    for j in 0..k {
        let mut diag = Complex64::new(0.0, 0.0);
        for p in 0..f.u().rows() {
            diag += f.u().get(p, j).conj() * c.ubar.get(p, j);
        }
        for q in 0..f.v().rows() {
            diag += f.v().get(q, j).conj() * c.vbar.get(q, j);
        }
        delta[j] = diag.im;
    }
    let mut ubar = c.ubar.clone();
    for j in 0..k {
        let shift = Complex64::new(0.0, delta[j]);
        for i in 0..ubar.rows() {
            let v = ubar.get(i, j) - f.u().get(i, j) * shift;
            ubar.set(i, j, v);
        }
    }
    SvdCotangents {
        ubar,
        sbar: c.sbar.clone(),
        vbar: c.vbar.clone(),
    }
}

/// Forward/reverse consistency check. Returns
/// (real_inner(Ā, dA), real_inner(Ū, dU) + Σ s̄ᵢ dsᵢ + real_inner(V̄, dV));
/// the two sides agree when the cotangents are gauge consistent.
pub fn dot_test(f: &SvdFactors, c: &SvdCotangents, da: &ComplexMatrix) -> Result<(f64, f64)> {
    let abar = svd_vjp_square(f, c, &VjpOptions::default())?;
    let lhs = real_inner(&abar, da)?;
    let (du, ds, dv) = svd_jvp_square(f, da)?;
    let rhs = real_inner(&c.ubar, &du)?
        + c.sbar
            .values()
            .iter()
            .zip(ds.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
        + real_inner(&c.vbar, &dv)?;
    Ok((lhs, rhs))
}
