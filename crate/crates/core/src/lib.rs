//! Reverse-mode automatic differentiation for complex matrix programs.
//!
//! The crate provides dense complex matrix kernels, a deterministic
//! gauge-normalized thin SVD, closed-form reverse- and forward-mode rules
//! for that SVD, a small recording tape so whole programs differentiate
//! end to end, and an independent Wirtinger finite-difference oracle with a
//! catalogue of gauge-invariant test losses.
//!
//! Gradients follow the convention ∇L = 2∂L/∂z* for real losses of complex
//! variables and pair with perturbations through `real_inner`.
//!
//! ```
//! use zgrad::*;
//!
//! // Gradient of the nuclear norm Σsᵢ, three independent ways.
//! let a = seeded_random(3, 3, 7, SpectrumPolicy::WellSeparated);
//!
//! let f = svd(&a)?;
//! let mut cot = SvdCotangents::zeros(&f);
//! cot.sbar = RealDiagonal::new(vec![1.0; 3])?;
//! let closed = svd_vjp_square(&f, &cot, &VjpOptions::default())?;
//!
//! let mut tape = Tape::new();
//! let node = tape.input(a.clone());
//! let loss = loss_by_name("nuclear", 3, 3)?.build_tape_program(&mut tape, node)?;
//! let taped = tape.backward(loss)?.get(node).unwrap().clone();
//!
//! let fd = wirtinger_grad_matrix(|m| Ok(svd(m)?.s().values().iter().sum()), &a, 1e-5)?;
//!
//! assert!(rel_frobenius_error(&taped, &closed) < 1e-12);
//! assert!(rel_frobenius_error(&closed, &fd) < 1e-6);
//! # Ok::<(), zgrad::Error>(())
//! ```

// Index-heavy kernels read better with explicit loops.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod grad;
pub mod losses;
pub mod matrix;
pub mod oracle;
pub mod svd;
pub mod tape;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use grad::{
    build_gap_matrix, gauge_residual, svd_jvp_square, svd_jvp_square_with, svd_vjp_rect,
    svd_vjp_square, svd_vjp_square_variant, DiagSplit, GapMatrix, JvpOptions, SvdCotangents,
    VjpOptions,
};
pub use losses::{catalogue, loss_by_name, LossSpec, LOSS_NAMES};
pub use matrix::{
    diag_part, hadamard, offdiag_part, real_inner, rel_frobenius_error, seeded_random,
    ComplexMatrix, RealDiagonal, SpectrumPolicy,
};
pub use oracle::{dot_test, project_gauge_invariant, wirtinger_grad_matrix, wirtinger_grad_scalar};
pub use svd::{apply_gauge, spectral_gap, svd, svd_with, GaugeTransform, SvdConfig, SvdFactors};
pub use tape::{Gradients, NodeId, Tape};
