//! The gauge-invariant loss catalogue used by gradient checks.
//!
//! Every loss is a real scalar of the SVD factors, invariant under the
//! phase gauge U → UΛ, V → VΛ, so its value is a well-defined function of
//! the decomposed matrix and finite differences on A are meaningful. Each
//! entry carries its analytic factor cotangents in the gradient convention.
//!
//! `couples_u_and_v` marks losses whose gradient genuinely needs the
//! diagonal VJP term: ablating that term must break them and only them.
//! Losses touching both factors but with a real diagonal I∘(V†V̄) — the
//! projector and squared-overlap entries — keep the flag off because their
//! diagonal term vanishes identically.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grad::SvdCotangents;
use crate::matrix::{seeded_random, ComplexMatrix, RealDiagonal, SpectrumPolicy};
use crate::svd::{svd, SvdFactors};
use crate::tape::{NodeId, Tape};

/// Seed for the fixed matrices/weights baked into catalogue losses.
const LOSS_DATA_SEED: u64 = 0xB;

/// All catalogue names, in canonical order.
pub const LOSS_NAMES: [&str; 10] = [
    "frob",
    "nuclear",
    "uv-overlap",
    "uv-overlap-im",
    "uv-overlap-sq",
    "mixed-trace",
    "projector",
    "entropy",
    "u-only",
    "u00sq",
];

#[derive(Debug, Clone)]
enum LossKind {
    /// ½ Σ sᵢ².
    Frob,
    /// Σ sᵢ.
    Nuclear,
    /// Re(U₀₀ · V₀₀*).
    UvOverlap,
    /// Im(U₀₀ · V₀₀*).
    UvOverlapIm,
    /// |U₀₀ · V₀₀*|².
    UvOverlapSq,
    /// Re tr(diag(w) · U† B V) for fixed B and real weights w.
    MixedTrace { b: ComplexMatrix, w: Vec<f64> },
    /// Σᵢ |(U† B V)ᵢᵢ|² for fixed B.
    Projector { b: ComplexMatrix },
    /// −Σ pᵢ ln pᵢ with pᵢ = sᵢ²/Σs².
    Entropy,
    /// Σᵢⱼ |Uᵢⱼ|⁴.
    UOnly,
    /// |U₀₀|².
    U00Sq,
}

/// A named, gauge-invariant real loss with analytic factor cotangents.
#[derive(Debug, Clone)]
pub struct LossSpec {
    name: &'static str,
    couples_u_and_v: bool,
    kind: LossKind,
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn couples_u_and_v(&self) -> bool {
        self.couples_u_and_v
    }

    /// Evaluates the loss on already-computed factors.
    pub fn evaluate_factors(&self, f: &SvdFactors) -> f64 {
        match &self.kind {
            LossKind::Frob => 0.5 * f.s().values().iter().map(|s| s * s).sum::<f64>(),
            LossKind::Nuclear => f.s().values().iter().sum(),
            LossKind::UvOverlap => overlap(f).re,
            LossKind::UvOverlapIm => overlap(f).im,
            LossKind::UvOverlapSq => overlap(f).norm_sqr(),
            LossKind::MixedTrace { b, w } => {
                let t = core_block(f, b);
                (0..f.k()).map(|j| w[j] * t.get(j, j).re).sum()
            }
            LossKind::Projector { b } => {
                let t = core_block(f, b);
                (0..f.k()).map(|j| t.get(j, j).norm_sqr()).sum()
            }
            LossKind::Entropy => {
                let total: f64 = f.s().values().iter().map(|s| s * s).sum();
                -f.s()
                    .values()
                    .iter()
                    .map(|s| {
                        let p = s * s / total;
                        p * p.ln()
                    })
                    .sum::<f64>()
            }
            LossKind::UOnly => f
                .u()
                .entries()
                .iter()
                .map(|z| z.norm_sqr() * z.norm_sqr())
                .sum(),
            LossKind::U00Sq => f.u().get(0, 0).norm_sqr(),
        }
    }

    /// Evaluates the loss as a function of the matrix, through the SVD.
    pub fn evaluate(&self, a: &ComplexMatrix) -> Result<f64> {
        Ok(self.evaluate_factors(&svd(a)?))
    }

    /// Analytic factor cotangents (∇_U L, ∂L/∂S, ∇_V L) at the given point.
    pub fn cotangents(&self, f: &SvdFactors) -> SvdCotangents {
        let mut c = SvdCotangents::zeros(f);
        match &self.kind {
            LossKind::Frob => {
                c.sbar = f.s().clone();
            }
            LossKind::Nuclear => {
                c.sbar = RealDiagonal::new(vec![1.0; f.k()]).expect("k >= 1");
            }
            LossKind::UvOverlap => {
                c.ubar.set(0, 0, f.v().get(0, 0));
                c.vbar.set(0, 0, f.u().get(0, 0));
            }
            LossKind::UvOverlapIm => {
                let i = Complex64::new(0.0, 1.0);
                c.ubar.set(0, 0, i * f.v().get(0, 0));
                c.vbar.set(0, 0, -i * f.u().get(0, 0));
            }
            LossKind::UvOverlapSq => {
                let u00 = f.u().get(0, 0);
                let v00 = f.v().get(0, 0);
                c.ubar.set(0, 0, u00 * v00.norm_sqr() * 2.0);
                c.vbar.set(0, 0, v00 * u00.norm_sqr() * 2.0);
            }
            LossKind::MixedTrace { b, w } => {
                // ∇_U = B V W, ∇_V = B† U W.
                let bv = b.matmul(f.v()).expect("shapes fixed");
                let bu = b.adjoint().matmul(f.u()).expect("shapes fixed");
                c.ubar = scale_columns(&bv, w);
                c.vbar = scale_columns(&bu, w);
            }
            LossKind::Projector { b } => {
                // ∇_U = 2 BV diag(T̄ᵢᵢ), ∇_V = 2 B†U diag(Tᵢᵢ), T = U†BV.
                let t = core_block(f, b);
                let bv = b.matmul(f.v()).expect("shapes fixed");
                let bu = b.adjoint().matmul(f.u()).expect("shapes fixed");
                let mut ubar = bv;
                let mut vbar = bu;
                for j in 0..f.k() {
                    let tjj = t.get(j, j);
                    for i in 0..ubar.rows() {
                        let v = ubar.get(i, j) * tjj.conj() * 2.0;
                        ubar.set(i, j, v);
                    }
                    for i in 0..vbar.rows() {
                        let v = vbar.get(i, j) * tjj * 2.0;
                        vbar.set(i, j, v);
                    }
                }
                c.ubar = ubar;
                c.vbar = vbar;
            }
            LossKind::Entropy => {
                let total: f64 = f.s().values().iter().map(|s| s * s).sum();
                let entropy = self.evaluate_factors(f);
                let sbar: Vec<f64> = f
                    .s()
                    .values()
                    .iter()
                    .map(|&s| {
                        let p = s * s / total;
                        -(2.0 * s / total) * (p.ln() + entropy)
                    })
                    .collect();
                c.sbar = RealDiagonal::new(sbar).expect("k >= 1");
            }
            LossKind::UOnly => {
                c.ubar = ComplexMatrix::from_fn(f.u().rows(), f.k(), |i, j| {
                    let z = f.u().get(i, j);
                    z * z.norm_sqr() * 4.0
                });
            }
            LossKind::U00Sq => {
                c.ubar.set(0, 0, f.u().get(0, 0) * 2.0);
            }
        }
        c
    }

    /// Records the loss as a tape program ending in a real scalar node.
    /// The entropy loss has no program: the op set has no logarithm.
    pub fn build_tape_program(&self, tape: &mut Tape, a: NodeId) -> Result<NodeId> {
        let f = tape.svd(a)?;
        match &self.kind {
            LossKind::Frob => {
                let s = tape.factor_s(f)?;
                let ss = tape.matmul(s, s)?;
                let t = tape.trace(ss)?;
                let r = tape.real_part(t)?;
                tape.scale_by_real(r, 0.5)
            }
            LossKind::Nuclear => {
                let s = tape.factor_s(f)?;
                let t = tape.trace(s)?;
                tape.real_part(t)
            }
            LossKind::UvOverlap => {
                let w = overlap_node(tape, f)?;
                let e = tape.entry(w, 0, 0)?;
                tape.real_part(e)
            }
            LossKind::UvOverlapIm => {
                let w = overlap_node(tape, f)?;
                let minus_i = tape.input(
                    ComplexMatrix::new(1, 1, vec![Complex64::new(0.0, -1.0)]).expect("finite"),
                );
                let rotated = tape.matmul(w, minus_i)?;
                let e = tape.entry(rotated, 0, 0)?;
                tape.real_part(e)
            }
            LossKind::UvOverlapSq => {
                let w = overlap_node(tape, f)?;
                let e = tape.entry(w, 0, 0)?;
                tape.abs_squared(e)
            }
            LossKind::MixedTrace { b, w } => {
                let t = core_block_node(tape, f, b)?;
                let k = w.len();
                let mut diag = ComplexMatrix::zeros(k, k);
                for (j, &wj) in w.iter().enumerate() {
                    diag.set(j, j, Complex64::new(wj, 0.0));
                }
                let wmat = tape.input(diag);
                let wt = tape.matmul(wmat, t)?;
                let tr = tape.trace(wt)?;
                tape.real_part(tr)
            }
            LossKind::Projector { b } => {
                let t = core_block_node(tape, f, b)?;
                let k = tape.matrix(t)?.rows();
                let mask = tape.input(ComplexMatrix::identity(k));
                let d = tape.hadamard(t, mask)?;
                let dc = tape.conjugate(d)?;
                let e = tape.hadamard(d, dc)?;
                let tr = tape.trace(e)?;
                tape.real_part(tr)
            }
            LossKind::Entropy => Err(Error::UnsupportedTapeLoss(self.name.to_string())),
            LossKind::UOnly => {
                let u = tape.factor_u(f)?;
                let (m, k) = tape.matrix(u)?.shape();
                let uc = tape.conjugate(u)?;
                let sq = tape.hadamard(u, uc)?;
                let quad = tape.hadamard(sq, sq)?;
                let ones_m = tape.input(ComplexMatrix::from_fn(m, 1, |_, _| {
                    Complex64::new(1.0, 0.0)
                }));
                let ones_k = tape.input(ComplexMatrix::from_fn(k, 1, |_, _| {
                    Complex64::new(1.0, 0.0)
                }));
                let ones_row = tape.adjoint(ones_m)?;
                let row = tape.matmul(ones_row, quad)?;
                let total = tape.matmul(row, ones_k)?;
                let e = tape.entry(total, 0, 0)?;
                tape.real_part(e)
            }
            LossKind::U00Sq => {
                let u = tape.factor_u(f)?;
                let e = tape.entry(u, 0, 0)?;
                tape.abs_squared(e)
            }
        }
    }
}

fn overlap(f: &SvdFactors) -> Complex64 {
    f.u().get(0, 0) * f.v().get(0, 0).conj()
}

/// U† B V.
fn core_block(f: &SvdFactors, b: &ComplexMatrix) -> ComplexMatrix {
    f.u()
        .adjoint()
        .matmul(b)
        .expect("shapes fixed")
        .matmul(f.v())
        .expect("shapes fixed")
}

fn scale_columns(m: &ComplexMatrix, w: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * w[j])
}

/// 1×1 node holding U₀₀ · V₀₀*.
fn overlap_node(tape: &mut Tape, f: NodeId) -> Result<NodeId> {
    let u = tape.factor_u(f)?;
    let v = tape.factor_v(f)?;
    let (m, k) = tape.matrix(u)?.shape();
    let n = tape.matrix(v)?.rows();
    let e_m = tape.input(ComplexMatrix::unit(m, 1, 0, 0));
    let e_n = tape.input(ComplexMatrix::unit(n, 1, 0, 0));
    let mask = tape.input(ComplexMatrix::unit(1, k, 0, 0));
    let em_row = tape.adjoint(e_m)?;
    let u_row = tape.matmul(em_row, u)?;
    let u_masked = tape.hadamard(u_row, mask)?;
    let en_row = tape.adjoint(e_n)?;
    let v_row = tape.matmul(en_row, v)?;
    let v_row_adj = tape.adjoint(v_row)?;
    tape.matmul(u_masked, v_row_adj)
}

/// U† B V as tape nodes.
fn core_block_node(tape: &mut Tape, f: NodeId, b: &ComplexMatrix) -> Result<NodeId> {
    let u = tape.factor_u(f)?;
    let v = tape.factor_v(f)?;
    let bn = tape.input(b.clone());
    let ua = tape.adjoint(u)?;
    let ub = tape.matmul(ua, bn)?;
    tape.matmul(ub, v)
}

/// The full catalogue for a given matrix shape.
pub fn catalogue(rows: usize, cols: usize) -> Vec<LossSpec> {
    LOSS_NAMES
        .iter()
        .map(|name| loss_by_name(name, rows, cols).expect("catalogue names are valid"))
        .collect()
}

/// Looks up one loss by name; unknown names are rejected, which keeps
/// non-gauge-invariant ad-hoc losses out of the harness.
pub fn loss_by_name(name: &str, rows: usize, cols: usize) -> Result<LossSpec> {
    let k = rows.min(cols);
    let kind = match name {
        "frob" => LossKind::Frob,
        "nuclear" => LossKind::Nuclear,
        "uv-overlap" => LossKind::UvOverlap,
        "uv-overlap-im" => LossKind::UvOverlapIm,
        "uv-overlap-sq" => LossKind::UvOverlapSq,
        "mixed-trace" => LossKind::MixedTrace {
            b: seeded_random(rows, cols, LOSS_DATA_SEED, SpectrumPolicy::Unconstrained),
            w: fixed_weights(k),
        },
        "projector" => LossKind::Projector {
            b: seeded_random(rows, cols, LOSS_DATA_SEED, SpectrumPolicy::Unconstrained),
        },
        "entropy" => LossKind::Entropy,
        "u-only" => LossKind::UOnly,
        "u00sq" => LossKind::U00Sq,
        other => return Err(Error::UnknownLoss(other.to_string())),
    };
    let couples_u_and_v = matches!(
        kind,
        LossKind::UvOverlap | LossKind::UvOverlapIm | LossKind::MixedTrace { .. }
    );
    Ok(LossSpec {
        name: LOSS_NAMES
            .iter()
            .find(|&&n| n == name)
            .expect("checked above"),
        couples_u_and_v,
        kind,
    })
}

fn fixed_weights(k: usize) -> Vec<f64> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(LOSS_DATA_SEED + 1);
    (0..k).map(|_| 0.5 + rng.gen::<f64>()).collect()
}
