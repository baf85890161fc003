//! Minimal reverse-mode engine over complex matrices.
//!
//! Primals are evaluated eagerly as operations are recorded; `backward`
//! performs one reverse sweep accumulating adjoints in the gradient
//! convention ∇ = 2∂L/∂(value)*. Fan-out is handled by accumulation. The
//! SVD node's backward delegates to the closed-form rules in `grad`.
//!
//! A tape is single-writer while recording and read-only during backward;
//! distinct tapes are independent.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grad::{svd_vjp_rect, svd_vjp_square, SvdCotangents, VjpOptions};
use crate::matrix::{hadamard, ComplexMatrix, RealDiagonal};
use crate::svd::{svd, SvdFactors};

/// Reference to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    ScaleReal(NodeId, f64),
    Adjoint(NodeId),
    Conjugate(NodeId),
    Hadamard(NodeId, NodeId),
    Trace(NodeId),
    RealPart(NodeId),
    AbsSquared(NodeId),
    Entry(NodeId, usize, usize),
    Svd(NodeId),
    FactorU(NodeId),
    FactorS(NodeId),
    FactorV(NodeId),
}

#[derive(Debug, Clone)]
enum Primal {
    Matrix(ComplexMatrix),
    Factors(SvdFactors),
    Scalar(Complex64),
}

impl Primal {
    fn kind(&self) -> &'static str {
        match self {
            Primal::Matrix(_) => "matrix",
            Primal::Factors(_) => "factors",
            Primal::Scalar(_) => "scalar",
        }
    }
}

#[derive(Debug)]
struct TapeNode {
    op: Op,
    primal: Primal,
}

#[derive(Debug, Clone)]
enum Adjoint {
    Matrix(ComplexMatrix),
    Scalar(Complex64),
    Factors {
        ubar: ComplexMatrix,
        /// Accumulated k×k cotangent of the expanded S matrix; its real
        /// diagonal is what the SVD rule consumes.
        sbar: ComplexMatrix,
        vbar: ComplexMatrix,
    },
}

/// Gradients of the loss with respect to input nodes, in the convention
/// ∇ = 2∂L/∂(input)*.
#[derive(Debug)]
pub struct Gradients {
    map: HashMap<NodeId, ComplexMatrix>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&ComplexMatrix> {
        self.map.get(&id)
    }
}

/// Recorded computation over complex matrices with one designated
/// real-scalar output.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    vjp_opts: VjpOptions,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            vjp_opts: VjpOptions::default(),
        }
    }

    /// Tape whose SVD backward uses the given options.
    pub fn with_vjp_options(opts: VjpOptions) -> Self {
        Self {
            nodes: Vec::new(),
            vjp_opts: opts,
        }
    }

    fn push(&mut self, op: Op, primal: Primal) -> NodeId {
        self.nodes.push(TapeNode { op, primal });
        NodeId(self.nodes.len() - 1)
    }

    fn matrix_of(&self, id: NodeId) -> Result<&ComplexMatrix> {
        match &self.nodes[id.0].primal {
            Primal::Matrix(m) => Ok(m),
            other => Err(Error::KindMismatch {
                expected: "matrix",
                got: other.kind(),
            }),
        }
    }

    fn scalar_of(&self, id: NodeId) -> Result<Complex64> {
        match &self.nodes[id.0].primal {
            Primal::Scalar(z) => Ok(*z),
            other => Err(Error::KindMismatch {
                expected: "scalar",
                got: other.kind(),
            }),
        }
    }

    fn factors_of(&self, id: NodeId) -> Result<&SvdFactors> {
        match &self.nodes[id.0].primal {
            Primal::Factors(f) => Ok(f),
            other => Err(Error::KindMismatch {
                expected: "factors",
                got: other.kind(),
            }),
        }
    }

    /// Registers a leaf matrix.
    pub fn input(&mut self, m: ComplexMatrix) -> NodeId {
        self.push(Op::Input, Primal::Matrix(m))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let product = self.matrix_of(a)?.matmul(self.matrix_of(b)?)?;
        Ok(self.push(Op::Matmul(a, b), Primal::Matrix(product)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let primal = match (&self.nodes[a.0].primal, &self.nodes[b.0].primal) {
            (Primal::Matrix(x), Primal::Matrix(y)) => Primal::Matrix(x.add(y)?),
            (Primal::Scalar(x), Primal::Scalar(y)) => Primal::Scalar(x + y),
            (x, y) => {
                return Err(Error::KindMismatch {
                    expected: x.kind(),
                    got: y.kind(),
                })
            }
        };
        Ok(self.push(Op::Add(a, b), primal))
    }

    pub fn scale_by_real(&mut self, a: NodeId, alpha: f64) -> Result<NodeId> {
        let primal = match &self.nodes[a.0].primal {
            Primal::Matrix(m) => Primal::Matrix(m.scale(alpha)),
            Primal::Scalar(z) => Primal::Scalar(z * alpha),
            other => {
                return Err(Error::KindMismatch {
                    expected: "matrix or scalar",
                    got: other.kind(),
                })
            }
        };
        Ok(self.push(Op::ScaleReal(a, alpha), primal))
    }

    pub fn adjoint(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.matrix_of(a)?.adjoint();
        Ok(self.push(Op::Adjoint(a), Primal::Matrix(m)))
    }

    pub fn conjugate(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.matrix_of(a)?.conjugate();
        Ok(self.push(Op::Conjugate(a), Primal::Matrix(m)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let m = hadamard(self.matrix_of(a)?, self.matrix_of(b)?)?;
        Ok(self.push(Op::Hadamard(a, b), Primal::Matrix(m)))
    }

    pub fn trace(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.matrix_of(a)?.trace()?;
        Ok(self.push(Op::Trace(a), Primal::Scalar(t)))
    }

    pub fn real_part(&mut self, z: NodeId) -> Result<NodeId> {
        let v = self.scalar_of(z)?;
        Ok(self.push(Op::RealPart(z), Primal::Scalar(Complex64::new(v.re, 0.0))))
    }

    pub fn abs_squared(&mut self, z: NodeId) -> Result<NodeId> {
        let v = self.scalar_of(z)?;
        Ok(self.push(
            Op::AbsSquared(z),
            Primal::Scalar(Complex64::new(v.norm_sqr(), 0.0)),
        ))
    }

    pub fn entry(&mut self, a: NodeId, i: usize, j: usize) -> Result<NodeId> {
        let m = self.matrix_of(a)?;
        if i >= m.rows() || j >= m.cols() {
            return Err(Error::IndexOutOfBounds {
                row: i,
                col: j,
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let v = m.get(i, j);
        Ok(self.push(Op::Entry(a, i, j), Primal::Scalar(v)))
    }

    pub fn svd(&mut self, a: NodeId) -> Result<NodeId> {
        let f = svd(self.matrix_of(a)?)?;
        Ok(self.push(Op::Svd(a), Primal::Factors(f)))
    }

    pub fn factor_u(&mut self, f: NodeId) -> Result<NodeId> {
        let u = self.factors_of(f)?.u().clone();
        Ok(self.push(Op::FactorU(f), Primal::Matrix(u)))
    }

    /// The singular values expanded as a k×k diagonal matrix node.
    pub fn factor_s(&mut self, f: NodeId) -> Result<NodeId> {
        let s = self.factors_of(f)?.s().to_matrix();
        Ok(self.push(Op::FactorS(f), Primal::Matrix(s)))
    }

    pub fn factor_v(&mut self, f: NodeId) -> Result<NodeId> {
        let v = self.factors_of(f)?.v().clone();
        Ok(self.push(Op::FactorV(f), Primal::Matrix(v)))
    }

    pub fn matrix(&self, id: NodeId) -> Result<&ComplexMatrix> {
        self.matrix_of(id)
    }

    pub fn scalar(&self, id: NodeId) -> Result<Complex64> {
        self.scalar_of(id)
    }

    pub fn factors(&self, id: NodeId) -> Result<&SvdFactors> {
        self.factors_of(id)
    }

    /// Reverse sweep from a real scalar loss node. Returns the gradient of
    /// every reachable input node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.scalar_of(loss)?;
        if loss_value.im.abs() > 1e-12 {
            return Err(Error::NonRealLoss {
                imag: loss_value.im.abs(),
            });
        }

        let mut adjoints: Vec<Option<Adjoint>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Adjoint::Scalar(Complex64::new(1.0, 0.0)));

        for idx in (0..=loss.0).rev() {
            let Some(adj) = adjoints[idx].clone() else {
                continue;
            };
            match (&self.nodes[idx].op, adj) {
                (Op::Input, _) => {}
                (Op::Matmul(a, b), Adjoint::Matrix(cbar)) => {
                    let am = self.matrix_of(*a)?;
                    let bm = self.matrix_of(*b)?;
                    self.add_matrix(&mut adjoints, *a, cbar.matmul(&bm.adjoint())?)?;
                    self.add_matrix(&mut adjoints, *b, am.adjoint().matmul(&cbar)?)?;
                }
                (Op::Add(a, b), Adjoint::Matrix(cbar)) => {
                    self.add_matrix(&mut adjoints, *a, cbar.clone())?;
                    self.add_matrix(&mut adjoints, *b, cbar)?;
                }
                (Op::Add(a, b), Adjoint::Scalar(cbar)) => {
                    self.add_scalar(&mut adjoints, *a, cbar)?;
                    self.add_scalar(&mut adjoints, *b, cbar)?;
                }
                (Op::ScaleReal(a, alpha), Adjoint::Matrix(cbar)) => {
                    self.add_matrix(&mut adjoints, *a, cbar.scale(*alpha))?;
                }
                (Op::ScaleReal(a, alpha), Adjoint::Scalar(cbar)) => {
                    self.add_scalar(&mut adjoints, *a, cbar * alpha)?;
                }
                (Op::Adjoint(a), Adjoint::Matrix(bbar)) => {
                    self.add_matrix(&mut adjoints, *a, bbar.adjoint())?;
                }
                (Op::Conjugate(a), Adjoint::Matrix(bbar)) => {
                    self.add_matrix(&mut adjoints, *a, bbar.conjugate())?;
                }
                (Op::Hadamard(a, b), Adjoint::Matrix(cbar)) => {
                    let am = self.matrix_of(*a)?;
                    let bm = self.matrix_of(*b)?;
                    self.add_matrix(&mut adjoints, *a, hadamard(&cbar, &bm.conjugate())?)?;
                    self.add_matrix(&mut adjoints, *b, hadamard(&cbar, &am.conjugate())?)?;
                }
                (Op::Trace(a), Adjoint::Scalar(tbar)) => {
                    let n = self.matrix_of(*a)?.rows();
                    self.add_matrix(
                        &mut adjoints,
                        *a,
                        ComplexMatrix::identity(n).scale_complex(tbar),
                    )?;
                }
                (Op::RealPart(z), Adjoint::Scalar(rbar)) => {
                    self.add_scalar(&mut adjoints, *z, rbar)?;
                }
                (Op::AbsSquared(z), Adjoint::Scalar(rbar)) => {
                    let zv = self.scalar_of(*z)?;
                    self.add_scalar(&mut adjoints, *z, rbar * zv * 2.0)?;
                }
                (Op::Entry(a, i, j), Adjoint::Scalar(ebar)) => {
                    let m = self.matrix_of(*a)?;
                    let mut scatter = ComplexMatrix::zeros(m.rows(), m.cols());
                    scatter.set(*i, *j, ebar);
                    self.add_matrix(&mut adjoints, *a, scatter)?;
                }
                (Op::FactorU(f), Adjoint::Matrix(bar)) => {
                    self.add_factor_part(&mut adjoints, *f, FactorPart::U, bar)?;
                }
                (Op::FactorS(f), Adjoint::Matrix(bar)) => {
                    self.add_factor_part(&mut adjoints, *f, FactorPart::S, bar)?;
                }
                (Op::FactorV(f), Adjoint::Matrix(bar)) => {
                    self.add_factor_part(&mut adjoints, *f, FactorPart::V, bar)?;
                }
                (Op::Svd(a), Adjoint::Factors { ubar, sbar, vbar }) => {
                    let f = self.factors_of(NodeId(idx))?;
                    let mut im_max = 0.0_f64;
                    let mut sdiag = Vec::with_capacity(f.k());
                    for i in 0..f.k() {
                        let z = sbar.get(i, i);
                        im_max = im_max.max(z.im.abs());
                        sdiag.push(z.re);
                    }
                    if im_max > 1e-12 {
                        return Err(Error::NonRealLoss { imag: im_max });
                    }
                    let cots = SvdCotangents {
                        ubar,
                        sbar: RealDiagonal::new(sdiag)?,
                        vbar,
                    };
                    let abar = if f.rows() == f.cols() {
                        svd_vjp_square(f, &cots, &self.vjp_opts)?
                    } else {
                        svd_vjp_rect(f, &cots, &self.vjp_opts)?
                    };
                    self.add_matrix(&mut adjoints, *a, abar)?;
                }
                (op, adj) => {
                    return Err(Error::KindMismatch {
                        expected: op_kind(op),
                        got: adjoint_kind(&adj),
                    });
                }
            }
        }

        let mut map = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Input, Some(Adjoint::Matrix(g))) = (&node.op, &adjoints[idx]) {
                map.insert(NodeId(idx), g.clone());
            }
        }
        Ok(Gradients { map })
    }

    fn add_matrix(
        &self,
        adjoints: &mut [Option<Adjoint>],
        id: NodeId,
        contribution: ComplexMatrix,
    ) -> Result<()> {
        match &mut adjoints[id.0] {
            slot @ None => *slot = Some(Adjoint::Matrix(contribution)),
            Some(Adjoint::Matrix(existing)) => *existing = existing.add(&contribution)?,
            Some(other) => {
                return Err(Error::KindMismatch {
                    expected: "matrix adjoint",
                    got: adjoint_kind(other),
                })
            }
        }
        Ok(())
    }

    fn add_scalar(
        &self,
        adjoints: &mut [Option<Adjoint>],
        id: NodeId,
        contribution: Complex64,
    ) -> Result<()> {
        match &mut adjoints[id.0] {
            slot @ None => *slot = Some(Adjoint::Scalar(contribution)),
            Some(Adjoint::Scalar(existing)) => *existing += contribution,
            Some(other) => {
                return Err(Error::KindMismatch {
                    expected: "scalar adjoint",
                    got: adjoint_kind(other),
                })
            }
        }
        Ok(())
    }

    fn add_factor_part(
        &self,
        adjoints: &mut [Option<Adjoint>],
        id: NodeId,
        part: FactorPart,
        contribution: ComplexMatrix,
    ) -> Result<()> {
        if adjoints[id.0].is_none() {
            let f = self.factors_of(id)?;
            adjoints[id.0] = Some(Adjoint::Factors {
                ubar: ComplexMatrix::zeros(f.u().rows(), f.k()),
                sbar: ComplexMatrix::zeros(f.k(), f.k()),
                vbar: ComplexMatrix::zeros(f.v().rows(), f.k()),
            });
        }
        match &mut adjoints[id.0] {
            Some(Adjoint::Factors { ubar, sbar, vbar }) => {
                let target = match part {
                    FactorPart::U => ubar,
                    FactorPart::S => sbar,
                    FactorPart::V => vbar,
                };
                *target = target.add(&contribution)?;
                Ok(())
            }
            Some(other) => Err(Error::KindMismatch {
                expected: "factors adjoint",
                got: adjoint_kind(other),
            }),
            None => unreachable!(),
        }
    }
}

enum FactorPart {
    U,
    S,
    V,
}

fn op_kind(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Matmul(..) => "matmul",
        Op::Add(..) => "add",
        Op::ScaleReal(..) => "scale_by_real",
        Op::Adjoint(..) => "adjoint",
        Op::Conjugate(..) => "conjugate",
        Op::Hadamard(..) => "hadamard",
        Op::Trace(..) => "trace",
        Op::RealPart(..) => "real_part",
        Op::AbsSquared(..) => "abs_squared",
        Op::Entry(..) => "entry",
        Op::Svd(..) => "svd",
        Op::FactorU(..) => "factor_u",
        Op::FactorS(..) => "factor_s",
        Op::FactorV(..) => "factor_v",
    }
}

fn adjoint_kind(a: &Adjoint) -> &'static str {
    match a {
        Adjoint::Matrix(_) => "matrix adjoint",
        Adjoint::Scalar(_) => "scalar adjoint",
        Adjoint::Factors { .. } => "factors adjoint",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{real_inner, rel_frobenius_error, seeded_random, SpectrumPolicy};
    use crate::oracle::wirtinger_grad_matrix;

    #[test]
    fn primal_values_are_eager() {
        let mut tape = Tape::new();
        let a = tape.input(seeded_random(2, 3, 1, SpectrumPolicy::Unconstrained));
        let b = tape.input(seeded_random(3, 2, 2, SpectrumPolicy::Unconstrained));
        let p = tape.matmul(a, b).unwrap();
        assert_eq!(tape.matrix(p).unwrap().shape(), (2, 2));

        let z = tape.trace(p).unwrap();
        let r = tape.real_part(z).unwrap();
        assert_eq!(tape.scalar(r).unwrap().im, 0.0);

        let d = tape.input(ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap());
        let f = tape.svd(d).unwrap();
        assert_eq!(tape.factors(f).unwrap().s().values(), &[2.0, 1.0]);
    }

    #[test]
    fn shape_errors_surface_at_record_time() {
        let mut tape = Tape::new();
        let a = tape.input(ComplexMatrix::zeros(2, 3));
        let b = tape.input(ComplexMatrix::zeros(2, 3));
        assert!(matches!(
            tape.matmul(a, b),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(tape.trace(a), Err(Error::NotSquare { .. })));
        assert!(matches!(
            tape.entry(a, 5, 0),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn gradient_of_re_trace_product() {
        // L = Re tr(A·B) with fixed B has ∇_A = B†.
        let mut tape = Tape::new();
        let a_val = seeded_random(3, 3, 10, SpectrumPolicy::Unconstrained);
        let b_val = seeded_random(3, 3, 11, SpectrumPolicy::Unconstrained);
        let a = tape.input(a_val);
        let b = tape.input(b_val.clone());
        let p = tape.matmul(a, b).unwrap();
        let t = tape.trace(p).unwrap();
        let loss = tape.real_part(t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let ga = grads.get(a).unwrap();
        assert!(rel_frobenius_error(ga, &b_val.adjoint()) <= 1e-14);
    }

    #[test]
    fn gradient_of_half_norm_squared() {
        // L = ½ Re tr(A†A) has ∇_A = A.
        let mut tape = Tape::new();
        let a_val = seeded_random(3, 2, 12, SpectrumPolicy::Unconstrained);
        let a = tape.input(a_val.clone());
        let at = tape.adjoint(a).unwrap();
        let p = tape.matmul(at, a).unwrap();
        let t = tape.trace(p).unwrap();
        let r = tape.real_part(t).unwrap();
        let loss = tape.scale_by_real(r, 0.5).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(rel_frobenius_error(grads.get(a).unwrap(), &a_val) <= 1e-14);
    }

    #[test]
    fn nuclear_norm_through_svd_node() {
        let a_val = seeded_random(4, 4, 13, SpectrumPolicy::WellSeparated);
        let mut tape = Tape::new();
        let a = tape.input(a_val.clone());
        let f = tape.svd(a).unwrap();
        let s = tape.factor_s(f).unwrap();
        let t = tape.trace(s).unwrap();
        let loss = tape.real_part(t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let ga = grads.get(a).unwrap();

        let factors = tape.factors(f).unwrap();
        let uvh = factors.u().matmul(&factors.v().adjoint()).unwrap();
        assert!(rel_frobenius_error(ga, &uvh) <= 1e-10);

        // Independent finite-difference check.
        let fd =
            wirtinger_grad_matrix(|m| Ok(svd(m)?.s().values().iter().sum()), &a_val, 1e-5).unwrap();
        assert!(rel_frobenius_error(ga, &fd) <= 1e-6);
    }

    #[test]
    fn svd_backward_handles_wide_inputs() {
        let a_val = seeded_random(2, 4, 25, SpectrumPolicy::WellSeparated);
        let mut tape = Tape::new();
        let a = tape.input(a_val.clone());
        let f = tape.svd(a).unwrap();
        let s = tape.factor_s(f).unwrap();
        let t = tape.trace(s).unwrap();
        let loss = tape.real_part(t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let fd =
            wirtinger_grad_matrix(|m| Ok(svd(m)?.s().values().iter().sum()), &a_val, 1e-5).unwrap();
        assert!(rel_frobenius_error(grads.get(a).unwrap(), &fd) <= 1e-6);
    }

    #[test]
    fn non_real_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.input(seeded_random(3, 3, 14, SpectrumPolicy::Unconstrained));
        let t = tape.trace(a).unwrap();
        assert!(matches!(tape.backward(t), Err(Error::NonRealLoss { .. })));
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let a_val = seeded_random(3, 3, 15, SpectrumPolicy::Unconstrained);
        let b_val = seeded_random(3, 3, 16, SpectrumPolicy::Unconstrained);

        let build = |mode: u8| -> ComplexMatrix {
            let mut tape = Tape::new();
            let a = tape.input(a_val.clone());
            let b = tape.input(b_val.clone());
            let p = tape.matmul(a, b).unwrap();
            let t1 = tape.trace(p).unwrap();
            let l1 = tape.real_part(t1).unwrap();
            let at = tape.adjoint(a).unwrap();
            let q = tape.matmul(at, a).unwrap();
            let t2 = tape.trace(q).unwrap();
            let r2 = tape.real_part(t2).unwrap();
            let l2 = tape.scale_by_real(r2, 0.5).unwrap();
            let loss = match mode {
                0 => l1,
                1 => l2,
                _ => tape.add(l1, l2).unwrap(),
            };
            let grads = tape.backward(loss).unwrap();
            grads.get(a).unwrap().clone()
        };

        let g1 = build(0);
        let g2 = build(1);
        let g12 = build(2);
        let sum = g1.add(&g2).unwrap();
        assert!(rel_frobenius_error(&g12, &sum) <= 1e-12);
    }

    #[test]
    fn fan_out_accumulates() {
        // L = Re tr(A·A): both uses of A contribute; ∇ = 2·Re-part route.
        let mut tape = Tape::new();
        let a_val = seeded_random(3, 3, 17, SpectrumPolicy::Unconstrained);
        let a = tape.input(a_val.clone());
        let p = tape.matmul(a, a).unwrap();
        let t = tape.trace(p).unwrap();
        let loss = tape.real_part(t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let fd = wirtinger_grad_matrix(
            |m| Ok(m.matmul(m).unwrap().trace().unwrap().re),
            &a_val,
            1e-6,
        )
        .unwrap();
        assert!(rel_frobenius_error(grads.get(a).unwrap(), &fd) <= 1e-7);
    }

    #[test]
    fn every_primitive_passes_finite_differences() {
        // One small real-loss program per primitive; each checked against
        // the Wirtinger oracle on the same program.
        type Builder = fn(&mut Tape, NodeId, &ComplexMatrix) -> NodeId;

        let through_abs: Builder = |tape, a, _| {
            let e = tape.entry(a, 1, 0).unwrap();
            tape.abs_squared(e).unwrap()
        };
        let through_conj: Builder = |tape, a, aux| {
            let cj = tape.conjugate(a).unwrap();
            let x = tape.input(aux.clone());
            let p = tape.matmul(cj, x).unwrap();
            let t = tape.trace(p).unwrap();
            tape.real_part(t).unwrap()
        };
        let through_adjoint: Builder = |tape, a, aux| {
            let ad = tape.adjoint(a).unwrap();
            let x = tape.input(aux.clone());
            let p = tape.matmul(ad, x).unwrap();
            let t = tape.trace(p).unwrap();
            tape.real_part(t).unwrap()
        };
        let through_hadamard: Builder = |tape, a, aux| {
            let x = tape.input(aux.clone());
            let h = tape.hadamard(a, x).unwrap();
            let hh = tape.hadamard(h, h).unwrap();
            let t = tape.trace(hh).unwrap();
            tape.real_part(t).unwrap()
        };
        let through_add_scale: Builder = |tape, a, aux| {
            let x = tape.input(aux.clone());
            let sum = tape.add(a, x).unwrap();
            let scaled = tape.scale_by_real(sum, 0.7).unwrap();
            let t = tape.trace(scaled).unwrap();
            tape.real_part(t).unwrap()
        };

        let cases: Vec<(&str, Builder)> = vec![
            ("entry+abs_squared", through_abs),
            ("conjugate", through_conj),
            ("adjoint", through_adjoint),
            ("hadamard", through_hadamard),
            ("add+scale", through_add_scale),
        ];

        let a_val = seeded_random(3, 3, 18, SpectrumPolicy::Unconstrained);
        let aux = seeded_random(3, 3, 19, SpectrumPolicy::Unconstrained);
        for (name, build) in cases {
            let mut tape = Tape::new();
            let a = tape.input(a_val.clone());
            let loss = build(&mut tape, a, &aux);
            let grads = tape.backward(loss).unwrap();
            let ga = grads.get(a).unwrap();

            let fd = wirtinger_grad_matrix(
                |m| {
                    let mut t2 = Tape::new();
                    let a2 = t2.input(m.clone());
                    let l2 = build(&mut t2, a2, &aux);
                    Ok(t2.scalar(l2).unwrap().re)
                },
                &a_val,
                1e-5,
            )
            .unwrap();
            let rel = rel_frobenius_error(ga, &fd);
            assert!(rel <= 1e-7, "{name}: rel err {rel}");
        }
    }

    #[test]
    fn tape_vjp_options_control_the_svd_backward() {
        // The same program with the diagonal term ablated must produce a
        // different gradient for a loss coupling U and V.
        let a_val = seeded_random(3, 3, 23, SpectrumPolicy::WellSeparated);
        let grad_with = |opts: VjpOptions| {
            let mut tape = Tape::with_vjp_options(opts);
            let a = tape.input(a_val.clone());
            let loss = crate::losses::loss_by_name("uv-overlap", 3, 3)
                .unwrap()
                .build_tape_program(&mut tape, a)
                .unwrap();
            tape.backward(loss).unwrap().get(a).unwrap().clone()
        };
        let full = grad_with(VjpOptions::default());
        let ablated = grad_with(VjpOptions {
            include_diagonal_term: false,
            ..VjpOptions::default()
        });
        let diff = rel_frobenius_error(&ablated, &full);
        assert!(diff > 1e-3, "ablation must be visible, diff {diff}");
    }

    #[test]
    fn entry_on_factors_node_is_a_kind_error() {
        let mut tape = Tape::new();
        let a = tape.input(seeded_random(2, 2, 24, SpectrumPolicy::WellSeparated));
        let f = tape.svd(a).unwrap();
        assert!(matches!(
            tape.entry(f, 0, 0),
            Err(Error::KindMismatch {
                expected: "matrix",
                got: "factors"
            })
        ));
        assert!(matches!(
            tape.factor_u(a),
            Err(Error::KindMismatch {
                expected: "factors",
                got: "matrix"
            })
        ));
    }

    #[test]
    fn svd_sbar_accumulator_is_real() {
        // Gradient through |u00|² leaves S̄ untouched; through the trace of
        // S it is exactly the identity. Both must flow without tripping the
        // reality check.
        let a_val = seeded_random(3, 3, 20, SpectrumPolicy::WellSeparated);
        let mut tape = Tape::new();
        let a = tape.input(a_val);
        let f = tape.svd(a).unwrap();
        let u = tape.factor_u(f).unwrap();
        let e = tape.entry(u, 0, 0).unwrap();
        let l1 = tape.abs_squared(e).unwrap();
        let s = tape.factor_s(f).unwrap();
        let t = tape.trace(s).unwrap();
        let l2 = tape.real_part(t).unwrap();
        let loss = tape.add(l1, l2).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(a).is_some());
    }

    #[test]
    fn dot_pairing_matches_inner_product() {
        // ∇ from the tape pairs with perturbations through real_inner: check
        // first-order Taylor agreement, L(A+εE) ≈ L(A) + ε·real_inner(∇, E).
        let a_val = seeded_random(3, 3, 21, SpectrumPolicy::Unconstrained);
        let e_dir = seeded_random(3, 3, 22, SpectrumPolicy::Unconstrained);
        let eval = |m: &ComplexMatrix| -> f64 {
            let mut tape = Tape::new();
            let a = tape.input(m.clone());
            let at = tape.adjoint(a).unwrap();
            let p = tape.matmul(at, a).unwrap();
            let t = tape.trace(p).unwrap();
            let r = tape.real_part(t).unwrap();
            let l = tape.scale_by_real(r, 0.5).unwrap();
            tape.scalar(l).unwrap().re
        };
        let mut tape = Tape::new();
        let a = tape.input(a_val.clone());
        let at = tape.adjoint(a).unwrap();
        let p = tape.matmul(at, a).unwrap();
        let t = tape.trace(p).unwrap();
        let r = tape.real_part(t).unwrap();
        let l = tape.scale_by_real(r, 0.5).unwrap();
        let grads = tape.backward(l).unwrap();
        let g = grads.get(a).unwrap();

        let eps = 1e-6;
        let shifted = a_val.add(&e_dir.scale(eps)).unwrap();
        let predicted = eval(&a_val) + eps * real_inner(g, &e_dir).unwrap();
        let actual = eval(&shifted);
        assert!((predicted - actual).abs() <= 1e-9);
    }
}
