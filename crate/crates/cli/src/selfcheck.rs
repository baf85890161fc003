//! Built-in verification suites covering the library's invariants: matrix
//! identities, factorization contracts, gauge machinery, formula/oracle
//! agreement, and the tape. `--filter` narrows by suite-name substring;
//! the mutation switch deliberately flips the sign of the diagonal VJP term
//! so CI can confirm the suites have teeth.

use zgrad::{Complex64, *};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelfcheckOptions {
    pub filter: Option<String>,
    /// Flips the sign of the diagonal VJP term in formula evaluations, to
    /// prove the suites catch a wrong formula.
    pub mutate_diagonal_sign: bool,
}

struct Ctx {
    mutate: bool,
    checks: usize,
    failures: usize,
    worst: f64,
}

impl Ctx {
    fn new(mutate: bool) -> Self {
        Self {
            mutate,
            checks: 0,
            failures: 0,
            worst: 0.0,
        }
    }

    fn check(&mut self, ok: bool, magnitude: f64) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
        if magnitude.is_finite() {
            self.worst = self.worst.max(magnitude);
        }
    }

    fn finish(self, name: &'static str) -> SuiteResult {
        SuiteResult {
            name,
            checks: self.checks,
            failures: self.failures,
            detail: format!("worst {:.2e}", self.worst),
        }
    }

    /// Square VJP with the optional sign mutation applied to the diagonal
    /// term: mutated = full − 2·(full − ablated).
    fn formula(&self, f: &SvdFactors, c: &SvdCotangents) -> Result<ComplexMatrix> {
        let full = svd_vjp_square(f, c, &VjpOptions::default())?;
        if !self.mutate {
            return Ok(full);
        }
        let ablated = svd_vjp_square(
            f,
            c,
            &VjpOptions {
                include_diagonal_term: false,
                ..VjpOptions::default()
            },
        )?;
        let term = full.sub(&ablated)?;
        full.sub(&term.scale(2.0))
    }
}

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Vec<SuiteResult> {
    type Suite = (&'static str, fn(&mut Ctx));
    let suites: [Suite; 13] = [
        ("matrix-identities", suite_matrix_identities),
        ("svd-factorization", suite_svd_factorization),
        ("svd-determinism", suite_svd_determinism),
        ("gauge-transform", suite_gauge_transform),
        ("gap-matrix", suite_gap_matrix),
        ("fd-agreement", suite_fd_agreement),
        ("diagonal-ablation", suite_diagonal_ablation),
        ("real-reduction", suite_real_reduction),
        ("gauge-residual", suite_gauge_residual),
        ("variant-formula", suite_variant_formula),
        ("dot-test", suite_dot_test),
        ("tape-programs", suite_tape_programs),
        ("oracle-stability", suite_oracle_stability),
    ];

    suites
        .iter()
        .filter(|(name, _)| match &opts.filter {
            Some(needle) => name.contains(needle.as_str()),
            None => true,
        })
        .map(|(name, run)| {
            let mut ctx = Ctx::new(opts.mutate_diagonal_sign);
            run(&mut ctx);
            ctx.finish(name)
        })
        .collect()
}

pub fn print_table(results: &[SuiteResult]) {
    println!(
        "{:<22} {:>7} {:>9}  {:<12} status",
        "suite", "checks", "failures", "detail"
    );
    for r in results {
        println!(
            "{:<22} {:>7} {:>9}  {:<12} {}",
            r.name,
            r.checks,
            r.failures,
            r.detail,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failures: usize = results.iter().map(|r| r.failures).sum();
    let checks: usize = results.iter().map(|r| r.checks).sum();
    println!(
        "total: {checks} checks, {failures} failures — {}",
        if failures == 0 { "PASS" } else { "FAIL" }
    );
}

fn suite_matrix_identities(ctx: &mut Ctx) {
    for seed in 0..100u64 {
        let a = seeded_random(4, 4, 900 + 3 * seed, SpectrumPolicy::Unconstrained);
        let b = seeded_random(4, 4, 901 + 3 * seed, SpectrumPolicy::Unconstrained);
        let c = seeded_random(4, 4, 902 + 3 * seed, SpectrumPolicy::Unconstrained);
        let lhs = a
            .matmul(&hadamard(&c, &b).unwrap())
            .unwrap()
            .trace()
            .unwrap();
        let rhs = hadamard(&c.transpose(), &a)
            .unwrap()
            .matmul(&b)
            .unwrap()
            .trace()
            .unwrap();
        let err = (lhs - rhs).norm() / lhs.norm().max(1.0);
        ctx.check(err <= 1e-12, err);

        let t1 = hadamard(&a, &b).unwrap().transpose();
        let t2 = hadamard(&a.transpose(), &b.transpose()).unwrap();
        ctx.check(t1 == t2, 0.0);

        let x = real_inner(&a, &b).unwrap();
        let y = real_inner(&b, &a).unwrap();
        ctx.check((x - y).abs() <= 1e-12 * x.abs().max(1.0), (x - y).abs());

        let ix = a.scale_complex(Complex64::new(0.0, 1.0));
        let phase = real_inner(&a, &ix).unwrap().abs();
        ctx.check(phase <= 1e-12 * a.frobenius_norm().powi(2), phase);

        let sum = diag_part(&a)
            .unwrap()
            .add(&offdiag_part(&a).unwrap())
            .unwrap();
        ctx.check(sum == a, 0.0);
    }
}

fn suite_svd_factorization(ctx: &mut Ctx) {
    for &(m, n) in &[
        (2, 2),
        (3, 3),
        (5, 5),
        (8, 8),
        (4, 2),
        (2, 4),
        (5, 3),
        (3, 5),
    ] {
        for seed in 1..=3u64 {
            for policy in [SpectrumPolicy::WellSeparated, SpectrumPolicy::Unconstrained] {
                let a = seeded_random(m, n, seed, policy);
                let f = svd(&a).unwrap();
                let uu = f
                    .u()
                    .adjoint()
                    .matmul(f.u())
                    .unwrap()
                    .sub(&ComplexMatrix::identity(f.k()))
                    .unwrap()
                    .frobenius_norm();
                let vv = f
                    .v()
                    .adjoint()
                    .matmul(f.v())
                    .unwrap()
                    .sub(&ComplexMatrix::identity(f.k()))
                    .unwrap()
                    .frobenius_norm();
                let recon = f.reconstruct().sub(&a).unwrap().frobenius_norm()
                    / a.frobenius_norm().max(1e-300);
                ctx.check(uu <= 1e-12, uu);
                ctx.check(vv <= 1e-12, vv);
                ctx.check(recon <= 1e-10, recon);
                let sorted = f.s().values().windows(2).all(|w| w[0] >= w[1]);
                ctx.check(sorted, 0.0);
            }
        }
    }
}

fn suite_svd_determinism(ctx: &mut Ctx) {
    for seed in 1..=5u64 {
        let a = seeded_random(4, 4, seed, SpectrumPolicy::Unconstrained);
        let f1 = svd(&a).unwrap();
        let f2 = svd(&a).unwrap();
        let identical =
            f1.u()
                .entries()
                .iter()
                .zip(f2.u().entries())
                .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
                && f1.v().entries().iter().zip(f2.v().entries()).all(|(x, y)| {
                    x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
                });
        ctx.check(identical, 0.0);
    }
}

fn suite_gauge_transform(ctx: &mut Ctx) {
    for seed in 1..=5u64 {
        let a = seeded_random(3, 3, seed, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        let thetas: Vec<f64> = (0..3)
            .map(|j| ((seed * 7 + j + 1) as f64 * 0.77).sin() * std::f64::consts::PI)
            .collect();
        let fg = apply_gauge(&f, &GaugeTransform::new(thetas)).unwrap();
        let drift = fg
            .reconstruct()
            .sub(&f.reconstruct())
            .unwrap()
            .frobenius_norm()
            / a.frobenius_norm();
        ctx.check(drift <= 1e-12, drift);
        ctx.check(fg.s() == f.s(), 0.0);

        // Catalogue losses must not move along the gauge orbit.
        for loss in catalogue(3, 3) {
            let base = loss.evaluate_factors(&f);
            let moved = (loss.evaluate_factors(&fg) - base).abs();
            ctx.check(moved <= 1e-12 * base.abs().max(1.0), moved);
        }
    }
}

fn suite_gap_matrix(ctx: &mut Ctx) {
    let s = RealDiagonal::new(vec![2.0, 1.0]).unwrap();
    let g = build_gap_matrix(&s, 1e-10, 0.0).unwrap();
    let err = (g.matrix().get(0, 1).re + 1.0 / 3.0).abs();
    ctx.check(err <= 1e-15, err);

    for k in 2..=6usize {
        let values: Vec<f64> = (0..k).map(|i| (1u64 << (k - i)) as f64).collect();
        let s = RealDiagonal::new(values).unwrap();
        let g = build_gap_matrix(&s, 1e-10, 0.0).unwrap();
        let asym = g
            .matrix()
            .add(&g.matrix().transpose())
            .unwrap()
            .frobenius_norm();
        ctx.check(asym <= 1e-14, asym);
    }

    let degenerate = RealDiagonal::new(vec![1.0, 1.0]).unwrap();
    ctx.check(
        matches!(
            build_gap_matrix(&degenerate, 1e-10, 0.0),
            Err(Error::DegenerateSpectrum { .. })
        ),
        0.0,
    );
    ctx.check(build_gap_matrix(&degenerate, 1e-10, 1e-8).is_ok(), 0.0);
}

fn suite_fd_agreement(ctx: &mut Ctx) {
    for &n in &[2usize, 3, 5] {
        for seed in 1..=2u64 {
            let a = seeded_random(n, n, seed, SpectrumPolicy::WellSeparated);
            let f = svd(&a).unwrap();
            for loss in catalogue(n, n) {
                let formula = ctx.formula(&f, &loss.cotangents(&f)).unwrap();
                let fd = wirtinger_grad_matrix(|m| loss.evaluate(m), &a, 1e-5).unwrap();
                let rel = rel_frobenius_error(&formula, &fd);
                ctx.check(rel <= 1e-6, rel);
            }
        }
    }
}

fn suite_diagonal_ablation(ctx: &mut Ctx) {
    let ablated = VjpOptions {
        include_diagonal_term: false,
        ..VjpOptions::default()
    };
    for &n in &[3usize, 5] {
        for seed in 1..=2u64 {
            let a = seeded_random(n, n, seed, SpectrumPolicy::WellSeparated);
            let f = svd(&a).unwrap();
            for loss in catalogue(n, n) {
                let formula = svd_vjp_square(&f, &loss.cotangents(&f), &ablated).unwrap();
                let fd = wirtinger_grad_matrix(|m| loss.evaluate(m), &a, 1e-5).unwrap();
                let rel = rel_frobenius_error(&formula, &fd);
                if loss.couples_u_and_v() {
                    ctx.check(rel >= 1e-3, rel);
                } else {
                    ctx.check(rel <= 1e-6, rel);
                }
            }
        }
    }
}

fn suite_real_reduction(ctx: &mut Ctx) {
    let full = VjpOptions::default();
    let ablated = VjpOptions {
        include_diagonal_term: false,
        ..VjpOptions::default()
    };
    for seed in 1..=5u64 {
        let src = seeded_random(3, 3, 700 + seed, SpectrumPolicy::Unconstrained);
        let a = ComplexMatrix::from_fn(3, 3, |i, j| Complex64::new(src.get(i, j).re, 0.0));
        let f = svd(&a).unwrap();
        if spectral_gap(f.s()) < 1e-6 {
            continue;
        }
        for name in ["frob", "uv-overlap", "u-only"] {
            let loss = loss_by_name(name, 3, 3).unwrap();
            let c = loss.cotangents(&f);
            let with = svd_vjp_square(&f, &c, &full).unwrap();
            let without = svd_vjp_square(&f, &c, &ablated).unwrap();
            let term = with.sub(&without).unwrap().frobenius_norm();
            ctx.check(term <= 1e-14, term);
        }
    }
}

fn suite_gauge_residual(ctx: &mut Ctx) {
    for &(m, n) in &[(3, 3), (4, 2), (2, 4)] {
        let a = seeded_random(m, n, 60, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        for loss in catalogue(m, n) {
            let r = gauge_residual(&f, &loss.cotangents(&f));
            ctx.check(r <= 1e-10, r);
        }
        let raw = SvdCotangents {
            ubar: seeded_random(m, f.k(), 61, SpectrumPolicy::Unconstrained),
            sbar: RealDiagonal::new(vec![0.5; f.k()]).unwrap(),
            vbar: seeded_random(n, f.k(), 62, SpectrumPolicy::Unconstrained),
        };
        let projected = project_gauge_invariant(&f, &raw);
        let r = gauge_residual(&f, &projected);
        ctx.check(r <= 1e-12, r);
    }
}

fn suite_variant_formula(ctx: &mut Ctx) {
    for &n in &[3usize, 5] {
        let a = seeded_random(n, n, 80, SpectrumPolicy::WellSeparated);
        let f = svd(&a).unwrap();
        for loss in catalogue(n, n) {
            let c = loss.cotangents(&f);
            let primary = ctx.formula(&f, &c).unwrap();
            let variant = svd_vjp_square_variant(&f, &c, &VjpOptions::default()).unwrap();
            let rel = rel_frobenius_error(&variant, &primary);
            ctx.check(rel <= 1e-10, rel);
        }
    }

    // A gauge-violating cotangent must split the two forms.
    let a = seeded_random(3, 3, 81, SpectrumPolicy::WellSeparated);
    let f = svd(&a).unwrap();
    let c = SvdCotangents {
        ubar: seeded_random(3, 3, 82, SpectrumPolicy::Unconstrained),
        sbar: RealDiagonal::new(vec![0.0; 3]).unwrap(),
        vbar: ComplexMatrix::zeros(3, 3),
    };
    let primary = svd_vjp_square(&f, &c, &VjpOptions::default()).unwrap();
    let variant = svd_vjp_square_variant(&f, &c, &VjpOptions::default()).unwrap();
    let rel =
        variant.sub(&primary).unwrap().frobenius_norm() / primary.frobenius_norm().max(1e-300);
    ctx.check(rel >= 1e-3, rel);
}

fn suite_dot_test(ctx: &mut Ctx) {
    for &n in &[3usize, 5] {
        for seed in 0..5u64 {
            let base = 500 + 10 * n as u64 + seed;
            let a = seeded_random(n, n, base, SpectrumPolicy::WellSeparated);
            let f = svd(&a).unwrap();
            let c = project_gauge_invariant(
                &f,
                &SvdCotangents {
                    ubar: seeded_random(n, n, base + 1, SpectrumPolicy::Unconstrained),
                    sbar: RealDiagonal::new(vec![0.3; n]).unwrap(),
                    vbar: seeded_random(n, n, base + 2, SpectrumPolicy::Unconstrained),
                },
            );
            let da = seeded_random(n, n, base + 3, SpectrumPolicy::Unconstrained);

            let abar = ctx.formula(&f, &c).unwrap();
            let lhs = real_inner(&abar, &da).unwrap();
            let rhs_for = |split: DiagSplit| {
                let opts = JvpOptions {
                    split,
                    ..JvpOptions::default()
                };
                let (du, ds, dv) = svd_jvp_square_with(&f, &da, &opts).unwrap();
                real_inner(&c.ubar, &du).unwrap()
                    + c.sbar
                        .values()
                        .iter()
                        .zip(ds.values())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                    + real_inner(&c.vbar, &dv).unwrap()
            };
            let rhs = rhs_for(DiagSplit::DZero);
            let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
            ctx.check(gap <= 1e-8, gap);
            let split_drift = (rhs - rhs_for(DiagSplit::Even)).abs();
            ctx.check(split_drift <= 1e-12, split_drift);
        }
    }
}

fn suite_tape_programs(ctx: &mut Ctx) {
    let a_val = seeded_random(3, 3, 300, SpectrumPolicy::WellSeparated);
    let f = svd(&a_val).unwrap();
    for loss in catalogue(3, 3) {
        let mut tape = Tape::new();
        let a = tape.input(a_val.clone());
        let program = match loss.build_tape_program(&mut tape, a) {
            Ok(p) => p,
            Err(Error::UnsupportedTapeLoss(_)) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        };
        let value = tape.scalar(program).unwrap().re;
        let direct = loss.evaluate_factors(&f);
        ctx.check(
            (value - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            (value - direct).abs(),
        );
        let grads = tape.backward(program).unwrap();
        let closed = ctx.formula(&f, &loss.cotangents(&f)).unwrap();
        let rel = rel_frobenius_error(grads.get(a).unwrap(), &closed);
        ctx.check(rel <= 1e-10, rel);
    }

    // One composite program threading every primitive, checked against the
    // Wirtinger oracle; a wrong backward rule anywhere shows up here.
    let aux = seeded_random(3, 3, 301, SpectrumPolicy::Unconstrained);
    let build = |tape: &mut Tape, a: zgrad::NodeId| {
        let x = tape.input(aux.clone());
        let p = tape.matmul(a, x).unwrap();
        let h = tape.hadamard(p, a).unwrap();
        let hc = tape.conjugate(h).unwrap();
        let hsum = tape.add(h, hc).unwrap();
        let hadj = tape.adjoint(hsum).unwrap();
        let q = tape.matmul(hadj, a).unwrap();
        let t = tape.trace(q).unwrap();
        let r1 = tape.real_part(t).unwrap();
        let e = tape.entry(q, 0, 1).unwrap();
        let r2 = tape.abs_squared(e).unwrap();
        let both = tape.add(r1, r2).unwrap();
        tape.scale_by_real(both, 0.3).unwrap()
    };
    let mut tape = Tape::new();
    let a = tape.input(a_val.clone());
    let program = build(&mut tape, a);
    let grads = tape.backward(program).unwrap();
    let fd = wirtinger_grad_matrix(
        |m| {
            let mut t = Tape::new();
            let node = t.input(m.clone());
            let out = build(&mut t, node);
            Ok(t.scalar(out).unwrap().re)
        },
        &a_val,
        1e-5,
    )
    .unwrap();
    let rel = rel_frobenius_error(grads.get(a).unwrap(), &fd);
    ctx.check(rel <= 1e-7, rel);
}

fn suite_oracle_stability(ctx: &mut Ctx) {
    for seed in 1..=3u64 {
        let a = seeded_random(3, 3, 400 + seed, SpectrumPolicy::Unconstrained);
        let g = wirtinger_grad_matrix(|m| Ok(0.5 * m.frobenius_norm().powi(2)), &a, 1e-5).unwrap();
        let rel = rel_frobenius_error(&g, &a);
        ctx.check(rel <= 1e-8, rel);
    }
    let a = seeded_random(3, 3, 410, SpectrumPolicy::WellSeparated);
    let loss = loss_by_name("uv-overlap", 3, 3).unwrap();
    let g5 = wirtinger_grad_matrix(|m| loss.evaluate(m), &a, 1e-5).unwrap();
    let g6 = wirtinger_grad_matrix(|m| loss.evaluate(m), &a, 1e-6).unwrap();
    let rel = g5.sub(&g6).unwrap().frobenius_norm() / g6.frobenius_norm();
    ctx.check(rel <= 1e-5, rel);
}
