//! Gradient-descent demo driving the tape end to end through the SVD.

use zgrad::{loss_by_name, seeded_random, ComplexMatrix, Error, SpectrumPolicy, Tape};

use crate::report::{OptimizeReport, SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub loss: String,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub steps: usize,
    pub eta: f64,
    pub matrix: Option<ComplexMatrix>,
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.eta <= 0.0 {
            return Err("step size eta must be positive".into());
        }
        if self.rows == 0 || self.cols == 0 {
            return Err("sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct OptimizeOutcome {
    pub report: OptimizeReport,
    pub final_matrix: ComplexMatrix,
}

/// Runs A ← A − η·∇L(A) for the configured number of steps. The loss is
/// recorded as a tape program each step, so the gradient flows through the
/// SVD node rather than any closed form. Ten consecutive increases abort
/// the run as divergence.
pub fn run_optimize(config: &OptimizeConfig) -> Result<OptimizeOutcome, Error> {
    let loss = loss_by_name(&config.loss, config.rows, config.cols)?;
    let mut a = match &config.matrix {
        Some(m) => m.clone(),
        None => seeded_random(
            config.rows,
            config.cols,
            config.seed,
            SpectrumPolicy::WellSeparated,
        ),
    };

    let mut losses = Vec::with_capacity(config.steps + 1);
    let mut consecutive_increases = 0usize;
    let mut diverged = false;

    for _ in 0..config.steps {
        let mut tape = Tape::new();
        let input = tape.input(a.clone());
        let program = loss.build_tape_program(&mut tape, input)?;
        let value = tape.scalar(program)?.re;
        if let Some(&prev) = losses.last() {
            if value > prev {
                consecutive_increases += 1;
                if consecutive_increases >= 10 {
                    diverged = true;
                    losses.push(value);
                    break;
                }
            } else {
                consecutive_increases = 0;
            }
        }
        losses.push(value);

        let grads = tape.backward(program)?;
        let grad = grads.get(input).expect("loss depends on the input matrix");
        a = a.sub(&grad.scale(config.eta))?;
    }
    if !diverged {
        losses.push(loss.evaluate(&a)?);
    }

    let monotone = losses.windows(2).all(|w| w[1] <= w[0]);
    let report = OptimizeReport {
        schema: SCHEMA_VERSION,
        loss_name: config.loss.clone(),
        rows: config.rows,
        cols: config.cols,
        seed: config.matrix.is_none().then_some(config.seed),
        eta: config.eta,
        steps: config.steps,
        losses,
        monotone,
        diverged,
    };
    Ok(OptimizeOutcome {
        report,
        final_matrix: a,
    })
}
