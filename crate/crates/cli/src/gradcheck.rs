//! The gradcheck sweep: formula gradients against the Wirtinger oracle over
//! a size × seed × loss grid.

use std::time::Instant;

use zgrad::{
    gauge_residual, loss_by_name, rel_frobenius_error, seeded_random, svd, svd_vjp_rect,
    svd_vjp_square, svd_vjp_square_variant, wirtinger_grad_matrix, ComplexMatrix, Error, LossSpec,
    SpectrumPolicy, VjpOptions,
};

use crate::config::{FormulaMode, RunConfig};
use crate::report::{GradCheckReport, Summary, TrialRecord, SCHEMA_VERSION};

/// Runs the full sweep. Individual trial errors (degenerate spectra, shape
/// refusals) become failed records with a reason; they never abort the run.
/// Trials execute and report in configuration order, so identical configs
/// produce identical reports up to timings.
pub fn run_gradcheck(config: &RunConfig) -> Result<GradCheckReport, String> {
    config.validate()?;
    let loss_names = config.loss_names();
    let mut trials = Vec::new();

    if let Some(matrix) = &config.matrix {
        for name in &loss_names {
            trials.push(run_trial(config, name, matrix, None)?);
        }
    } else {
        for size in &config.sizes {
            for &seed in &config.seeds {
                let a = seeded_random(size.rows, size.cols, seed, SpectrumPolicy::WellSeparated);
                for name in &loss_names {
                    trials.push(run_trial(config, name, &a, Some(seed))?);
                }
            }
        }
    }

    let failures = trials.iter().filter(|t| !t.passed).count();
    let max_rel_error = trials
        .iter()
        .filter_map(|t| t.rel_error)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        schema: SCHEMA_VERSION,
        trials: trials.clone(),
        summary: Summary {
            trials: trials.len(),
            failures,
            max_rel_error,
        },
    })
}

fn run_trial(
    config: &RunConfig,
    loss_name: &str,
    a: &ComplexMatrix,
    seed: Option<u64>,
) -> Result<TrialRecord, String> {
    // Unknown losses are a configuration problem, not a trial failure.
    let loss = loss_by_name(loss_name, a.rows(), a.cols()).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let outcome = evaluate_trial(config, &loss, a);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    let record = match outcome {
        Ok((rel_error, residual)) => TrialRecord {
            loss_name: loss_name.to_string(),
            rows: a.rows(),
            cols: a.cols(),
            seed,
            formula_mode: config.formula_mode,
            h: config.h,
            rel_error: Some(rel_error),
            gauge_residual: Some(residual),
            passed: rel_error <= config.tol,
            wall_time_ms,
            error: None,
        },
        Err(err) => TrialRecord {
            loss_name: loss_name.to_string(),
            rows: a.rows(),
            cols: a.cols(),
            seed,
            formula_mode: config.formula_mode,
            h: config.h,
            rel_error: None,
            gauge_residual: None,
            passed: false,
            wall_time_ms,
            error: Some(err.to_string()),
        },
    };
    Ok(record)
}

fn evaluate_trial(
    config: &RunConfig,
    loss: &LossSpec,
    a: &ComplexMatrix,
) -> Result<(f64, f64), Error> {
    let opts = VjpOptions {
        include_diagonal_term: config.formula_mode != FormulaMode::NoDiagonal,
        broadening: config.broadening,
        degeneracy_tol: config.degeneracy_tol,
        ..VjpOptions::default()
    };
    let f = svd(a)?;
    let cot = loss.cotangents(&f);
    let residual = gauge_residual(&f, &cot);
    let formula = match config.formula_mode {
        FormulaMode::Variant => svd_vjp_square_variant(&f, &cot, &opts)?,
        _ if a.rows() == a.cols() => svd_vjp_square(&f, &cot, &opts)?,
        _ => svd_vjp_rect(&f, &cot, &opts)?,
    };
    let fd = wirtinger_grad_matrix(|m| loss.evaluate(m), a, config.h)?;
    Ok((rel_frobenius_error(&formula, &fd), residual))
}
