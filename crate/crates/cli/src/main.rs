use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zgrad::ComplexMatrix;
use zgrad_cli::config::{FormulaMode, RunConfig, SizeSpec};
use zgrad_cli::optimize::OptimizeConfig;
use zgrad_cli::selfcheck::SelfcheckOptions;
use zgrad_cli::{print_table, run_gradcheck, run_optimize, run_selfcheck};

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;

/// Gradient verification harness for complex-SVD programs.
#[derive(Parser)]
#[command(name = "zgrad", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare formula gradients against the finite-difference oracle.
    Gradcheck(GradcheckArgs),
    /// Run the built-in invariant suites.
    Selfcheck(SelfcheckArgs),
    /// Gradient descent on a catalogue loss, differentiated via the tape.
    Optimize(OptimizeArgs),
}

#[derive(Args)]
struct GradcheckArgs {
    /// Matrix shape, "N" or "RxC"; repeatable.
    #[arg(long = "size", value_name = "N|RxC")]
    sizes: Vec<SizeSpec>,
    /// Generator seed; repeatable.
    #[arg(long = "seed", value_name = "SEED")]
    seeds: Vec<u64>,
    /// Loss name or "all"; repeatable.
    #[arg(long = "loss", value_name = "NAME")]
    losses: Vec<String>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Pass/fail threshold on the relative error.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Which gradient formula to evaluate.
    #[arg(long = "formula", value_enum, default_value = "full")]
    formula: FormulaMode,
    /// Lorentzian broadening for near-degenerate spectra (0 disables).
    #[arg(long, default_value_t = 0.0)]
    broadening: f64,
    /// Degeneracy rejection threshold on the relative spectral gap.
    #[arg(long = "degeneracy-tol", default_value_t = 1e-10)]
    degeneracy_tol: f64,
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Check this matrix file instead of seeded inputs.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Run only suites whose name contains this substring.
    #[arg(long, value_name = "SUBSTRING")]
    filter: Option<String>,
    /// Flip the diagonal-term sign to prove the suites detect it (the run
    /// is expected to fail).
    #[arg(long = "mutate-diagonal-sign")]
    mutate_diagonal_sign: bool,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Catalogue loss to descend on.
    #[arg(long, value_name = "NAME")]
    loss: String,
    /// Number of gradient steps.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Step size.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Matrix shape, "N" or "RxC".
    #[arg(long, default_value = "3")]
    size: SizeSpec,
    /// Generator seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Start from this matrix file instead of a seeded input.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
    /// Write the JSON trajectory report here.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
        Command::Optimize(args) => cmd_optimize(args),
    };
    ExitCode::from(code)
}

fn load_matrix(path: &PathBuf) -> Result<ComplexMatrix, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ComplexMatrix::from_json_str(&text).map_err(|e| e.to_string())
}

fn cmd_gradcheck(args: GradcheckArgs) -> u8 {
    let matrix = match args.matrix.as_ref().map(load_matrix).transpose() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_ERROR;
        }
    };
    let defaults = RunConfig::default();
    let config = RunConfig {
        sizes: if args.sizes.is_empty() {
            defaults.sizes
        } else {
            args.sizes
        },
        seeds: if args.seeds.is_empty() {
            defaults.seeds
        } else {
            args.seeds
        },
        losses: if args.losses.is_empty() {
            defaults.losses
        } else {
            args.losses
        },
        h: args.h,
        tol: args.tol,
        formula_mode: args.formula,
        broadening: args.broadening,
        degeneracy_tol: args.degeneracy_tol,
        matrix,
    };

    let report = match run_gradcheck(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_ERROR;
        }
    };

    for trial in &report.trials {
        let status = if trial.passed { "pass" } else { "FAIL" };
        let detail = match (&trial.rel_error, &trial.error) {
            (Some(rel), _) => format!("rel_error {rel:.3e}"),
            (None, Some(reason)) => reason.clone(),
            _ => String::new(),
        };
        println!(
            "{status} {loss} {rows}x{cols} seed={seed} mode={mode} {detail}",
            loss = trial.loss_name,
            rows = trial.rows,
            cols = trial.cols,
            seed = trial
                .seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".into()),
            mode = trial.formula_mode,
        );
    }
    println!(
        "{} trials, {} failures, max rel error {:.3e}",
        report.summary.trials, report.summary.failures, report.summary.max_rel_error
    );

    if let Some(path) = &args.report {
        if let Err(e) = fs::write(path, report.to_json()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_CONFIG_ERROR;
        }
    }
    if report.failures() == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_selfcheck(args: SelfcheckArgs) -> u8 {
    let results = run_selfcheck(&SelfcheckOptions {
        filter: args.filter,
        mutate_diagonal_sign: args.mutate_diagonal_sign,
    });
    if results.is_empty() {
        eprintln!("error: no suite matches the filter");
        return EXIT_CONFIG_ERROR;
    }
    print_table(&results);
    if results.iter().all(|r| r.passed()) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_optimize(args: OptimizeArgs) -> u8 {
    let matrix = match args.matrix.as_ref().map(load_matrix).transpose() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_ERROR;
        }
    };
    let (rows, cols) = matrix
        .as_ref()
        .map(|m| m.shape())
        .unwrap_or((args.size.rows, args.size.cols));
    let config = OptimizeConfig {
        loss: args.loss,
        rows,
        cols,
        seed: args.seed,
        steps: args.steps,
        eta: args.eta,
        matrix,
    };
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return EXIT_CONFIG_ERROR;
    }

    let outcome = match run_optimize(&config) {
        Ok(o) => o,
        Err(zgrad::Error::UnknownLoss(name)) => {
            eprintln!("error: unknown loss \"{name}\"");
            return EXIT_CONFIG_ERROR;
        }
        Err(zgrad::Error::UnsupportedTapeLoss(name)) => {
            eprintln!("error: loss \"{name}\" has no tape program");
            return EXIT_CONFIG_ERROR;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };

    for (step, value) in outcome.report.losses.iter().enumerate() {
        println!("step {step:>4}  loss {value:.12e}");
    }
    if let Some(path) = &args.report {
        if let Err(e) = fs::write(path, outcome.report.to_json()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_CONFIG_ERROR;
        }
    }

    if outcome.report.diverged {
        eprintln!("divergence detected: loss increased for 10 consecutive steps");
        return EXIT_CHECK_FAILED;
    }
    // The frob objective is exactly contractive, so any increase there is a
    // gradient bug.
    if config.loss == "frob" && !outcome.report.monotone {
        eprintln!("error: frob descent was not monotone");
        return EXIT_CHECK_FAILED;
    }
    EXIT_OK
}
