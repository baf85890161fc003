//! Command-line harness around the library: gradient-check sweeps with
//! machine-readable reports, built-in invariant suites, and a small
//! gradient-descent demo.

pub mod config;
pub mod gradcheck;
pub mod optimize;
pub mod report;
pub mod selfcheck;

pub use config::{FormulaMode, RunConfig, SizeSpec};
pub use gradcheck::run_gradcheck;
pub use optimize::{run_optimize, OptimizeConfig, OptimizeOutcome};
pub use report::{GradCheckReport, OptimizeReport, Summary, TrialRecord};
pub use selfcheck::{print_table, run_selfcheck, SelfcheckOptions, SuiteResult};
