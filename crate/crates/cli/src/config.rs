//! Run configuration shared by the subcommands.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Matrix shape parsed from "N" (square) or "RxC".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeSpec {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for SizeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_dim = |txt: &str| -> Result<usize, String> {
            let v: usize = txt
                .parse()
                .map_err(|_| format!("invalid size component \"{txt}\""))?;
            if v == 0 {
                return Err("sizes must be positive".into());
            }
            Ok(v)
        };
        match s.split_once(['x', 'X']) {
            Some((r, c)) => Ok(SizeSpec {
                rows: parse_dim(r)?,
                cols: parse_dim(c)?,
            }),
            None => {
                let n = parse_dim(s)?;
                Ok(SizeSpec { rows: n, cols: n })
            }
        }
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rows == self.cols {
            write!(f, "{}", self.rows)
        } else {
            write!(f, "{}x{}", self.rows, self.cols)
        }
    }
}

/// Which gradient formula a gradcheck run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum FormulaMode {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "no-diagonal")]
    NoDiagonal,
    #[serde(rename = "variant")]
    Variant,
}

impl fmt::Display for FormulaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FormulaMode::Full => "full",
            FormulaMode::NoDiagonal => "no-diagonal",
            FormulaMode::Variant => "variant",
        };
        write!(f, "{name}")
    }
}

/// Gradcheck sweep configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sizes: Vec<SizeSpec>,
    pub seeds: Vec<u64>,
    /// Loss names; "all" expands to the whole catalogue.
    pub losses: Vec<String>,
    pub h: f64,
    pub tol: f64,
    pub formula_mode: FormulaMode,
    pub broadening: f64,
    pub degeneracy_tol: f64,
    /// When set, the sweep runs on this one matrix instead of seeding.
    pub matrix: Option<zgrad::ComplexMatrix>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sizes: vec![SizeSpec { rows: 3, cols: 3 }],
            seeds: vec![1],
            losses: vec!["all".into()],
            h: 1e-5,
            tol: 1e-6,
            formula_mode: FormulaMode::Full,
            broadening: 0.0,
            degeneracy_tol: 1e-10,
            matrix: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.h <= 0.0 {
            return Err("h must be positive".into());
        }
        if self.tol <= 0.0 {
            return Err("tol must be positive".into());
        }
        if self.broadening < 0.0 {
            return Err("broadening must be non-negative".into());
        }
        if self.sizes.is_empty() && self.matrix.is_none() {
            return Err("at least one --size is required".into());
        }
        if self.seeds.is_empty() && self.matrix.is_none() {
            return Err("at least one --seed is required".into());
        }
        if self.losses.is_empty() {
            return Err("at least one --loss is required".into());
        }
        Ok(())
    }

    /// Expands "all" into the canonical catalogue order, keeping explicit
    /// names in the order given.
    pub fn loss_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in &self.losses {
            if name == "all" {
                out.extend(zgrad::LOSS_NAMES.iter().map(|s| s.to_string()));
            } else {
                out.push(name.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_square_and_rect_sizes() {
        assert_eq!(
            "5".parse::<SizeSpec>().unwrap(),
            SizeSpec { rows: 5, cols: 5 }
        );
        assert_eq!(
            "4x2".parse::<SizeSpec>().unwrap(),
            SizeSpec { rows: 4, cols: 2 }
        );
        assert!("0".parse::<SizeSpec>().is_err());
        assert!("3x".parse::<SizeSpec>().is_err());
        assert!("axb".parse::<SizeSpec>().is_err());
    }

    #[test]
    fn validates_positive_parameters() {
        let mut config = RunConfig::default();
        assert!(config.validate().is_ok());
        config.h = 0.0;
        assert!(config.validate().is_err());
        config.h = 1e-5;
        config.tol = -1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn all_expands_to_catalogue() {
        let config = RunConfig::default();
        assert_eq!(config.loss_names().len(), zgrad::LOSS_NAMES.len());
    }
}
