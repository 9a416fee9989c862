//! Experiment configuration: a TOML file with `[problem]`, `[grid]`,
//! `[solver]` and `[run]` sections.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ell_lab_core::functional::{ProblemSpec, Tolerances};
use ell_lab_core::grid::GridSpec;
use ell_lab_core::weights::WeightSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    pub lambda: f64,
    pub v: WeightSpec,
    pub h: WeightSpec,
}

/// Parameters of the individual subcommands; each one reads only its own.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// `eigen`: restrict to `{h ≤ 0}`.
    pub masked: bool,
    /// `eigen`: outer radii of a dilation sweep.
    pub r_max_sweep: Vec<f64>,
    /// `eigen`: radius at which the sweep is extrapolated.
    pub extrapolate_to: Option<f64>,
    /// `branch`, `blowup-fit`: continuation values; spread over the window when empty.
    pub lambdas: Vec<f64>,
    /// `branch`, `blowup-fit`: number of generated values when `lambdas` is empty.
    pub branch_points: Option<usize>,
    /// `sweep-mu`
    pub mus: Vec<f64>,
    /// `mountain-pass`
    pub path_nodes: Option<usize>,
    /// `lambda-star`: bisection width.
    pub resolution: Option<f64>,
    /// `verify`: coarsest manufactured grid and number of doublings.
    pub verify_nodes: Option<usize>,
    pub verify_levels: Option<usize>,
    /// `verify`: random finite-difference pairs.
    pub fd_pairs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: Tolerances,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            grid: self.grid.clone(),
            p: self.problem.p,
            lambda: self.problem.lambda,
            v: self.problem.v.clone(),
            h: self.problem.h.clone(),
            tolerances: self.solver.clone(),
        }
    }
}
