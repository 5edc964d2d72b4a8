//! Experiment configuration files.
//!
//! ```toml
//! [problem]
//! preset = "white_mult"
//! m = 128
//! horizon = 1.0
//!
//! [experiment]
//! schemes = ["implicit_euler", "modified_splitting(8)"]
//! n_ladder = [16, 32, 64, 128]
//! n_fine = 2048
//! samples = 200
//! p = 2.0
//! gammas = [0.0]
//! norm = { kind = "sup" }
//! seed = 1
//! ```
//!
//! `[problem.spec]` may replace `preset` with an inline heat-equation spec,
//! and `[metadata]` overrides the regularity exponents of the problem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StateNorm;
use crate::heat1d::{preset, HeatSpec};
use crate::schemes::{Problem, Regularity, SchemeKind};

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Grid size; overrides the inline spec's `m` when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<HeatSpec>,
    /// Optional radial truncation of the coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

/// State-space norm selector; spacings are filled in from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSelector {
    Sup,
    L2,
    Holder { exponent: f64 },
}

impl NormSelector {
    pub fn state_norm(self, spacing: f64) -> StateNorm {
        match self {
            NormSelector::Sup => StateNorm::Sup,
            NormSelector::L2 => StateNorm::L2 { spacing },
            NormSelector::Holder { exponent } => StateNorm::Holder { exponent, spacing },
        }
    }
}

fn default_p() -> f64 {
    2.0
}

fn default_gammas() -> Vec<f64> {
    vec![0.0]
}

fn default_norm() -> NormSelector {
    NormSelector::Sup
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub schemes: Vec<SchemeKind>,
    pub n_ladder: Vec<usize>,
    pub n_fine: usize,
    pub samples: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_norm")]
    pub norm: NormSelector,
    pub seed: u64,
    /// Also emit the per-node differences (small runs only).
    #[serde(default)]
    pub emit_differences: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Regularity>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// The heat-equation spec after applying presets and overrides.
    pub fn heat_spec(&self) -> Result<HeatSpec> {
        let p = &self.problem;
        let mut spec = match (&p.preset, &p.spec) {
            (Some(name), None) => preset(name, p.m.unwrap_or(64))?,
            (None, Some(spec)) => spec.clone(),
            (Some(_), Some(_)) => return Err(config_err("give either problem.preset or problem.spec, not both")),
            (None, None) => return Err(config_err("problem.preset or problem.spec is required")),
        };
        if let Some(m) = p.m {
            spec.m = m;
        }
        if let Some(r) = self.metadata {
            spec.regularity = r;
        }
        Ok(spec)
    }

    /// Assembles the problem, truncated if a radius is configured.
    pub fn build_problem(&self) -> Result<Problem> {
        let spec = self.heat_spec()?;
        let norm = self.experiment.norm.state_norm(spec.spacing());
        let problem = spec.assemble(self.problem.horizon)?.with_norm(norm);
        match self.problem.truncation_radius {
            Some(r) => crate::schemes::truncate_coefficients(&problem, r),
            None => Ok(problem),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !(self.problem.horizon > 0.0 && self.problem.horizon.is_finite()) {
            return Err(config_err("problem.horizon must be positive"));
        }
        if e.n_fine == 0 || e.samples == 0 {
            return Err(config_err("n_fine and samples must be positive"));
        }
        if e.n_ladder.is_empty() {
            return Err(config_err("n_ladder is empty"));
        }
        for &n in &e.n_ladder {
            if n == 0 || !e.n_fine.is_multiple_of(n) {
                return Err(config_err(format!("n = {n} does not divide n_fine = {}", e.n_fine)));
            }
            for s in &e.schemes {
                let rows = n * s.substeps();
                if !e.n_fine.is_multiple_of(rows) {
                    return Err(config_err(format!(
                        "{s}: n * M = {rows} does not divide n_fine = {}",
                        e.n_fine
                    )));
                }
            }
        }
        let mut sorted = e.n_ladder.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != e.n_ladder.len() {
            return Err(config_err("n_ladder has duplicates"));
        }
        if !(e.p >= 1.0 && e.p.is_finite()) {
            return Err(config_err("p must be at least 1"));
        }
        if let Some(g) = e.gammas.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(config_err(format!("gamma {g} outside [0, 1)")));
        }
        if let NormSelector::Holder { exponent } = e.norm {
            if !(exponent > 0.0 && exponent <= 1.0) {
                return Err(config_err("Hölder norm exponent must lie in (0, 1]"));
            }
        }
        if let Some(r) = self.problem.truncation_radius {
            if !(r > 0.0) {
                return Err(config_err("truncation_radius must be positive"));
            }
        }
        Ok(())
    }
}
