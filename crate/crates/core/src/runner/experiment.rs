//! Monte Carlo strong-error experiments over an n-ladder.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{fit_rate, holder_norms, lp_moment, GridSequence, RateFit, TimeGrid};
use crate::noise::{coarsen, generate, Increments, SeedDescriptor};
use crate::schemes::{Problem, Regularity, SchemeKind, Stepper};

use super::config::ExperimentConfig;

/// Errors of one scheme at one `n` and one Hölder exponent.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub scheme: String,
    pub n: usize,
    pub gamma: f64,
    /// One error per sample, in sample order.
    pub samples: Vec<f64>,
    pub lp_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateEntry {
    pub scheme: String,
    pub gamma: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// Largest `delta` allowed by the rate budget for this `gamma` and `p`.
    pub predicted_ceiling: f64,
    /// The same budget as `p -> infinity`.
    pub ceiling_limit: f64,
    /// Ladder values `n` whose max-over-samples error exceeds 1.5 times the
    /// value at the previous rung.
    pub max_error_flags: Vec<usize>,
    #[serde(skip)]
    pub fit: RateFit,
}

/// Node-wise differences scheme minus reference for one sample.
#[derive(Debug, Clone)]
pub struct DifferenceRecord {
    pub scheme: String,
    pub n: usize,
    pub sample: usize,
    pub values: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub rates: Vec<RateEntry>,
    pub differences: Vec<DifferenceRecord>,
}

impl ErrorReport {
    pub fn cell(&self, scheme: &str, n: usize, gamma: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.n == n && c.gamma == gamma)
    }

    pub fn rate(&self, scheme: &str, gamma: f64) -> Option<&RateEntry> {
        self.rates.iter().find(|r| r.scheme == scheme && r.gamma == gamma)
    }
}

/// Rate budget `min{...} - gamma - 1/p` for the scheme family, and its
/// `p -> infinity` limit.
pub fn predicted_ceiling(scheme: &SchemeKind, reg: &Regularity, gamma: f64, p: f64) -> (f64, f64) {
    let budget = match scheme {
        SchemeKind::ModifiedSplitting { .. } | SchemeKind::ClassicalSplitting { .. } => {
            (1.0 + reg.theta_f).min(0.5 + reg.theta_g).min(reg.eta).min(1.0)
        }
        _ => (1.0 + reg.theta_f.min(0.0)).min(0.5 + reg.theta_g.min(0.0)).min(reg.eta),
    };
    (budget - gamma - 1.0 / p, budget - gamma)
}

struct SampleOutcome {
    /// `errors[cell][gamma]`, cells in (scheme, n) order.
    errors: Vec<Vec<f64>>,
    differences: Vec<DifferenceRecord>,
}

fn run_sample(
    cfg: &ExperimentConfig,
    problem: &Problem,
    reference: &Stepper<'_>,
    cells: &[(usize, usize, Stepper<'_>)],
    sample: usize,
) -> Result<SampleOutcome> {
    let e = &cfg.experiment;
    let lattice = generate(
        e.n_fine,
        problem.noise_dim,
        problem.horizon,
        SeedDescriptor::new(e.seed, sample as u64),
    )?;
    let reference_traj = reference.run(lattice.increments())?;
    let mut coarse: HashMap<usize, Increments> = HashMap::new();
    let mut errors = Vec::with_capacity(cells.len());
    let mut differences = Vec::new();
    for (si, n, stepper) in cells {
        let rows = stepper.increment_rows();
        if let std::collections::hash_map::Entry::Vacant(e) = coarse.entry(rows) {
            e.insert(coarsen(&lattice, rows)?);
        }
        let traj = stepper.run(&coarse[&rows])?;
        let stride = e.n_fine / n;
        let diff: Vec<DVector<f64>> = traj
            .states
            .iter()
            .enumerate()
            .map(|(j, s)| s - &reference_traj.states[j * stride])
            .collect();
        let seq = GridSequence::new(TimeGrid::new(problem.horizon, *n)?, diff)?;
        errors.push(holder_norms(&seq, &e.gammas, &problem.norm)?);
        if e.emit_differences {
            differences.push(DifferenceRecord {
                scheme: e.schemes[*si].to_string(),
                n: *n,
                sample,
                values: seq.values().to_vec(),
            });
        }
    }
    Ok(SampleOutcome { errors, differences })
}

/// Runs every sample, scheme and ladder rung against one shared reference
/// per sample. Samples run in parallel; results are merged by sample index,
/// so the output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    run_experiment_with(cfg, &problem)
}

/// [`run_experiment`] with an already assembled problem.
pub fn run_experiment_with(cfg: &ExperimentConfig, problem: &Problem) -> Result<ErrorReport> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let horizon = problem.horizon;
    let reference = Stepper::reference(problem, TimeGrid::new(horizon, e.n_fine)?)?;
    let mut cells = Vec::new();
    for (si, scheme) in e.schemes.iter().enumerate() {
        for &n in &e.n_ladder {
            cells.push((si, n, Stepper::new(problem, scheme, TimeGrid::new(horizon, n)?)?));
        }
    }

    let outcomes: Vec<Result<SampleOutcome>> = (0..e.samples)
        .into_par_iter()
        .map(|s| run_sample(cfg, problem, &reference, &cells, s))
        .collect();
    let outcomes: Vec<SampleOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut results = Vec::new();
    for (ci, (si, n, _)) in cells.iter().enumerate() {
        for (gi, &gamma) in e.gammas.iter().enumerate() {
            let samples: Vec<f64> = outcomes.iter().map(|o| o.errors[ci][gi]).collect();
            results.push(CellResult {
                scheme: e.schemes[*si].to_string(),
                n: *n,
                gamma,
                lp_error: lp_moment(&samples, e.p)?,
                max_error: samples.iter().copied().fold(0.0, f64::max),
                samples,
            });
        }
    }

    let mut rates = Vec::new();
    if e.n_ladder.len() >= 2 {
        let mut ladder = e.n_ladder.clone();
        ladder.sort_unstable();
        for scheme in &e.schemes {
            let name = scheme.to_string();
            for &gamma in &e.gammas {
                let row: Vec<&CellResult> = ladder
                    .iter()
                    .filter_map(|&n| {
                        results
                            .iter()
                            .find(|c| c.scheme == name && c.n == n && c.gamma == gamma)
                    })
                    .collect();
                let points: Vec<(usize, f64)> = row.iter().map(|c| (c.n, c.lp_error)).collect();
                let Ok(fit) = fit_rate(&points) else {
                    continue;
                };
                let flags = row
                    .windows(2)
                    .filter(|w| w[1].max_error > 1.5 * w[0].max_error)
                    .map(|w| w[1].n)
                    .collect();
                let (predicted_ceiling, ceiling_limit) =
                    predicted_ceiling(scheme, &problem.regularity, gamma, e.p);
                rates.push(RateEntry {
                    scheme: name.clone(),
                    gamma,
                    slope: fit.slope,
                    r_squared: fit.r_squared,
                    predicted_ceiling,
                    ceiling_limit,
                    max_error_flags: flags,
                    fit,
                });
            }
        }
    }

    Ok(ErrorReport {
        config: cfg.clone(),
        cells: results,
        rates,
        differences: outcomes.into_iter().flat_map(|o| o.differences).collect(),
    })
}
