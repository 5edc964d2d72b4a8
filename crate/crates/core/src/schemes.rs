//! Time-stepping engines for `dU = AU dt + F(t,U) dt + G(t,U) dW`.
//!
//! All engines record the state at the coarse nodes `t_j = jT/n` and evaluate
//! the coefficients at the left endpoint of each (sub)step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{e_operator, MeasureFamily};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridSequence, StateNorm, TimeGrid};
use crate::linop::{LinearOperator, Resolvent};
use crate::noise::Increments;

/// `out = F(t, u)`.
pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// `out = G(t, u) dw`; linear in `dw`.
pub type DiffusionFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

pub const DEFAULT_SUBSTEPS: usize = 8;

/// Regularity exponents carried for the predicted rate only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub theta_f: f64,
    pub theta_g: f64,
    pub eta: f64,
}

impl Default for Regularity {
    fn default() -> Self {
        Self {
            theta_f: 0.0,
            theta_g: 0.0,
            eta: 0.5,
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub operator: Arc<LinearOperator>,
    pub drift: Arc<DriftFn>,
    pub diffusion: Arc<DiffusionFn>,
    /// Columns of an increment row consumed by `diffusion`.
    pub noise_dim: usize,
    pub x0: DVector<f64>,
    pub horizon: f64,
    pub regularity: Regularity,
    /// Norm used by [`truncate_coefficients`].
    pub norm: StateNorm,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.dim())
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("regularity", &self.regularity)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        operator: LinearOperator,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        noise_dim: usize,
        x0: DVector<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if x0.len() != operator.dim() {
            return Err(invalid(format!(
                "initial value has length {}, operator dimension is {}",
                x0.len(),
                operator.dim()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if noise_dim == 0 {
            return Err(invalid("noise dimension must be positive"));
        }
        Ok(Self {
            operator: Arc::new(operator),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            noise_dim,
            x0,
            horizon,
            regularity: Regularity::default(),
            norm: StateNorm::Sup,
        })
    }

    /// Linear problem with additive noise `G dw = g * dw` (nodewise, `m`
    /// noise columns) and drift `F(u) = b u`.
    pub fn linear_additive(operator: LinearOperator, b: f64, g: f64, x0: DVector<f64>, horizon: f64) -> Result<Self> {
        let m = operator.dim();
        Self::new(
            operator,
            move |_, u, out| {
                for (o, x) in out.iter_mut().zip(u) {
                    *o = b * x;
                }
            },
            move |_, _, dw, out| {
                for (o, w) in out.iter_mut().zip(dw) {
                    *o = g * w;
                }
            },
            m,
            x0,
            horizon,
        )
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn with_norm(mut self, norm: StateNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn eval_drift(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        (self.drift)(t, u, &mut out);
        out
    }

    pub fn eval_diffusion(&self, t: f64, u: &[f64], dw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        (self.diffusion)(t, u, dw, &mut out);
        out
    }
}

/// `F_r(t,x) = F(t, (1 ∧ r/|x|) x)` and likewise for `G`. States inside the
/// ball are passed through untouched.
pub fn truncate_coefficients(problem: &Problem, radius: f64) -> Result<Problem> {
    if !(radius > 0.0) {
        return Err(invalid(format!("truncation radius must be positive, got {radius}")));
    }
    let mut out = problem.clone();
    let (drift, norm) = (problem.drift.clone(), problem.norm);
    out.drift = Arc::new(move |t, u: &[f64], o: &mut [f64]| {
        let size = norm.eval(u);
        if size <= radius {
            drift(t, u, o)
        } else {
            let scale = radius / size;
            let projected: Vec<f64> = u.iter().map(|x| x * scale).collect();
            drift(t, &projected, o)
        }
    });
    let (diffusion, norm) = (problem.diffusion.clone(), problem.norm);
    out.diffusion = Arc::new(move |t, u: &[f64], dw: &[f64], o: &mut [f64]| {
        let size = norm.eval(u);
        if size <= radius {
            diffusion(t, u, dw, o)
        } else {
            let scale = radius / size;
            let projected: Vec<f64> = u.iter().map(|x| x * scale).collect();
            diffusion(t, &projected, dw, o)
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeKind {
    ImplicitEuler,
    Abstract(FamilyTag),
    ModifiedSplitting { substeps: usize },
    ClassicalSplitting { substeps: usize },
}

/// Built-in measure families selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Dirac,
    Exponential,
}

impl FamilyTag {
    pub fn family(self) -> MeasureFamily {
        match self {
            FamilyTag::Dirac => MeasureFamily::Dirac,
            FamilyTag::Exponential => MeasureFamily::Exponential,
        }
    }
}

impl SchemeKind {
    /// Increment rows consumed per coarse step.
    pub fn substeps(&self) -> usize {
        match self {
            SchemeKind::ModifiedSplitting { substeps } | SchemeKind::ClassicalSplitting { substeps } => {
                *substeps
            }
            _ => 1,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::ImplicitEuler => write!(f, "implicit_euler"),
            SchemeKind::Abstract(FamilyTag::Dirac) => write!(f, "abstract(dirac)"),
            SchemeKind::Abstract(FamilyTag::Exponential) => write!(f, "abstract(exponential)"),
            SchemeKind::ModifiedSplitting { substeps } => write!(f, "modified_splitting({substeps})"),
            SchemeKind::ClassicalSplitting { substeps } => write!(f, "classical_splitting({substeps})"),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (head, arg) = match s.split_once('(') {
            Some((h, rest)) => {
                let arg = rest
                    .strip_suffix(')')
                    .ok_or_else(|| invalid(format!("unclosed argument in scheme `{s}`")))?;
                (h, Some(arg))
            }
            None => (s.as_str(), None),
        };
        let substeps = |arg: Option<&str>| -> Result<usize> {
            match arg {
                None => Ok(DEFAULT_SUBSTEPS),
                Some(a) => match a.parse::<usize>() {
                    Ok(m) if m >= 1 => Ok(m),
                    _ => Err(invalid(format!("substeps must be a positive integer, got `{a}`"))),
                },
            }
        };
        match head {
            "implicit_euler" if arg.is_none() => Ok(SchemeKind::ImplicitEuler),
            "abstract" => match arg {
                Some("dirac") => Ok(SchemeKind::Abstract(FamilyTag::Dirac)),
                Some("exponential") => Ok(SchemeKind::Abstract(FamilyTag::Exponential)),
                other => Err(invalid(format!("unknown measure family {other:?}"))),
            },
            "modified_splitting" => Ok(SchemeKind::ModifiedSplitting {
                substeps: substeps(arg)?,
            }),
            "classical_splitting" => Ok(SchemeKind::ClassicalSplitting {
                substeps: substeps(arg)?,
            }),
            _ => Err(invalid(format!("unknown scheme `{s}`"))),
        }
    }
}

impl TryFrom<String> for SchemeKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeKind> for String {
    fn from(k: SchemeKind) -> String {
        k.to_string()
    }
}

/// Node values of a scheme on its grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub scheme: String,
    pub substeps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least x0")
    }

    pub fn into_sequence(self) -> Result<GridSequence> {
        GridSequence::new(self.grid, self.states)
    }
}

enum Engine {
    Resolvent(Resolvent),
    /// `V_j = E [V_{j-1} + ...]` with a dense step matrix.
    Dense(DMatrix<f64>),
    Splitting {
        semigroup: DMatrix<f64>,
        substeps: usize,
        modified: bool,
    },
}

/// A scheme prepared for a fixed problem and grid, reusable across samples.
pub struct Stepper<'a> {
    problem: &'a Problem,
    grid: TimeGrid,
    engine: Engine,
    tag: String,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem, scheme: &SchemeKind, grid: TimeGrid) -> Result<Self> {
        check_grid(problem, &grid)?;
        let a = problem.operator.as_ref();
        let tau = grid.step_size();
        let engine = match scheme {
            SchemeKind::ImplicitEuler => Engine::Resolvent(a.resolvent(tau)?),
            SchemeKind::Abstract(tag) => {
                Engine::Dense(e_operator(&tag.family(), a, problem.horizon, grid.steps(), 1)?.matrix)
            }
            SchemeKind::ModifiedSplitting { substeps } | SchemeKind::ClassicalSplitting { substeps } => {
                if *substeps == 0 {
                    return Err(invalid("substeps must be positive"));
                }
                Engine::Splitting {
                    semigroup: a.semigroup_matrix(tau)?,
                    substeps: *substeps,
                    modified: matches!(scheme, SchemeKind::ModifiedSplitting { .. }),
                }
            }
        };
        Ok(Self {
            problem,
            grid,
            engine,
            tag: scheme.to_string(),
        })
    }

    /// Exponential Euler `U_j = S(dt)[U_{j-1} + dt F + G dW]`.
    pub fn reference(problem: &'a Problem, grid: TimeGrid) -> Result<Self> {
        check_grid(problem, &grid)?;
        let s = problem.operator.semigroup_matrix(grid.step_size())?;
        Ok(Self {
            problem,
            grid,
            engine: Engine::Dense(s),
            tag: "reference".into(),
        })
    }

    /// Increment rows expected by [`Stepper::run`].
    pub fn increment_rows(&self) -> usize {
        match &self.engine {
            Engine::Splitting { substeps, .. } => self.grid.steps() * substeps,
            _ => self.grid.steps(),
        }
    }

    pub fn run(&self, increments: &Increments) -> Result<Trajectory> {
        let p = self.problem;
        let rows = self.increment_rows();
        if increments.rows() != rows {
            return Err(invalid(format!(
                "{} expects {rows} increment rows, got {}",
                self.tag,
                increments.rows()
            )));
        }
        if increments.cols() < p.noise_dim {
            return Err(invalid(format!(
                "increments have {} columns, the noise needs {}",
                increments.cols(),
                p.noise_dim
            )));
        }
        let m = p.dim();
        let n = self.grid.steps();
        let tau = self.grid.step_size();
        let mut states = Vec::with_capacity(n + 1);
        states.push(p.x0.clone());
        let mut f = vec![0.0; m];
        let mut g = vec![0.0; m];
        let mut rhs = DVector::zeros(m);
        let mut state = p.x0.clone();
        let noise_row = |r: usize| &increments.row(r)[..p.noise_dim];
        match &self.engine {
            Engine::Resolvent(res) => {
                for j in 1..=n {
                    let t = self.grid.node(j - 1);
                    (p.drift)(t, state.as_slice(), &mut f);
                    (p.diffusion)(t, state.as_slice(), noise_row(j - 1), &mut g);
                    for i in 0..m {
                        state[i] += tau * f[i] + g[i];
                    }
                    res.solve_in_place(state.as_mut_slice())?;
                    check_finite(&state, &self.tag, j)?;
                    states.push(state.clone());
                }
            }
            Engine::Dense(step) => {
                for j in 1..=n {
                    let t = self.grid.node(j - 1);
                    (p.drift)(t, state.as_slice(), &mut f);
                    (p.diffusion)(t, state.as_slice(), noise_row(j - 1), &mut g);
                    for i in 0..m {
                        rhs[i] = state[i] + tau * f[i] + g[i];
                    }
                    state.gemv(1.0, step, &rhs, 0.0);
                    check_finite(&state, &self.tag, j)?;
                    states.push(state.clone());
                }
            }
            Engine::Splitting {
                semigroup,
                substeps,
                modified,
            } => {
                let ms = *substeps;
                let dt = tau / ms as f64;
                let total = (n * ms) as f64;
                let mut y = DVector::zeros(m);
                for j in 1..=n {
                    y.gemv(1.0, semigroup, &state, 0.0);
                    for k in 0..ms {
                        let idx = (j - 1) * ms + k;
                        let t = p.horizon * idx as f64 / total;
                        (p.drift)(t, y.as_slice(), &mut f);
                        (p.diffusion)(t, y.as_slice(), noise_row(idx), &mut g);
                        for i in 0..m {
                            rhs[i] = dt * f[i] + g[i];
                        }
                        if *modified {
                            y.gemv(1.0, semigroup, &rhs, 1.0);
                        } else {
                            y += &rhs;
                        }
                    }
                    state.copy_from(&y);
                    check_finite(&state, &self.tag, j)?;
                    states.push(state.clone());
                }
            }
        }
        Ok(Trajectory {
            grid: self.grid,
            states,
            scheme: self.tag.clone(),
            substeps: match &self.engine {
                Engine::Splitting { substeps, .. } => *substeps,
                _ => 1,
            },
        })
    }
}

fn check_grid(problem: &Problem, grid: &TimeGrid) -> Result<()> {
    if (grid.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(invalid(format!(
            "grid horizon {} differs from problem horizon {}",
            grid.horizon(),
            problem.horizon
        )));
    }
    Ok(())
}

fn check_finite(state: &DVector<f64>, tag: &str, j: usize) -> Result<()> {
    if state.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            context: format!("{tag} produced a non-finite state at step {j}"),
            residual: f64::NAN,
        })
    }
}

pub fn run_scheme(problem: &Problem, scheme: &SchemeKind, grid: TimeGrid, increments: &Increments) -> Result<Trajectory> {
    Stepper::new(problem, scheme, grid)?.run(increments)
}

pub fn implicit_euler_run(problem: &Problem, grid: TimeGrid, increments: &Increments) -> Result<Trajectory> {
    run_scheme(problem, &SchemeKind::ImplicitEuler, grid, increments)
}

pub fn abstract_scheme_run(
    problem: &Problem,
    grid: TimeGrid,
    increments: &Increments,
    family: FamilyTag,
) -> Result<Trajectory> {
    run_scheme(problem, &SchemeKind::Abstract(family), grid, increments)
}

pub fn modified_splitting_run(
    problem: &Problem,
    grid: TimeGrid,
    increments_fine: &Increments,
    substeps: usize,
) -> Result<Trajectory> {
    run_scheme(problem, &SchemeKind::ModifiedSplitting { substeps }, grid, increments_fine)
}

pub fn classical_splitting_run(
    problem: &Problem,
    grid: TimeGrid,
    increments_fine: &Increments,
    substeps: usize,
) -> Result<Trajectory> {
    run_scheme(problem, &SchemeKind::ClassicalSplitting { substeps }, grid, increments_fine)
}

pub fn reference_run(problem: &Problem, grid_fine: TimeGrid, increments_fine: &Increments) -> Result<Trajectory> {
    Stepper::reference(problem, grid_fine)?.run(increments_fine)
}
