//! Uniform time grids, discrete Hölder norms, `L^p` moment estimation and
//! log-log rate fitting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform partition `t_j = jT/n`, `j = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_j`, always computed as `j*T/n` so nodes never accumulate drift.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            return self.horizon;
        }
        j as f64 * self.horizon / self.steps as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|j| self.node(j))
    }

    /// Index `j` of the interval `[t_j, t_{j+1})` containing `t`.
    pub fn floor_index(&self, t: f64) -> usize {
        let n = self.steps;
        if t <= 0.0 {
            return 0;
        }
        let mut k = ((t * n as f64 / self.horizon).floor() as usize).min(n - 1);
        // Rounding in t*n/T can land one cell off.
        while k > 0 && self.node(k) > t {
            k -= 1;
        }
        while k + 1 < n && self.node(k + 1) <= t {
            k += 1;
        }
        k
    }

    /// Left grid point of the cell containing `t` (the underline map).
    pub fn floor_map(&self, t: f64) -> f64 {
        self.node(self.floor_index(t))
    }

    /// Right grid point of the cell containing `t` (the overline map).
    pub fn ceil_map(&self, t: f64) -> f64 {
        self.node(self.floor_index(t) + 1)
    }

    /// Whether every node of `self` is a node of `finer`.
    pub fn divides(&self, finer: &TimeGrid) -> bool {
        self.horizon == finer.horizon && finer.steps.is_multiple_of(self.steps)
    }
}

/// Norm used on the finite-dimensional state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateNorm {
    /// Discrete `L^2(0,1)` norm, `sqrt(h * sum v_i^2)`.
    L2 { spacing: f64 },
    Sup,
    /// Discrete `C^lambda[0,1]` norm: sup norm plus the spatial Hölder
    /// seminorm over node pairs with spacing `h`.
    Holder { exponent: f64, spacing: f64 },
}

impl StateNorm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            StateNorm::L2 { spacing } => (spacing * v.iter().map(|x| x * x).sum::<f64>()).sqrt(),
            StateNorm::Sup => v.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            StateNorm::Holder { exponent, spacing } => {
                let sup = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                let mut semi = 0.0f64;
                for i in 0..v.len() {
                    for k in i + 1..v.len() {
                        let dist = ((k - i) as f64 * spacing).powf(exponent);
                        semi = semi.max((v[k] - v[i]).abs() / dist);
                    }
                }
                sup + semi
            }
        }
    }

    fn diff(&self, a: &[f64], b: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            StateNorm::Sup => a
                .iter()
                .zip(b)
                .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())),
            _ => {
                scratch.clear();
                scratch.extend(a.iter().zip(b).map(|(x, y)| x - y));
                self.eval(scratch)
            }
        }
    }
}

/// Node values `x_0..x_n` of a state-space valued function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSequence {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl GridSequence {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(invalid(format!(
                "sequence has {} values, grid needs {}",
                values.len(),
                grid.steps() + 1
            )));
        }
        if let Some(m) = values.first().map(|v| v.len()) {
            if values.iter().any(|v| v.len() != m) {
                return Err(invalid("sequence values have differing dimensions"));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }
}

/// The discrete Hölder norm
/// `sup_j |x_j| + sup_{i<j} |x_j - x_i| / |t_j - t_i|^gamma`.
pub fn holder_norm(seq: &GridSequence, gamma: f64, norm: &StateNorm) -> Result<f64> {
    Ok(holder_norms(seq, &[gamma], norm)?[0])
}

/// [`holder_norm`] for several exponents at once; the O(n^2) pairwise
/// difference norms are shared between them.
pub fn holder_norms(seq: &GridSequence, gammas: &[f64], norm: &StateNorm) -> Result<Vec<f64>> {
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(invalid(format!("Hölder exponent {g} outside [0, 1]")));
    }
    let xs = seq.values();
    let n = seq.grid().steps();
    let dt = seq.grid().step_size();
    let sup = xs
        .iter()
        .map(|x| norm.eval(x.as_slice()))
        .fold(0.0f64, f64::max);

    // Largest difference norm for each lag k = j - i.
    let mut by_lag = vec![0.0f64; n + 1];
    let mut scratch = Vec::new();
    for j in 1..=n {
        for i in 0..j {
            let d = norm.diff(xs[j].as_slice(), xs[i].as_slice(), &mut scratch);
            let slot = &mut by_lag[j - i];
            if d > *slot {
                *slot = d;
            }
        }
    }

    Ok(gammas
        .iter()
        .map(|&gamma| {
            let semi = (1..=n)
                .map(|k| {
                    if gamma == 0.0 {
                        by_lag[k]
                    } else {
                        by_lag[k] / (k as f64 * dt).powf(gamma)
                    }
                })
                .fold(0.0f64, f64::max);
            sup + semi
        })
        .collect())
}

/// Monte Carlo estimate `(mean s_i^p)^(1/p)` of an `L^p(Omega)` norm.
pub fn lp_moment(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("no samples for L^p moment"));
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("moment exponent must be >= 1, got {p}")));
    }
    if samples.iter().any(|s| *s < 0.0 || s.is_nan()) {
        return Err(invalid("L^p moment of negative or NaN sample"));
    }
    let mean = samples.iter().map(|s| s.powf(p)).sum::<f64>() / samples.len() as f64;
    Ok(mean.powf(1.0 / p))
}

/// Least-squares fit of `log(error) = intercept + slope * log(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(usize, f64)>,
    /// Fitted `-delta`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    /// The estimated convergence order `delta = -slope`.
    pub fn order(&self) -> f64 {
        -self.slope
    }
}

pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    if let Some((n, e)) = points.iter().find(|(_, e)| !(*e > 0.0) || !e.is_finite()) {
        return Err(invalid(format!("error at n = {n} is not positive: {e}")));
    }
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 || distinct[0] == 0 {
        return Err(invalid("rate fit needs at least two distinct positive n"));
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * len {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}
