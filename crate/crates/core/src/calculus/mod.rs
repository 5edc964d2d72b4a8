//! Measure families, their convolution powers and the approximants
//! `E(t_j) = ∫ S(tT) dμ_n^{*j}(t)`.
//!
//! Two families are built in: the Dirac family `μ_n = δ_{1/n}`, for which
//! `E(t_j) = S(t_j)`, and the exponential family `dμ_n = n e^{-nt} dt`, whose
//! `j`-fold convolution is the Gamma law with shape `j` and rate `n` and
//! whose approximants are the resolvent powers `(I - (T/n)A)^{-j}`.

pub mod quadrature;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use libm::{lgamma as ln_gamma, tgamma as gamma};
use statrs::function::gamma::{digamma, gamma_ur};

use crate::error::{invalid, Error, Result};
use crate::linop::{operator_norm, LinearOperator};

/// Remaining mass beyond the truncated support.
pub const TAIL_MASS: f64 = 1e-12;
/// Largest tolerated quadrature mass deficit for operator quadrature.
pub const MASS_DEFICIT_TOL: f64 = 1e-9;

type DensityFn = dyn Fn(usize, usize, f64) -> f64 + Send + Sync;
type SupportFn = dyn Fn(usize, usize, f64) -> f64 + Send + Sync;

/// A user-supplied family given by the densities of its convolution powers.
#[derive(Clone)]
pub struct CustomFamily {
    name: String,
    /// Density of `μ_n^{*j}` at `t`, arguments `(n, j, t)`.
    power_density: Arc<DensityFn>,
    /// A point beyond which `μ_n^{*j}` carries less than the given mass,
    /// arguments `(n, j, mass)`.
    support_end: Arc<SupportFn>,
    /// Total mass of `μ_n`.
    mass: f64,
}

impl CustomFamily {
    pub fn new(
        name: impl Into<String>,
        mass: f64,
        power_density: impl Fn(usize, usize, f64) -> f64 + Send + Sync + 'static,
        support_end: impl Fn(usize, usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            power_density: Arc::new(power_density),
            support_end: Arc::new(support_end),
            mass,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFamily")
            .field("name", &self.name)
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum MeasureFamily {
    Dirac,
    Exponential,
    Custom(CustomFamily),
}

impl fmt::Display for MeasureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureFamily::Dirac => write!(f, "dirac"),
            MeasureFamily::Exponential => write!(f, "exponential"),
            MeasureFamily::Custom(c) => write!(f, "{}", c.name),
        }
    }
}

impl std::str::FromStr for MeasureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dirac" => Ok(MeasureFamily::Dirac),
            "exponential" => Ok(MeasureFamily::Exponential),
            other => Err(invalid(format!("unknown measure family `{other}`"))),
        }
    }
}

fn ln_gamma_density(n: f64, j: usize, t: f64) -> f64 {
    let jf = j as f64;
    if t <= 0.0 {
        return if j == 1 { n } else { 0.0 };
    }
    (jf * n.ln() + (jf - 1.0) * t.ln() - n * t - ln_gamma(jf)).exp()
}

/// Smallest `x` with regularized upper incomplete Gamma `Q(shape, rate x) < eps`.
fn gamma_tail_point(shape: f64, rate: f64, eps: f64) -> f64 {
    let mut x = (shape + 1.0) / rate;
    while gamma_ur(shape, rate * x) >= eps {
        x *= 1.5;
    }
    x
}

impl MeasureFamily {
    /// Exponential family with every rate multiplied by `factor`; a custom
    /// family that violates the first-moment condition unless `factor = 1`.
    pub fn scaled_exponential(factor: f64) -> Self {
        MeasureFamily::Custom(CustomFamily::new(
            format!("exponential_x{factor}"),
            1.0,
            move |n, j, t| ln_gamma_density(factor * n as f64, j, t),
            move |n, j, eps| gamma_tail_point(j as f64, factor * n as f64, eps),
        ))
    }

    /// Smallest `n` for which moments are finite under growth `omega_t`.
    pub fn validity_floor(&self, omega_t: f64) -> usize {
        match self {
            MeasureFamily::Exponential => omega_t.floor() as usize + 1,
            _ => 1,
        }
    }

    /// Density of `μ_n^{*j}` at `t`; `None` for the Dirac family.
    pub fn power_density(&self, n: usize, j: usize, t: f64) -> Option<f64> {
        match self {
            MeasureFamily::Dirac => None,
            MeasureFamily::Exponential => Some(ln_gamma_density(n as f64, j, t)),
            MeasureFamily::Custom(c) => Some((c.power_density)(n, j, t)),
        }
    }

    /// Total mass of `μ_n^{*j}`.
    pub fn power_mass(&self, j: usize) -> f64 {
        match self {
            MeasureFamily::Custom(c) => c.mass.powi(j as i32),
            _ => 1.0,
        }
    }

    /// Upper truncation point for `t^alpha e^{omega_t t} dμ_n^{*j}`.
    fn support_end(&self, n: usize, j: usize, alpha: f64, omega_t: f64) -> f64 {
        match self {
            MeasureFamily::Dirac => j as f64 / n as f64,
            MeasureFamily::Exponential => {
                gamma_tail_point(j as f64 + alpha.max(0.0), n as f64 - omega_t, TAIL_MASS * 1e-2)
            }
            MeasureFamily::Custom(c) => (c.support_end)(n, j, TAIL_MASS * 1e-2),
        }
    }
}

fn check_indices(n: usize, j: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if j == 0 || j > n {
        return Err(invalid(format!("j must lie in 1..={n}, got {j}")));
    }
    Ok(())
}

fn check_moment_args(alpha: f64, omega_t: f64) -> Result<()> {
    if !(alpha > -1.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (-1, 1], got {alpha}")));
    }
    if !(omega_t >= 0.0 && omega_t.is_finite()) {
        return Err(invalid(format!("omega_t must be nonnegative, got {omega_t}")));
    }
    Ok(())
}

/// `∫ t^alpha e^{omega_t t} dμ_n^{*j}(t)`.
pub fn convolved_moment(
    family: &MeasureFamily,
    n: usize,
    j: usize,
    alpha: f64,
    omega_t: f64,
) -> Result<f64> {
    check_indices(n, j)?;
    check_moment_args(alpha, omega_t)?;
    let (nf, jf) = (n as f64, j as f64);
    match family {
        MeasureFamily::Dirac => Ok((jf / nf).powf(alpha) * (omega_t * jf / nf).exp()),
        MeasureFamily::Exponential => {
            if nf <= omega_t {
                return Err(Error::DivergentMoment { n, omega_t });
            }
            let rate = nf - omega_t;
            Ok((nf / rate).powf(jf) * gamma_ratio(j, alpha)? * rate.powf(-alpha))
        }
        MeasureFamily::Custom(_) => moment_by_quadrature(family, n, j, alpha, omega_t),
    }
}

/// `Γ(j+alpha)/Γ(j)`, through `g_j` for `j >= 2` so that nearby
/// cancellations stay accurate.
fn gamma_ratio(j: usize, alpha: f64) -> Result<f64> {
    if j == 1 {
        return Ok(gamma(1.0 + alpha));
    }
    let jf = j as f64;
    Ok(jf.powf(alpha) * (1.0 - alpha * g_function(j, alpha)?))
}

/// The same moment by Gauss-Legendre quadrature of the density, bypassing
/// any closed form.
pub fn moment_by_quadrature(
    family: &MeasureFamily,
    n: usize,
    j: usize,
    alpha: f64,
    omega_t: f64,
) -> Result<f64> {
    check_indices(n, j)?;
    check_moment_args(alpha, omega_t)?;
    if matches!(family, MeasureFamily::Dirac) {
        return convolved_moment(family, n, j, alpha, omega_t);
    }
    if matches!(family, MeasureFamily::Exponential) && n as f64 <= omega_t {
        return Err(Error::DivergentMoment { n, omega_t });
    }
    let hi = family.support_end(n, j, alpha, omega_t);
    // Below `lo` the integrand behaves like t^{j-1+alpha}; cut where the
    // neglected mass is under 1e-17.
    let lo = hi * 10f64.powf(-(17.0 / (j as f64 + alpha)).min(280.0));
    let value = quadrature::integrate_adaptive(
        |t| {
            let d = family.power_density(n, j, t).unwrap_or(0.0);
            if d == 0.0 {
                0.0
            } else {
                d * t.powf(alpha) * (omega_t * t).exp()
            }
        },
        lo,
        hi,
        1e-13,
    );
    if !value.is_finite() {
        return Err(Error::DivergentMoment { n, omega_t });
    }
    Ok(value)
}

/// `∫ t dμ_n(t) - 1/n`; zero for a family satisfying the first-moment
/// condition.
pub fn check_m1(family: &MeasureFamily, n: usize) -> Result<f64> {
    Ok(convolved_moment(family, n, 1, 1.0, 0.0)? - 1.0 / n as f64)
}

/// `j ∫ [1 - (tn/j)^alpha] e^{omega_t t} dμ_n^{*j}(t)`.
pub fn m3_term(family: &MeasureFamily, n: usize, j: usize, alpha: f64, omega_t: f64) -> Result<f64> {
    check_indices(n, j)?;
    check_moment_args(alpha, omega_t)?;
    let jf = j as f64;
    match family {
        // The bracket vanishes on the atom t = j/n.
        MeasureFamily::Dirac => Ok(0.0),
        MeasureFamily::Exponential => {
            let nf = n as f64;
            if nf <= omega_t {
                return Err(Error::DivergentMoment { n, omega_t });
            }
            // j r^j [1 - r^alpha Γ(j+alpha)/(j^alpha Γ(j))] with r = n/(n - omega_t)
            let log_r = -(-omega_t / nf).ln_1p();
            let scaled = if j == 1 {
                gamma(1.0 + alpha) - 1.0
            } else {
                -alpha * g_function(j, alpha)?
            };
            let bracket = -(alpha * log_r).exp_m1() - (alpha * log_r).exp() * scaled;
            Ok(jf * (jf * log_r).exp() * bracket)
        }
        MeasureFamily::Custom(_) => {
            let mass = convolved_moment(family, n, j, 0.0, omega_t)?;
            let moment = convolved_moment(family, n, j, alpha, omega_t)?;
            Ok(jf * (mass - (n as f64 / jf).powf(alpha) * moment))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub n: usize,
    pub j: usize,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct M3Report {
    pub rows: Vec<MomentRow>,
    /// Largest `|m3_term|`.
    pub max: f64,
    /// `(n, j, alpha)` attaining the maximum.
    pub argmax: (usize, usize, f64),
}

impl M3Report {
    /// Largest `|value|` over rows with `n` in the given range.
    pub fn max_over(&self, ns: std::ops::RangeInclusive<usize>) -> f64 {
        self.rows
            .iter()
            .filter(|r| ns.contains(&r.n))
            .map(|r| r.value.abs())
            .fold(0.0, f64::max)
    }
}

/// Sweeps the third moment condition over `n ∈ n_min..=n_max`, `j ∈ 1..=n`.
pub fn check_m3(
    family: &MeasureFamily,
    n_min: usize,
    n_max: usize,
    alphas: &[f64],
    omega_t: f64,
) -> Result<M3Report> {
    let n_min = n_min.max(family.validity_floor(omega_t));
    if n_min > n_max {
        return Err(invalid(format!("empty n range {n_min}..={n_max}")));
    }
    let mut rows = Vec::new();
    let mut max = 0.0f64;
    let mut argmax = (n_min, 1, alphas.first().copied().unwrap_or(0.0));
    for n in n_min..=n_max {
        for j in 1..=n {
            for &alpha in alphas {
                let value = m3_term(family, n, j, alpha, omega_t)?;
                if value.abs() > max {
                    max = value.abs();
                    argmax = (n, j, alpha);
                }
                rows.push(MomentRow { n, j, alpha, value });
            }
        }
    }
    Ok(M3Report { rows, max, argmax })
}

/// Writes `(family, n, j, alpha, value)` rows.
pub fn write_rows<W: Write>(family: &MeasureFamily, rows: &[MomentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "n", "j", "alpha", "value"])
        .map_err(csv_error)?;
    let name = family.to_string();
    for r in rows {
        w.write_record([
            name.clone(),
            r.n.to_string(),
            r.j.to_string(),
            r.alpha.to_string(),
            format!("{:e}", r.value),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}

/// `E(t_j)` realised as a matrix.
#[derive(Debug, Clone)]
pub struct ApproximantOperator {
    pub family: MeasureFamily,
    pub horizon: f64,
    pub n: usize,
    pub j: usize,
    pub matrix: DMatrix<f64>,
}

impl ApproximantOperator {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// `E(t_j)`: resolvent powers for the exponential family, `S(t_j)` for the
/// Dirac family and quadrature for custom families.
pub fn e_operator(
    family: &MeasureFamily,
    a: &LinearOperator,
    horizon: f64,
    n: usize,
    j: usize,
) -> Result<ApproximantOperator> {
    check_horizon(horizon)?;
    if n == 0 || j > n {
        return Err(invalid(format!("need 0 <= j <= n with n >= 1, got n = {n}, j = {j}")));
    }
    let m = a.dim();
    let tau = horizon / n as f64;
    let matrix = if j == 0 {
        DMatrix::identity(m, m)
    } else {
        match family {
            MeasureFamily::Exponential => {
                let resolvent = a.resolvent(tau)?;
                let mut out = DMatrix::identity(m, m);
                for mut col in out.column_iter_mut() {
                    for _ in 0..j {
                        resolvent.solve_in_place(col.as_mut_slice())?;
                    }
                }
                out
            }
            MeasureFamily::Dirac => a.semigroup_matrix(j as f64 * tau)?,
            MeasureFamily::Custom(_) => return e_operator_quadrature(family, a, horizon, n, j),
        }
    };
    Ok(ApproximantOperator {
        family: family.clone(),
        horizon,
        n,
        j,
        matrix,
    })
}

/// `E(t_j)` by Gauss-Legendre quadrature of `∫ S(tT) dμ_n^{*j}(t)` at 200
/// nodes per decade of support; the Dirac family is evaluated on its atom.
pub fn e_operator_quadrature(
    family: &MeasureFamily,
    a: &LinearOperator,
    horizon: f64,
    n: usize,
    j: usize,
) -> Result<ApproximantOperator> {
    check_horizon(horizon)?;
    if n == 0 || j > n {
        return Err(invalid(format!("need 0 <= j <= n with n >= 1, got n = {n}, j = {j}")));
    }
    let m = a.dim();
    if j == 0 || matches!(family, MeasureFamily::Dirac) {
        return e_operator(family, a, horizon, n, j);
    }
    let hi = family.support_end(n, j, 0.0, 0.0);
    let rule = quadrature::log_panel_rule(hi * 1e-30, hi, quadrature::PANELS_PER_DECADE);
    let weighted: Vec<(f64, f64)> = rule
        .into_iter()
        .map(|(t, w)| (t, w * family.power_density(n, j, t).unwrap_or(0.0)))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let mass: f64 = weighted.iter().map(|&(_, w)| w).sum();
    let deficit = (family.power_mass(j) - mass).abs();
    if deficit > MASS_DEFICIT_TOL {
        return Err(Error::Truncation { deficit });
    }
    let matrix = match a.spectral() {
        Some(spec) => spec.function_matrix(|l| {
            weighted
                .iter()
                .map(|&(t, w)| w * (l * t * horizon).exp())
                .sum()
        }),
        None => {
            let mut acc = DMatrix::zeros(m, m);
            for &(t, w) in &weighted {
                acc += a.semigroup_matrix_pade(t * horizon)? * w;
            }
            acc
        }
    };
    Ok(ApproximantOperator {
        family: family.clone(),
        horizon,
        n,
        j,
        matrix,
    })
}

/// `q_n = n sup_j |t_j^{1-delta} (E(t_j) - S(t_j)) (-A)^{-delta}|_2` for each
/// `n` in `n_list`.
pub fn uniform_bound_check(
    family: &MeasureFamily,
    a: &LinearOperator,
    horizon: f64,
    delta: f64,
    n_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    check_horizon(horizon)?;
    if !(delta > -1.0 && delta <= 1.0) {
        return Err(invalid(format!("delta must lie in (-1, 1], got {delta}")));
    }
    let m = a.dim();
    let smoothing = if delta == 0.0 {
        DMatrix::identity(m, m)
    } else {
        a.fractional_power_matrix(-delta)?
    };
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let tau = horizon / n as f64;
        let step = e_operator(family, a, horizon, n, 1)?.matrix;
        let mut power = DMatrix::identity(m, m);
        let mut sup = 0.0f64;
        for j in 1..=n {
            let t = j as f64 * tau;
            let semigroup = a.semigroup_matrix(t)?;
            power = match family {
                MeasureFamily::Dirac => semigroup.clone(),
                _ => &step * &power,
            };
            let diff = &power - semigroup;
            let weighted = diff * &smoothing * t.powf(1.0 - delta);
            sup = sup.max(operator_norm(&weighted));
        }
        out.push((n, n as f64 * sup));
    }
    Ok(out)
}

/// `g_j(x) = (1 - Γ(j+x) / (j^x Γ(j))) / x`, and `ln j - Ψ(j)` at `x = 0`.
pub fn g_function(j: usize, x: f64) -> Result<f64> {
    if j < 2 {
        return Err(invalid(format!("g_j needs j >= 2, got {j}")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(invalid(format!("x must lie in [-1, 1], got {x}")));
    }
    let jf = j as f64;
    if x == 0.0 {
        return Ok(jf.ln() - digamma(jf));
    }
    // Γ(j+x)/Γ(j) = Γ(2+x) ∏_{k=2}^{j-1} (1 + x/k), accumulated in logs.
    let mut log_ratio = ln_gamma(2.0 + x);
    for k in 2..j {
        log_ratio += (x / k as f64).ln_1p();
    }
    let y = log_ratio - x * jf.ln();
    Ok(-y.exp_m1() / x)
}

#[derive(Debug, Clone)]
pub struct GBoundReport {
    pub holds: bool,
    /// Largest violation of `0 <= g_j <= 1/(j-1)` (zero when none).
    pub worst_excess: f64,
    /// Largest increase between adjacent grid points (zero when monotone).
    pub worst_increase: f64,
    pub failures: Vec<(usize, f64)>,
}

/// Checks `g_j(x) ∈ [0, 1/(j-1)]` within `1e-12` and monotonicity on
/// `x ∈ {-1, -0.99, ..., 1}` for `j = 2..=j_max`.
pub fn check_g_bound(j_max: usize) -> Result<GBoundReport> {
    let mut worst_excess = 0.0f64;
    let mut worst_increase = 0.0f64;
    let mut failures = Vec::new();
    for j in 2..=j_max {
        let upper = 1.0 / (j as f64 - 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let x = (k as f64 - 100.0) / 100.0;
            let g = g_function(j, x)?;
            let excess = (-g).max(g - upper).max(0.0);
            worst_excess = worst_excess.max(excess);
            let increase = (g - prev).max(0.0);
            worst_increase = worst_increase.max(increase);
            if excess > 1e-12 || increase > 0.0 {
                failures.push((j, x));
            }
            prev = g;
        }
    }
    Ok(GBoundReport {
        holds: failures.is_empty(),
        worst_excess,
        worst_increase,
        failures,
    })
}
