//! Self-checks of the numerical building blocks, one line per check.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::calculus::{
    check_g_bound, check_m1, check_m3, convolved_moment, e_operator, e_operator_quadrature,
    moment_by_quadrature, uniform_bound_check, MeasureFamily,
};
use crate::error::Result;
use crate::grid::{fit_rate, TimeGrid};
use crate::linop::{operator_norm, LinearOperator};
use crate::noise::{generate, Increments, SeedDescriptor};
use crate::schemes::{modified_splitting_run, reference_run, Problem};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, measured: f64, tolerance: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            measured,
            tolerance: tolerance.into(),
        }
    }

    fn below(name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self::new(name, measured <= tol, measured, format!("<= {tol:e}"))
    }

    fn failed(name: impl Into<String>, err: impl fmt::Display) -> Self {
        Self::new(name, false, f64::NAN, format!("error: {err}"))
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} measured={:.6e} ({})", self.name, self.measured, self.tolerance)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn outcome(name: &str, r: Result<CheckOutcome>) -> CheckOutcome {
    r.unwrap_or_else(|e| CheckOutcome::failed(name, e))
}

/// `max_n |∫ t dμ_n - 1/n|` over `n = 1..=n_max`, relative to `1/n`.
pub fn check_m1_family(family: &MeasureFamily, n_max: usize) -> CheckOutcome {
    let name = format!("m1.{family}");
    outcome(&name, (|| {
        let mut worst = 0.0f64;
        for n in 1..=n_max {
            worst = worst.max((check_m1(family, n)? * n as f64).abs());
        }
        Ok(CheckOutcome::below(&name, worst, 1e-10))
    })())
}

fn m3_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(outcome("m3.dirac_zero", (|| {
        let r = check_m3(&MeasureFamily::Dirac, 1, 32, &[-0.5, 0.5, 1.0], 0.5)?;
        Ok(CheckOutcome::new("m3.dirac_zero", r.max == 0.0, r.max, "== 0"))
    })()));
    out.push(outcome("m3.exponential_alpha1", (|| {
        let r = check_m3(&MeasureFamily::Exponential, 1, 32, &[1.0], 0.0)?;
        Ok(CheckOutcome::below("m3.exponential_alpha1", r.max, 1e-12))
    })()));
    out.push(outcome("m3.exponential_bounded", (|| {
        let r = check_m3(&MeasureFamily::Exponential, 1, 64, &[-0.5, 0.5], 0.25)?;
        let early = r.max_over(1..=32);
        let late = r.max_over(33..=64);
        Ok(CheckOutcome::new(
            "m3.exponential_bounded",
            late <= 1.1 * early,
            late / early,
            "sup over n in 33..64 <= 1.1 sup over n <= 32",
        ))
    })()));
    out
}

fn moments_check() -> CheckOutcome {
    outcome("moments.closed_form", (|| {
        let mut worst = 0.0f64;
        for n in [2usize, 4, 8, 16] {
            for j in 1..=n {
                for alpha in [-0.5, 0.0, 0.5, 1.0] {
                    for omega_t in [0.0, 0.25] {
                        let fam = MeasureFamily::Exponential;
                        let closed = convolved_moment(&fam, n, j, alpha, omega_t)?;
                        let quad = moment_by_quadrature(&fam, n, j, alpha, omega_t)?;
                        worst = worst.max(((closed - quad) / closed).abs());
                    }
                }
            }
        }
        Ok(CheckOutcome::below("moments.closed_form", worst, 1e-8))
    })())
}

fn g_check() -> CheckOutcome {
    outcome("g_bound", (|| {
        let r = check_g_bound(50)?;
        Ok(CheckOutcome::new(
            "g_bound",
            r.holds,
            r.worst_excess.max(r.worst_increase),
            "range within 1e-12, nonincreasing",
        ))
    })())
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    operator_norm(&(a - b)) / operator_norm(b)
}

fn e_operator_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(outcome("e_operator.quadrature", (|| {
        let a = LinearOperator::symmetric_test(8)?;
        let mut worst = 0.0f64;
        for j in [1, 5, 16] {
            let fam = MeasureFamily::Exponential;
            let quad = e_operator_quadrature(&fam, &a, 1.0, 16, j)?;
            let direct = e_operator(&fam, &a, 1.0, 16, j)?;
            worst = worst.max(relative_gap(&quad.matrix, &direct.matrix));
        }
        Ok(CheckOutcome::below("e_operator.quadrature", worst, 1e-6))
    })()));
    out.push(outcome("e_operator.dirac", (|| {
        let a = LinearOperator::symmetric_test(8)?;
        let mut worst = 0.0f64;
        for j in [1, 5, 16] {
            let e = e_operator(&MeasureFamily::Dirac, &a, 1.0, 16, j)?;
            let s = a.semigroup_matrix(j as f64 / 16.0)?;
            worst = worst.max(relative_gap(&e.matrix, &s));
        }
        Ok(CheckOutcome::below("e_operator.dirac", worst, 1e-10))
    })()));
    out
}

fn uniform_bound_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(outcome("uniform_bound.dirac_zero", (|| {
        let a = LinearOperator::symmetric_test(16)?;
        let q = uniform_bound_check(&MeasureFamily::Dirac, &a, 1.0, 0.5, &[8, 16])?;
        let worst = q.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        Ok(CheckOutcome::new("uniform_bound.dirac_zero", worst == 0.0, worst, "== 0"))
    })()));
    for delta in [0.0, 0.5, 1.0] {
        let name = format!("uniform_bound.exponential.delta={delta}");
        out.push(outcome(&name, (|| {
            let a = LinearOperator::symmetric_test(16)?;
            let q = uniform_bound_check(&MeasureFamily::Exponential, &a, 1.0, delta, &[8, 16, 32, 64])?;
            let early = q[0].1.max(q[1].1);
            let late = q[2].1.max(q[3].1);
            Ok(CheckOutcome::new(&name, late <= 1.5 * early, late / early, "<= 1.5"))
        })()));
    }
    out
}

/// `U_j = S(t_j) x0 + Σ_k S(t_{j-k+1}) [τ f + g ΔW_k]`, summed directly.
pub fn variation_of_constants_sum(
    a: &LinearOperator,
    x0: &DVector<f64>,
    f: f64,
    g: f64,
    dw: &Increments,
    horizon: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = dw.rows();
    let tau = horizon / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let mut acc = a.semigroup_apply(j as f64 * tau, x0)?;
        for k in 1..=j {
            let forcing = DVector::from_iterator(x0.len(), dw.row(k - 1).iter().map(|w| tau * f + g * w));
            acc += a.semigroup_apply((j - k + 1) as f64 * tau, &forcing)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Linear additive problem with constant drift `f` and noise `g dW`.
pub fn constant_forcing_problem(a: LinearOperator, f: f64, g: f64, x0: DVector<f64>, horizon: f64) -> Result<Problem> {
    let m = a.dim();
    Problem::new(
        a,
        move |_, _, out| out.fill(f),
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

/// Largest sup-norm gap between the splitting recursion (one substep) and
/// the direct sum, over `samples` noise paths.
pub fn split_conv_gap(samples: usize, seed: u64) -> Result<f64> {
    let m = 16;
    let n = 32;
    let a = LinearOperator::dirichlet_laplacian(m)?;
    let x0 = DVector::from_fn(m, |i, _| (std::f64::consts::PI * (i + 1) as f64 / (m + 1) as f64).sin());
    let (f, g) = (0.3, 0.7);
    let p = constant_forcing_problem(a.clone(), f, g, x0.clone(), 1.0)?;
    let grid = TimeGrid::new(1.0, n)?;
    let mut worst = 0.0f64;
    for s in 0..samples {
        let dw: Increments = generate(n, m, 1.0, SeedDescriptor::new(seed, s as u64))?.into();
        let traj = modified_splitting_run(&p, grid, &dw, 1)?;
        let direct = variation_of_constants_sum(&a, &x0, f, g, &dw, 1.0)?;
        for (x, y) in traj.states.iter().zip(&direct) {
            worst = worst.max((x - y).amax());
        }
    }
    Ok(worst)
}

/// Sample second moment of the scalar OU reference run at `T = 1`
/// (`A = -1`, `σ = 1`, `x0 = 1`), its standard error, and the exact value.
pub fn ou_second_moment(samples: usize, n_fine: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let a = LinearOperator::dense(DMatrix::from_element(1, 1, -1.0))?;
    let p = Problem::linear_additive(a, 0.0, 1.0, DVector::from_element(1, 1.0), 1.0)?;
    let grid = TimeGrid::new(1.0, n_fine)?;
    let squares: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let dw: Increments = generate(n_fine, 1, 1.0, SeedDescriptor::new(seed, s as u64))?.into();
            let u = reference_run(&p, grid, &dw)?.final_state()[0];
            Ok(u * u)
        })
        .collect::<Result<_>>()?;
    let k = samples as f64;
    let mean = squares.iter().sum::<f64>() / k;
    let var = squares.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let exact = (-2.0f64).exp() + (1.0 - (-2.0f64).exp()) / 2.0;
    Ok((mean, (var / k).sqrt(), exact))
}

/// Observed order of `(I - tA/n)^{-n} x -> S(t) x` on the Dirichlet Laplacian.
pub fn trotter_kato_order() -> Result<f64> {
    let op = LinearOperator::dirichlet_laplacian(16)?;
    let x = DVector::from_fn(16, |i, _| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5);
    let t = 0.05;
    let exact = op.semigroup_apply(t, &x)?;
    let mut errs = Vec::new();
    for n in [4usize, 8, 16, 32, 64, 128, 256] {
        let res = op.resolvent(t / n as f64)?;
        let mut y = x.clone();
        for _ in 0..n {
            res.solve_in_place(y.as_mut_slice())?;
        }
        errs.push((n, (y - &exact).norm()));
    }
    Ok(fit_rate(&errs)?.order())
}

/// Runs every check and collects one outcome per line.
pub fn run_verification_suite() -> VerificationReport {
    let mut checks = vec![
        check_m1_family(&MeasureFamily::Exponential, 64),
        check_m1_family(&MeasureFamily::Dirac, 64),
    ];
    checks.extend(m3_checks());
    checks.push(moments_check());
    checks.push(g_check());
    checks.extend(e_operator_checks());
    checks.extend(uniform_bound_checks());
    checks.push(outcome("split_conv", split_conv_gap(20, 11).map(|g| CheckOutcome::below("split_conv", g, 1e-9))));
    checks.push(outcome(
        "ou_oracle",
        ou_second_moment(500, 1 << 14, 2024).map(|(mean, se, exact)| {
            let z = (mean - exact).abs() / se;
            CheckOutcome::new("ou_oracle", z <= 3.0, z, "|mean - exact| <= 3 standard errors")
        }),
    ));
    checks.push(outcome(
        "trotter_kato",
        trotter_kato_order().map(|o| CheckOutcome::new("trotter_kato", o >= 0.9, o, "order >= 0.9")),
    ));
    VerificationReport { checks }
}
