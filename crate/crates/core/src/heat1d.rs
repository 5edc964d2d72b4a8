//! The stochastic heat equation on `(0, 1)`
//!
//! ```text
//! du = [a2(x) u'' + a1(x) u' + f(t, x, u)] dt + g(t, x, u) dw
//! b1 u' = -b0 u   at x = 0 and x = 1
//! ```
//!
//! discretised by central differences on the interior nodes `x_i = i h`,
//! `h = 1/(m+1)`. Boundary values are eliminated with the one-sided
//! second-order derivative, which keeps the operator tridiagonal.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprparse::{Expr, Var};
use crate::linop::{LinearOperator, Tridiagonal};
use crate::schemes::{Problem, Regularity};

/// Spectral abscissa tolerance for the dissipativity check.
const ABSCISSA_TOL: f64 = 1e-8;

/// Coefficients `(b0, b1)` of `b1 u' = -b0 u` at one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub b0: f64,
    pub b1: f64,
}

impl BoundaryPair {
    pub const DIRICHLET: Self = Self { b0: 1.0, b1: 0.0 };
    pub const NEUMANN: Self = Self { b0: 0.0, b1: 1.0 };

    pub fn is_dirichlet(&self) -> bool {
        self.b1 == 0.0 && self.b0 != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub left: BoundaryPair,
    pub right: BoundaryPair,
}

impl Default for Boundary {
    fn default() -> Self {
        Self {
            left: BoundaryPair::DIRICHLET,
            right: BoundaryPair::DIRICHLET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Space-time white noise: node `i` receives `g dw_i / sqrt(h)`.
    #[default]
    White,
    /// `sum_k weights[k] sqrt(2) sin((k+1) pi x) dw_k` over the first `K`
    /// lattice columns.
    FiniteRank { weights: Vec<f64> },
}

fn default_a2() -> Expr {
    Expr::Num(1.0)
}

fn default_zero() -> Expr {
    Expr::Num(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatSpec {
    #[serde(default = "default_a2")]
    pub a2: Expr,
    #[serde(default = "default_zero")]
    pub a1: Expr,
    #[serde(default = "default_zero")]
    pub f: Expr,
    #[serde(default = "default_zero")]
    pub g: Expr,
    #[serde(default = "default_zero")]
    pub u0: Expr,
    #[serde(default)]
    pub boundary: Boundary,
    pub m: usize,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub regularity: Regularity,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::SpecInvalid(msg.into())
}

fn check_vars(name: &str, e: &Expr, allowed: &[Var]) -> Result<()> {
    if let Some(v) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
        return Err(spec_err(format!("{name} may not depend on `{}`", v.name())));
    }
    Ok(())
}

impl HeatSpec {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.m as f64 + 1.0)
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.m).map(|i| i as f64 * h).collect()
    }

    pub fn noise_dim(&self) -> usize {
        match &self.noise {
            NoiseKind::White => self.m,
            NoiseKind::FiniteRank { weights } => weights.len(),
        }
    }

    /// The finite-difference generator.
    pub fn operator(&self) -> Result<LinearOperator> {
        let m = self.m;
        let nonlocal = !(self.boundary.left.is_dirichlet() && self.boundary.right.is_dirichlet());
        if m == 0 || (nonlocal && m < 3) {
            return Err(spec_err(format!("too few grid points: m = {m}")));
        }
        check_vars("a2", &self.a2, &[Var::X])?;
        check_vars("a1", &self.a1, &[Var::X])?;
        let h = self.spacing();
        let mut lower = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m - 1];
        let mut west = 0.0;
        let mut east = 0.0;
        for (k, x) in self.nodes().into_iter().enumerate() {
            let a2 = self.a2.eval(x, 0.0, 0.0);
            let a1 = self.a1.eval(x, 0.0, 0.0);
            if !(a2 > 0.0 && a2.is_finite()) {
                return Err(spec_err(format!("a2 must be positive, a2({x}) = {a2}")));
            }
            if !a1.is_finite() {
                return Err(spec_err(format!("a1({x}) = {a1} is not finite")));
            }
            let to_left = a2 / (h * h) - a1 / (2.0 * h);
            let to_right = a2 / (h * h) + a1 / (2.0 * h);
            diag[k] = -2.0 * a2 / (h * h);
            if k > 0 {
                lower[k - 1] = to_left;
            } else {
                west = to_left;
            }
            if k + 1 < m {
                upper[k] = to_right;
            } else {
                east = to_right;
            }
        }
        // u_0 = beta (4 u_1 - u_2) and u_{m+1} = gamma (4 u_m - u_{m-1}).
        let (bl, br) = (self.boundary.left, self.boundary.right);
        let denom_left = 3.0 * bl.b1 - 2.0 * h * bl.b0;
        let denom_right = 3.0 * br.b1 + 2.0 * h * br.b0;
        if (bl.b0 == 0.0 && bl.b1 == 0.0) || denom_left == 0.0 {
            return Err(spec_err(format!("degenerate boundary pair at x = 0: {bl:?}")));
        }
        if (br.b0 == 0.0 && br.b1 == 0.0) || denom_right == 0.0 {
            return Err(spec_err(format!("degenerate boundary pair at x = 1: {br:?}")));
        }
        let beta = bl.b1 / denom_left;
        let gamma = br.b1 / denom_right;
        if beta != 0.0 {
            diag[0] += 4.0 * beta * west;
            upper[0] -= beta * west;
        }
        if gamma != 0.0 {
            diag[m - 1] += 4.0 * gamma * east;
            lower[m - 2] -= gamma * east;
        }
        let op = LinearOperator::tridiagonal(Tridiagonal::new(lower, diag, upper))?;
        let abscissa = op.spectral_abscissa();
        if !(abscissa <= ABSCISSA_TOL) {
            return Err(spec_err(format!(
                "assembled operator is not dissipative: spectral abscissa {abscissa:e}"
            )));
        }
        Ok(op)
    }

    /// Builds the semi-discrete problem on `[0, horizon]`.
    pub fn assemble(&self, horizon: f64) -> Result<Problem> {
        let op = self.operator()?;
        let all = [Var::X, Var::T, Var::U];
        check_vars("f", &self.f, &all)?;
        check_vars("g", &self.g, &all)?;
        check_vars("u0", &self.u0, &[Var::X])?;
        let nodes = self.nodes();
        let h = self.spacing();

        let x0 = DVector::from_iterator(self.m, nodes.iter().map(|&x| self.u0.eval(x, 0.0, 0.0)));
        if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
            return Err(spec_err(format!("u0({}) is not finite", nodes[i])));
        }
        // Probe f and g on the nodes to reject coefficients undefined on the grid.
        for &x in &nodes {
            for u in [-1.0, 0.0, 1.0] {
                for (name, e) in [("f", &self.f), ("g", &self.g)] {
                    let v = e.eval(x, 0.0, u);
                    if !v.is_finite() {
                        return Err(spec_err(format!("{name}(0, {x}, {u}) = {v} is not finite")));
                    }
                }
            }
        }

        let f = self.f.compile();
        let xs = nodes.clone();
        let drift = move |t: f64, u: &[f64], out: &mut [f64]| {
            for ((o, &x), &ui) in out.iter_mut().zip(&xs).zip(u) {
                *o = f.eval(x, t, ui);
            }
        };

        let g = self.g.compile();
        let xs = nodes.clone();
        let problem = match &self.noise {
            NoiseKind::White => {
                let scale = 1.0 / h.sqrt();
                let diffusion = move |t: f64, u: &[f64], dw: &[f64], out: &mut [f64]| {
                    for (((o, &x), &ui), &w) in out.iter_mut().zip(&xs).zip(u).zip(dw) {
                        *o = g.eval(x, t, ui) * w * scale;
                    }
                };
                Problem::new(op, drift, diffusion, self.m, x0, horizon)?
            }
            NoiseKind::FiniteRank { weights } => {
                if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(spec_err("finite-rank noise needs finite weights"));
                }
                let k_modes = weights.len();
                // basis[i * K + k] = weights[k] sqrt(2) sin((k+1) pi x_i)
                let basis: Vec<f64> = xs
                    .iter()
                    .flat_map(|&x| {
                        weights.iter().enumerate().map(move |(k, w)| {
                            w * std::f64::consts::SQRT_2 * ((k as f64 + 1.0) * std::f64::consts::PI * x).sin()
                        })
                    })
                    .collect();
                let diffusion = move |t: f64, u: &[f64], dw: &[f64], out: &mut [f64]| {
                    for (i, (o, (&x, &ui))) in out.iter_mut().zip(xs.iter().zip(u)).enumerate() {
                        let row = &basis[i * k_modes..(i + 1) * k_modes];
                        let field: f64 = row.iter().zip(dw).map(|(b, w)| b * w).sum();
                        *o = g.eval(x, t, ui) * field;
                    }
                };
                Problem::new(op, drift, diffusion, k_modes, x0, horizon)?
            }
        };
        Ok(problem.with_regularity(self.regularity))
    }
}

fn expr(s: &str) -> Expr {
    s.parse().expect("preset expressions are well formed")
}

/// Names of the built-in presets.
pub const PRESET_NAMES: [&str; 3] = ["white_mult", "trace_additive", "local_lipschitz"];

/// Built-in spec with the given grid size.
pub fn preset(name: &str, m: usize) -> Result<HeatSpec> {
    let base = HeatSpec {
        a2: Expr::Num(1.0),
        a1: Expr::Num(0.0),
        f: expr("sin(u)"),
        g: expr("(1 + u)/2"),
        u0: expr("sin(pi*x)"),
        boundary: Boundary::default(),
        m,
        noise: NoiseKind::White,
        regularity: Regularity {
            theta_f: 0.0,
            theta_g: -0.25,
            eta: 0.25,
        },
    };
    match name {
        "white_mult" => Ok(base),
        "trace_additive" => Ok(HeatSpec {
            g: Expr::Num(1.0),
            noise: NoiseKind::FiniteRank {
                weights: (1..=8).map(|k| (k as f64).powi(-2)).collect(),
            },
            regularity: Regularity {
                theta_f: 0.0,
                theta_g: 0.0,
                eta: 0.5,
            },
            ..base
        }),
        "local_lipschitz" => Ok(HeatSpec {
            f: expr("u*sin(u)"),
            ..base
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// All presets at grid size `m`.
pub fn presets(m: usize) -> Vec<(&'static str, HeatSpec)> {
    PRESET_NAMES
        .iter()
        .map(|&name| (name, preset(name, m).expect("built-in preset")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{generate, SeedDescriptor};

    fn laplace(m: usize, boundary: Boundary) -> HeatSpec {
        HeatSpec {
            boundary,
            ..preset("white_mult", m).unwrap()
        }
    }

    #[test]
    fn dirichlet_stencil_is_exact_on_quadratics() {
        let spec = laplace(3, Boundary::default());
        let a = spec.operator().unwrap();
        let expected = [[-32.0, 16.0, 0.0], [16.0, -32.0, 16.0], [0.0, 16.0, -32.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(a.matrix()[(i, j)], v);
            }
        }
        let u = DVector::from_iterator(3, spec.nodes().into_iter().map(|x| x * (1.0 - x)));
        let au = a.apply(&u);
        assert!(au.iter().all(|v| (v + 2.0).abs() < 1e-12), "{au}");
    }

    #[test]
    fn neumann_and_robin_are_exact_on_quadratics() {
        // u = 3 - x^2: u'(0) = 0 and u'(1) = -u(1), so (b0, b1) = (1, 1) on the right.
        let spec = laplace(
            9,
            Boundary {
                left: BoundaryPair::NEUMANN,
                right: BoundaryPair { b0: 1.0, b1: 1.0 },
            },
        );
        let a = spec.operator().unwrap();
        let u = DVector::from_iterator(9, spec.nodes().into_iter().map(|x| 3.0 - x * x));
        let au = a.apply(&u);
        assert!(au.iter().all(|v| (v + 2.0).abs() < 1e-10), "{au}");

        let neumann = laplace(
            9,
            Boundary {
                left: BoundaryPair::NEUMANN,
                right: BoundaryPair::NEUMANN,
            },
        );
        let a = neumann.operator().unwrap();
        let ones = DVector::from_element(9, 1.0);
        assert!(a.apply(&ones).amax() < 1e-10);
    }

    #[test]
    fn robin_right_end_is_dissipative() {
        let spec = laplace(
            16,
            Boundary {
                left: BoundaryPair::DIRICHLET,
                right: BoundaryPair { b0: 2.0, b1: 1.0 },
            },
        );
        let a = spec.operator().unwrap();
        assert!(a.spectral_abscissa() < 0.0);
        // anti-dissipative sign at the left end is rejected
        let bad = laplace(
            16,
            Boundary {
                left: BoundaryPair { b0: 5.0, b1: 1.0 },
                right: BoundaryPair::DIRICHLET,
            },
        );
        assert!(matches!(bad.operator(), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = laplace(8, Boundary::default());
        s.a2 = expr("x - 0.5");
        assert!(matches!(s.operator(), Err(Error::SpecInvalid(_))));
        let mut s = laplace(8, Boundary::default());
        s.boundary.left = BoundaryPair { b0: 0.0, b1: 0.0 };
        assert!(matches!(s.operator(), Err(Error::SpecInvalid(_))));
        let mut s = laplace(8, Boundary::default());
        s.a2 = expr("1 + u");
        assert!(matches!(s.operator(), Err(Error::SpecInvalid(_))));
        let mut s = laplace(8, Boundary::default());
        s.f = expr("1/(x - x)");
        assert!(matches!(s.assemble(1.0), Err(Error::SpecInvalid(_))));
        let mut s = laplace(8, Boundary::default());
        s.u0 = expr("sqrt(-x)");
        assert!(matches!(s.assemble(1.0), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn advection_keeps_dissipativity() {
        for a1 in [-4.0, -1.0, 2.5, 4.0] {
            for boundary in [
                Boundary::default(),
                Boundary {
                    left: BoundaryPair::NEUMANN,
                    right: BoundaryPair { b0: 1.0, b1: 1.0 },
                },
            ] {
                let mut s = laplace(24, boundary);
                s.a1 = Expr::Num(a1);
                s.a2 = expr("1 + x/2");
                let a = s.operator().unwrap();
                assert!(a.spectral_abscissa() <= 1e-8, "a1 = {a1}");
            }
        }
    }

    #[test]
    fn dirichlet_eigenvalues() {
        let m = 20;
        let a = laplace(m, Boundary::default()).operator().unwrap();
        let h = 1.0 / (m as f64 + 1.0);
        let mut got: Vec<f64> = a.spectral().unwrap().eigenvalues.iter().copied().collect();
        got.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (k, l) in got.iter().enumerate() {
            let kf = (k + 1) as f64;
            let exact = -(2.0 / (h * h)) * (1.0 - (kf * std::f64::consts::PI * h).cos());
            assert!((l - exact).abs() <= 1e-8 * exact.abs());
        }
    }

    #[test]
    fn second_order_consistency() {
        let err = |m: usize| {
            let spec = laplace(m, Boundary::default());
            let a = spec.operator().unwrap();
            let pi2 = std::f64::consts::PI.powi(2);
            let u = DVector::from_iterator(m, spec.nodes().into_iter().map(|x| (std::f64::consts::PI * x).sin()));
            (a.apply(&u) + &u * pi2).amax()
        };
        for m in [15usize, 31, 63] {
            let ratio = err(m) / err(2 * m + 1);
            assert!((3.6..=4.4).contains(&ratio), "m = {m}: {ratio}");
        }
    }

    #[test]
    fn deterministic_heat_flow() {
        let mut spec = laplace(12, Boundary::default());
        spec.f = Expr::Num(0.0);
        spec.g = Expr::Num(0.0);
        let p = spec.assemble(0.3).unwrap();
        let grid = crate::grid::TimeGrid::new(0.3, 256).unwrap();
        let dw = crate::noise::Increments::zeros(256, 12);
        let r = crate::schemes::reference_run(&p, grid, &dw).unwrap();
        let s = p.operator.semigroup_apply(0.3, &p.x0).unwrap();
        assert!((r.final_state() - s).amax() < 1e-9);
    }

    #[test]
    fn white_noise_variance_per_node() {
        let m = 16;
        let spec = preset("white_mult", m).unwrap();
        let p = spec.assemble(1.0).unwrap();
        let n = 4096;
        let lat = generate(n, m, 1.0, SeedDescriptor::new(5, 0)).unwrap();
        let u = vec![1.0; m];
        let dt = 1.0 / n as f64;
        let h = spec.spacing();
        // g(1) = 1, so each contribution has variance dt/h.
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for j in 0..n {
            let out = p.eval_diffusion(0.0, &u, lat.increments().row(j));
            sum_sq += out.iter().map(|v| v * v).sum::<f64>();
            count += m;
        }
        let var = sum_sq / count as f64;
        let expected = dt / h;
        let se = expected * (2.0 / count as f64).sqrt();
        assert!((var - expected).abs() < 5.0 * se, "{var} vs {expected}");
    }

    #[test]
    fn finite_rank_noise_expands_modes() {
        let spec = preset("trace_additive", 10).unwrap();
        let p = spec.assemble(1.0).unwrap();
        assert_eq!(p.noise_dim, 8);
        let mut dw = vec![0.0; 8];
        dw[2] = 1.0;
        let out = p.eval_diffusion(0.0, &[0.0; 10], &dw);
        for (i, x) in spec.nodes().iter().enumerate() {
            let expected = std::f64::consts::SQRT_2 * (3.0 * std::f64::consts::PI * x).sin() / 9.0;
            assert!((out[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn preset_catalog() {
        let names: Vec<_> = presets(8).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["white_mult", "trace_additive", "local_lipschitz"]);
        let w = preset("white_mult", 8).unwrap();
        assert_eq!(w.g.eval(0.3, 0.0, 1.0), 1.0);
        let NoiseKind::FiniteRank { weights } = preset("trace_additive", 8).unwrap().noise else {
            panic!("trace_additive uses finite-rank noise");
        };
        let trace: f64 = weights.iter().map(|w| w * w).sum();
        assert!(trace < std::f64::consts::PI.powi(4) / 90.0);
        assert!(matches!(preset("nope", 8), Err(Error::UnknownPreset(_))));
        for (_, spec) in presets(16) {
            assert!(spec.assemble(1.0).is_ok());
        }
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = preset("trace_additive", 32).unwrap();
        let text = toml::to_string(&spec).unwrap();
        let back: HeatSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
