//! Acceptance run: one PASS/FAIL line per criterion. Set
//! `ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit status.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use spde_core::calculus::{
    check_g_bound, convolved_moment, e_operator, e_operator_quadrature, moment_by_quadrature,
    uniform_bound_check,
};
use spde_core::grid::TimeGrid;
use spde_core::heat1d::preset;
use spde_core::linop::operator_norm;
use spde_core::noise::{generate, Increments};
use spde_core::runner::{emit_report, run_experiment, ErrorReport};
use spde_core::schemes::{implicit_euler_run, modified_splitting_run, reference_run, truncate_coefficients};
use spde_core::{ExperimentConfig, LinearOperator, MeasureFamily, Problem, SeedDescriptor};

struct Line {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn line(id: &'static str, passed: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        passed,
        detail: detail.into(),
    }
}

fn white_config(schemes: &str, gammas: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        [problem]
        preset = "white_mult"
        m = 128

        [experiment]
        schemes = {schemes}
        n_ladder = [16, 32, 64, 128]
        n_fine = 2048
        samples = 200
        p = 2.0
        gammas = {gammas}
        norm = {{ kind = "sup" }}
        seed = 20240601
        "#
    ))
    .expect("valid config")
}

fn rate_line(id: &'static str, report: &ErrorReport, scheme: &str, gamma: f64, ok: impl Fn(f64, f64) -> bool, rule: &str) -> Line {
    match report.rate(scheme, gamma) {
        Some(r) => {
            let d = -r.slope;
            line(
                id,
                ok(d, r.r_squared),
                format!(
                    "{scheme} gamma={gamma}: delta={d:.4} r2={:.4} ({rule}; ceiling {:.3}, p->inf {:.3})",
                    r.r_squared, r.predicted_ceiling, r.ceiling_limit
                ),
            )
        }
        None => line(id, false, format!("{scheme}: no rate fitted")),
    }
}

fn errors_csv(report: &ErrorReport) -> Vec<u8> {
    let dir = tempfile::tempdir().expect("temp dir");
    emit_report(report, dir.path()).expect("report written");
    std::fs::read(dir.path().join("errors.csv")).expect("errors.csv")
}

fn criteria_1_3_11(lines: &mut Vec<Line>) {
    let cfg = white_config(r#"["implicit_euler", "modified_splitting(8)"]"#, "[0.0, 0.05]");
    let start = Instant::now();
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            for id in ["1", "3", "11"] {
                lines.push(line(id, false, format!("experiment failed: {e}")));
            }
            return;
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    for scheme in ["implicit_euler", "modified_splitting(8)"] {
        lines.push(rate_line(
            "1",
            &report,
            scheme,
            0.0,
            |d, r2| (0.17..=0.33).contains(&d) && r2 >= 0.95,
            "need 0.17 <= delta <= 0.33, r2 >= 0.95",
        ));
    }
    lines.push(line("1", elapsed < 600.0, format!("runtime {elapsed:.1} s (need < 600 s)")));

    for scheme in ["implicit_euler", "modified_splitting(8)"] {
        let (Some(r0), Some(r5)) = (report.rate(scheme, 0.0), report.rate(scheme, 0.05)) else {
            lines.push(line("3", false, format!("{scheme}: missing rates")));
            continue;
        };
        let (d0, d5) = (-r0.slope, -r5.slope);
        lines.push(line(
            "3",
            d0 - d5 >= 0.02 && d0 <= 0.33 && 0.05 + d5 <= 0.33,
            format!("{scheme}: delta(0)={d0:.4} delta(0.05)={d5:.4} drop={:.4} (need drop >= 0.02, gamma+delta <= 0.33)", d0 - d5),
        ));
    }

    let first = errors_csv(&report);
    let again = run_experiment(&cfg).map(|r| errors_csv(&r));
    lines.push(match again {
        Ok(second) => line(
            "11",
            first == second,
            format!("errors.csv {} bytes, rerun identical: {}", first.len(), first == second),
        ),
        Err(e) => line("11", false, format!("rerun failed: {e}")),
    });
}

fn criterion_2(lines: &mut Vec<Line>) {
    let cfg = ExperimentConfig::from_toml(
        r#"
        [problem]
        preset = "trace_additive"
        m = 128

        [experiment]
        schemes = ["implicit_euler", "modified_splitting(8)"]
        n_ladder = [16, 32, 64, 128]
        n_fine = 2048
        samples = 200
        p = 2.0
        gammas = [0.0]
        seed = 20240602
        "#,
    )
    .expect("valid config");
    match run_experiment(&cfg) {
        Ok(report) => {
            for scheme in ["implicit_euler", "modified_splitting(8)"] {
                lines.push(rate_line("2", &report, scheme, 0.0, |d, _| d >= 0.35, "need delta >= 0.35"));
            }
        }
        Err(e) => lines.push(line("2", false, format!("experiment failed: {e}"))),
    }
}

fn criterion_4() -> Line {
    let fam = MeasureFamily::Exponential;
    let mut worst = 0.0f64;
    for n in [2usize, 4, 8, 16] {
        for j in 1..=n {
            for alpha in [-0.5, 0.0, 0.5, 1.0] {
                for omega_t in [0.0, 0.25] {
                    let closed = convolved_moment(&fam, n, j, alpha, omega_t).unwrap();
                    let quad = moment_by_quadrature(&fam, n, j, alpha, omega_t).unwrap();
                    worst = worst.max(((closed - quad) / closed).abs());
                }
            }
        }
    }
    line("4", worst <= 1e-8, format!("max relative error {worst:.3e} (need <= 1e-8)"))
}

fn criterion_5() -> Line {
    let r = check_g_bound(50).unwrap();
    line(
        "5",
        r.holds,
        format!(
            "worst range excess {:.3e}, worst increase {:.3e}, failures {}",
            r.worst_excess,
            r.worst_increase,
            r.failures.len()
        ),
    )
}

fn criterion_6(lines: &mut Vec<Line>) {
    let a = LinearOperator::symmetric_test(8).unwrap();
    let rel = |x: &DMatrix<f64>, y: &DMatrix<f64>| operator_norm(&(x - y)) / operator_norm(y);
    let mut worst_q = 0.0f64;
    let mut worst_d = 0.0f64;
    for j in [1, 5, 16] {
        let quad = e_operator_quadrature(&MeasureFamily::Exponential, &a, 1.0, 16, j).unwrap();
        let power = e_operator(&MeasureFamily::Exponential, &a, 1.0, 16, j).unwrap();
        worst_q = worst_q.max(rel(&quad.matrix, &power.matrix));
        let dirac = e_operator(&MeasureFamily::Dirac, &a, 1.0, 16, j).unwrap();
        let s = a.semigroup_matrix(j as f64 / 16.0).unwrap();
        worst_d = worst_d.max(rel(&dirac.matrix, &s));
    }
    lines.push(line("6", worst_q <= 1e-6, format!("quadrature vs resolvent powers {worst_q:.3e} (need <= 1e-6)")));
    lines.push(line("6", worst_d <= 1e-10, format!("dirac E vs S {worst_d:.3e} (need <= 1e-10)")));
}

fn criterion_7(lines: &mut Vec<Line>) {
    let a = LinearOperator::symmetric_test(16).unwrap();
    for delta in [0.0, 0.5, 1.0] {
        let q = uniform_bound_check(&MeasureFamily::Exponential, &a, 1.0, delta, &[8, 16, 32, 64]).unwrap();
        let early = q[0].1.max(q[1].1);
        let late = q[2].1.max(q[3].1);
        lines.push(line(
            "7",
            late <= 1.5 * early,
            format!("delta={delta}: q = {:?}, ratio {:.3} (need <= 1.5)", q.iter().map(|p| p.1).collect::<Vec<_>>(), late / early),
        ));
    }
}

fn criterion_8() -> Line {
    let (m, n, f, g) = (16usize, 32usize, 0.3, 0.7);
    let a = LinearOperator::dirichlet_laplacian(m).unwrap();
    let x0 = DVector::from_fn(m, |i, _| ((i + 1) as f64 / (m + 1) as f64).powi(2));
    let p = Problem::new(
        a.clone(),
        move |_, _, out| out.fill(f),
        move |_, _, dw, out| {
            for (o, w) in out.iter_mut().zip(dw) {
                *o = g * w;
            }
        },
        m,
        x0.clone(),
        1.0,
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, n).unwrap();
    let tau = 1.0 / n as f64;
    // semigroup powers by eigendecomposition, independent of the stepping code
    let eig = a.matrix().clone().symmetric_eigen();
    let s_of = |t: f64| {
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (l * t).exp()));
        &eig.eigenvectors * d * eig.eigenvectors.transpose()
    };
    let powers: Vec<DMatrix<f64>> = (0..=n).map(|k| s_of(k as f64 * tau)).collect();
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let dw: Increments = generate(n, m, 1.0, SeedDescriptor::new(8, s)).unwrap().into();
        let traj = modified_splitting_run(&p, grid, &dw, 1).unwrap();
        for j in 0..=n {
            let mut direct = &powers[j] * &x0;
            for k in 1..=j {
                let forcing = DVector::from_iterator(m, dw.row(k - 1).iter().map(|w| tau * f + g * w));
                direct += &powers[j - k + 1] * forcing;
            }
            worst = worst.max((&traj.states[j] - direct).amax());
        }
    }
    line("8", worst <= 1e-9, format!("max sup-norm gap {worst:.3e} over 20 samples (need <= 1e-9)"))
}

fn criterion_9() -> Line {
    let (samples, n_fine) = (500usize, 1usize << 14);
    let a = LinearOperator::dense(DMatrix::from_element(1, 1, -1.0)).unwrap();
    let p = Problem::linear_additive(a, 0.0, 1.0, DVector::from_element(1, 1.0), 1.0).unwrap();
    let grid = TimeGrid::new(1.0, n_fine).unwrap();
    let sq: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let dw: Increments = generate(n_fine, 1, 1.0, SeedDescriptor::new(9, s)).unwrap().into();
            let u = reference_run(&p, grid, &dw).unwrap().final_state()[0];
            u * u
        })
        .collect();
    let k = samples as f64;
    let mean = sq.iter().sum::<f64>() / k;
    let se = (sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    let exact = (-2.0f64).exp() + (1.0 - (-2.0f64).exp()) / 2.0;
    let z = (mean - exact).abs() / se;
    line("9", z <= 3.0, format!("E[U(1)^2] = {mean:.5} vs {exact:.5}, {z:.2} standard errors (need <= 3)"))
}

fn criterion_10() -> Line {
    let (m, n, samples) = (64usize, 256usize, 100u64);
    let spec = preset("local_lipschitz", m).unwrap();
    let problem = spec.assemble(1.0).unwrap();
    let grid = TimeGrid::new(1.0, n).unwrap();
    let noise = |s: u64| -> Increments { generate(n, problem.noise_dim, 1.0, SeedDescriptor::new(10, s)).unwrap().into() };
    let plain: Vec<_> = (0..samples)
        .into_par_iter()
        .map(|s| implicit_euler_run(&problem, grid, &noise(s)).unwrap())
        .collect();
    let sup = plain
        .iter()
        .flat_map(|t| t.states.iter().map(|x| problem.norm.eval(x.as_slice())))
        .fold(0.0, f64::max);
    let truncated = truncate_coefficients(&problem, 10.0 * sup).unwrap();
    let agree = (0..samples)
        .into_par_iter()
        .filter(|&s| {
            let t = implicit_euler_run(&truncated, grid, &noise(s)).unwrap();
            t.states
                .iter()
                .zip(&plain[s as usize].states)
                .all(|(x, y)| x.iter().zip(y.iter()).all(|(a, b)| a.to_bits() == b.to_bits()))
        })
        .count();
    line(
        "10",
        agree * 100 >= 95 * samples as usize,
        format!("{agree}/{samples} samples bit-identical, radius {:.3} (need >= 95%)", 10.0 * sup),
    )
}

fn main() {
    let mut lines = Vec::new();
    criteria_1_3_11(&mut lines);
    criterion_2(&mut lines);
    lines.push(criterion_4());
    lines.push(criterion_5());
    criterion_6(&mut lines);
    criterion_7(&mut lines);
    lines.push(criterion_8());
    lines.push(criterion_9());
    lines.push(criterion_10());

    lines.sort_by_key(|l| l.id.parse::<u32>().unwrap_or(0));
    let mut failed = 0;
    for l in &lines {
        let tag = if l.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {}", l.id, l.detail);
        failed += usize::from(!l.passed);
    }
    println!("acceptance: {} lines, {failed} failed", lines.len());
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
