use std::fs;

use nalgebra::DVector;
use spde_core::calculus::e_operator;
use spde_core::grid::fit_rate;
use spde_core::runner::{emit_report, run_experiment, CellResult, RateEntry};
use spde_core::{ErrorReport, ExperimentConfig, MeasureFamily};

fn config(extra_spec: &str, experiment: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        [problem]
        {extra_spec}

        [experiment]
        {experiment}
        "#
    ))
    .unwrap()
}

fn small() -> ExperimentConfig {
    config(
        "preset = \"white_mult\"\nm = 16",
        r#"
        schemes = ["implicit_euler", "modified_splitting(2)", "classical_splitting(2)", "abstract(dirac)"]
        n_ladder = [4, 8, 16]
        n_fine = 64
        samples = 6
        gammas = [0.0, 0.2]
        seed = 3
        emit_differences = true
        "#,
    )
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    emit_report(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    for f in ["errors.csv", "summary.csv", "rates.json", "plot.dat", "manifest.json", "differences.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn doubling_samples_keeps_the_first_half() {
    let cfg = small();
    let mut twice = cfg.clone();
    twice.experiment.samples *= 2;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&twice).unwrap();
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.samples[..], y.samples[..x.samples.len()]);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap())
    };
    let (one, four) = (run(1), run(4));
    for (x, y) in one.cells.iter().zip(&four.cells) {
        assert_eq!(x.samples, y.samples);
    }
}

#[test]
fn deterministic_problem_matches_operator_difference() {
    let cfg = config(
        r#"
        horizon = 1.0
        [problem.spec]
        f = "0"
        g = "0"
        u0 = "sin(pi*x) + x*(1-x)"
        m = 12
        "#,
        r#"
        schemes = ["implicit_euler"]
        n_ladder = [4, 8]
        n_fine = 64
        samples = 1
        gammas = [0.0]
        seed = 1
        "#,
    );
    let report = run_experiment(&cfg).unwrap();
    let problem = cfg.build_problem().unwrap();
    let a = &problem.operator;
    for n in [4usize, 8] {
        let diffs: Vec<DVector<f64>> = (0..=n)
            .map(|j| {
                let e = e_operator(&MeasureFamily::Exponential, a, 1.0, n, j).unwrap();
                // the reference is exponential Euler on 64 steps, i.e. S(t_j) exactly here
                let s = a.semigroup_matrix(j as f64 / n as f64).unwrap();
                e.apply(&problem.x0) - s * &problem.x0
            })
            .collect();
        let sup = diffs.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let mut osc = 0.0f64;
        for i in 0..diffs.len() {
            for j in i + 1..diffs.len() {
                osc = osc.max((&diffs[j] - &diffs[i]).amax());
            }
        }
        let got = report.cell("implicit_euler", n, 0.0).unwrap().samples[0];
        assert!((got - (sup + osc)).abs() <= 1e-10 * got.max(1.0), "n={n}: {got} vs {}", sup + osc);
    }
}

#[test]
fn gamma_zero_matches_recomputation_from_differences_csv() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg).unwrap();
    emit_report(&report, dir.path()).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join("differences.csv")).unwrap();
    // (scheme, n, sample) -> node values per time index
    let mut table: std::collections::BTreeMap<(String, usize, usize), Vec<Vec<f64>>> = Default::default();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let key = (rec[0].to_string(), rec[1].parse().unwrap(), rec[2].parse().unwrap());
        let j: usize = rec[3].parse().unwrap();
        let v: f64 = rec[5].parse().unwrap();
        let rows = table.entry(key).or_default();
        if rows.len() <= j {
            rows.resize(j + 1, Vec::new());
        }
        rows[j].push(v);
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("errors.csv")).unwrap();
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if rec[2].parse::<f64>().unwrap() != 0.0 {
            continue;
        }
        let key = (rec[0].to_string(), rec[1].parse().unwrap(), rec[3].parse().unwrap());
        let rows = &table[&key];
        let sup = rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut osc = 0.0f64;
        for a in rows {
            for b in rows {
                osc = osc.max(a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())));
            }
        }
        let err: f64 = rec[4].parse().unwrap();
        assert!((err - (sup + osc)).abs() <= 1e-12 * err.max(1.0), "{key:?}: {err} vs {}", sup + osc);
        checked += 1;
    }
    assert_eq!(checked, 4 * 3 * 6);
}

#[test]
fn empty_scheme_list_gives_header_only_files() {
    let cfg = config(
        "preset = \"trace_additive\"\nm = 8",
        "schemes = []\nn_ladder = [2, 4]\nn_fine = 8\nsamples = 2\nseed = 0",
    );
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("errors.csv")).unwrap(), "scheme,n,gamma,sample,error\n");
    assert_eq!(
        fs::read_to_string(dir.path().join("summary.csv")).unwrap(),
        "scheme,gamma,n,lp_error,max_error\n"
    );
    let rates: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    assert_eq!(rates, serde_json::json!([]));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert!(!dir.path().join("differences.csv").exists());
}

#[test]
fn synthetic_power_law_reports_slope_minus_half() {
    let cfg = small();
    let ns = [16usize, 32, 64, 128];
    let cells: Vec<CellResult> = ns
        .iter()
        .map(|&n| {
            let e = 2.0 / (n as f64).sqrt();
            CellResult {
                scheme: "implicit_euler".into(),
                n,
                gamma: 0.0,
                samples: vec![e],
                lp_error: e,
                max_error: e,
            }
        })
        .collect();
    let fit = fit_rate(&cells.iter().map(|c| (c.n, c.lp_error)).collect::<Vec<_>>()).unwrap();
    let rates = vec![RateEntry {
        scheme: "implicit_euler".into(),
        gamma: 0.0,
        slope: fit.slope,
        r_squared: fit.r_squared,
        predicted_ceiling: 0.0,
        ceiling_limit: 0.25,
        max_error_flags: vec![],
        fit,
    }];
    let report = ErrorReport {
        config: cfg,
        cells,
        rates,
        differences: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let rates: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    let slope = rates[0]["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 1e-12, "{slope}");
    let plot = fs::read_to_string(dir.path().join("plot.dat")).unwrap();
    let data: Vec<Vec<f64>> = plot
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(data.len(), 4);
    assert!((data[0][0] - 16f64.ln()).abs() < 1e-12);
}

#[test]
fn max_error_flags_follow_the_slack_rule() {
    let report = run_experiment(&small()).unwrap();
    for r in &report.rates {
        let row: Vec<_> = [4usize, 8, 16].iter().map(|&n| report.cell(&r.scheme, n, r.gamma).unwrap()).collect();
        let expected: Vec<usize> = row
            .windows(2)
            .filter(|w| w[1].max_error > 1.5 * w[0].max_error)
            .map(|w| w[1].n)
            .collect();
        assert_eq!(r.max_error_flags, expected);
    }
}
