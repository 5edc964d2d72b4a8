//! Gauss-Legendre rules on log-spaced panels.

use std::sync::OnceLock;

/// Nodes per panel.
pub const ORDER: usize = 20;
/// Panels per decade, giving 200 nodes per decade.
pub const PANELS_PER_DECADE: usize = 10;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 1 { x } else { p1 };
            let pm1 = if order == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn standard_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// Nodes and weights of the composite rule on `[0, hi]`: one panel on
/// `[0, lo]` followed by log-spaced panels on `[lo, hi]` at
/// `panels_per_decade` panels per decade.
pub fn log_panel_rule(lo: f64, hi: f64, panels_per_decade: usize) -> Vec<(f64, f64)> {
    assert!(lo > 0.0 && hi > lo);
    let (x, w) = standard_rule();
    let decades = (hi / lo).log10();
    let panels = ((decades * panels_per_decade as f64).ceil() as usize).max(1);
    let ratio = (hi / lo).powf(1.0 / panels as f64);
    let mut out = Vec::with_capacity((panels + 1) * ORDER);
    let mut push_panel = |a: f64, b: f64| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for (xi, wi) in x.iter().zip(w) {
            out.push((mid + half * xi, half * wi));
        }
    };
    push_panel(0.0, lo);
    let mut a = lo;
    for k in 1..=panels {
        let b = if k == panels { hi } else { lo * ratio.powi(k as i32) };
        push_panel(a, b);
        a = b;
    }
    out
}

/// Integral of `f` over `[0, hi]` on the composite rule, refining the panel
/// density until two successive levels agree to `rel_tol`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    let eval = |ppd: usize| -> f64 {
        log_panel_rule(lo, hi, ppd)
            .into_iter()
            .map(|(t, w)| w * f(t))
            .sum()
    };
    let mut ppd = PANELS_PER_DECADE;
    let mut prev = eval(ppd);
    for _ in 0..4 {
        ppd *= 2;
        let next = eval(ppd);
        if (next - prev).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        prev = next;
    }
    prev
}
