//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use spheregap::asymptotics::{diagnostics, fit_rate_unchecked, run_sweep, RateModel};
use spheregap::geometry::{fixed_point_leading_order, fixed_point_quadratic_root, Point};
use spheregap::images::{assemble, DEFAULT_TOL};
use spheregap::oracle::{
    boundary_constancy, fd_step_study, harmonicity_scale, quadrature_flux, quadrature_potential_difference,
    SphereQuadrature,
};
use spheregap::potential::{compute_gap, h_eval_boundary, potential_difference};
use spheregap::{Execution, HarmonicField, TwoSphereConfig};

const SEED: u64 = 20_240_917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn cfg(n: usize, r1: f64, r2: f64, eps: f64) -> TwoSphereConfig {
    TwoSphereConfig::new(n, r1, r2, eps).expect("valid config")
}

fn log_grid(from: f64, to: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((from / to).log10() * per_decade as f64).round() as usize;
    (0..=steps).map(|i| from * 10f64.powf(-(i as f64) / per_decade as f64)).collect()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

fn reduced(r1: f64, r2: f64) -> f64 {
    r1 * r2 / (r1 + r2)
}

/// Planar coefficient: fitted β in `Δu = β sqrt(eps)` equals `4 sqrt(r1 r2/(r1+r2))` within 1%.
fn planar_coefficient() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (r1, r2) in [(1.0, 1.0), (1.0, 2.0), (1.0, 5.0)] {
        let field = HarmonicField::coordinate(2, 1);
        let table = run_sweep(&cfg(2, r1, r2, 1e-4), &field, &log_grid(1e-4, 1e-7, 3), DEFAULT_TOL, Execution::Parallel)
            .expect("sweep");
        let fit = fit_rate_unchecked(&table, RateModel::SqrtEps).expect("fit");
        let exact = 4.0 * reduced(r1, r2).sqrt();
        let rel = (fit.coefficient / exact - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("({r1},{r2}): beta={:.6} exact={:.6}", fit.coefficient, exact));
    }
    Outcome { pass: worst < 0.01, detail: format!("max rel dev {worst:.2e}; {}", parts.join(", ")) }
}

/// Three dimensions: `Δu |log δ| (r1+r2)/(r1 r2)` stays within a factor 2 and
/// the logarithmic model beats the root and constant models.
fn three_dimensional_rate() -> Outcome {
    let field = HarmonicField::coordinate(3, 1);
    let eps = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
    let table = run_sweep(&cfg(3, 1.0, 1.0, 1e-3), &field, &eps, DEFAULT_TOL, Execution::Parallel).expect("sweep");
    let stats: Vec<f64> = table.rows.iter().map(|r| r.delta_u.expect("row ok") * r.delta.ln().abs() / 0.5).collect();
    let band = spread(&stats);
    let log = fit_rate_unchecked(&table, RateModel::InvLogEps).expect("fit").residual;
    let root = fit_rate_unchecked(&table, RateModel::SqrtEps).expect("fit").residual;
    let constant = fit_rate_unchecked(&table, RateModel::Constant).expect("fit").residual;
    Outcome {
        pass: band <= 2.0 && log < root && log < constant,
        detail: format!(
            "band ratio {band:.4}; residuals inv_log_eps {log:.3e}, sqrt_eps {root:.3e}, constant {constant:.3e}"
        ),
    }
}

/// n = 4, 5: `Δu / (r1 r2/(r1+r2))` changes by less than 5% from δ = 1e-5 to 1e-6.
fn high_dimensional_rate() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for n in [4, 5] {
        let field = HarmonicField::coordinate(n, 1);
        let v: Vec<f64> = [1e-5, 1e-6]
            .iter()
            .map(|&e| compute_gap(&cfg(n, 1.0, 2.0, e), &field, DEFAULT_TOL).expect("gap").value / reduced(1.0, 2.0))
            .collect();
        let change = (v[1] / v[0] - 1.0).abs();
        worst = worst.max(change);
        parts.push(format!("n={n}: {:.6} -> {:.6}", v[0], v[1]));
    }
    Outcome { pass: worst < 0.05, detail: format!("max change {:.3}%; {}", 100.0 * worst, parts.join(", ")) }
}

/// Radius law at δ = 1e-5: normalized statistic within a factor 1.5, raw one at least a factor 5.
fn radius_law() -> Outcome {
    let field = HarmonicField::coordinate(3, 1);
    let delta: f64 = 1e-5;
    let mut normalized = Vec::new();
    let mut raw = Vec::new();
    for d in [0.1, 0.2, 1.0, 5.0, 10.0] {
        let v = compute_gap(&cfg(3, 1.0, d, delta), &field, DEFAULT_TOL).expect("gap").value * delta.ln().abs();
        raw.push(v);
        normalized.push(v / reduced(1.0, d));
    }
    let (sn, sr) = (spread(&normalized), spread(&raw));
    Outcome { pass: sn <= 1.5 && sr >= 5.0, detail: format!("normalized spread {sn:.4}, unnormalized spread {sr:.4}") }
}

/// `H = x2` gives no gap in any dimension.
fn transverse_null() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 2..=6 {
        for (r1, r2) in [(1.0, 1.0), (1.0, 2.0), (0.3, 5.0)] {
            for eps in [1e-2, 1e-4, 1e-6] {
                let v = compute_gap(&cfg(n, r1, r2, eps), &HarmonicField::coordinate(n, 2), DEFAULT_TOL)
                    .expect("gap")
                    .value;
                worst = worst.max(v.abs());
                count += 1;
            }
        }
    }
    Outcome { pass: worst <= f64::EPSILON, detail: format!("max |gap| {worst:e} over {count} configs") }
}

/// Boundary constancy, flux, finite-difference harmonicity and oracle agreement.
fn construction_invariants() -> Outcome {
    let mut boundary = 0.0f64;
    let mut flux3 = 0.0f64;
    let mut oracle = 0.0f64;
    let mut harmonic = 0.0f64;
    let quad3 = SphereQuadrature::for_dimension(3, SEED).expect("rule");
    let field = HarmonicField::coordinate(3, 1);
    for (r1, r2) in [(1.0, 1.0), (1.0, 2.0), (1.0, 5.0)] {
        for eps in [1e-2, 1e-3, 1e-4] {
            let sys = assemble(&cfg(3, r1, r2, eps), DEFAULT_TOL).expect("assemble");
            for (i, expected) in [(1u8, 1.0), (2, -1.0)] {
                let s = boundary_constancy(&sys, i, 1000, SEED).expect("samples");
                boundary = boundary.max(s.max_abs_deviation / s.mean.abs());
                let f = quadrature_flux(&sys, i, &quad3, Execution::Parallel).expect("flux").value;
                flux3 = flux3.max((f - expected).abs());
            }
            let direct = potential_difference(&sys, &field).expect("gap").value;
            let q = quadrature_potential_difference(&sys, &field, &quad3, Execution::Parallel).expect("oracle").value;
            oracle = oracle.max(((q - direct) / direct).abs());

            let neck = 3.0 * (eps * reduced(r1, r2)).sqrt();
            for coords in [[0.0, neck, 0.0], [0.3, 1.5, -0.4], [-2.0, 0.5, 2.0], [r1 + eps, 0.0, 1.5 * r1]] {
                let x = Point::new(coords.to_vec()).expect("point");
                let steps: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|s| s * r1).collect();
                let best = steps
                    .iter()
                    .filter_map(|&s| fd_step_study(|p: &Point| h_eval_boundary(&sys, p), &x, &[s], Some(&sys.cfg)).ok())
                    .flatten()
                    .map(|(_, lap)| lap.abs())
                    .fold(f64::INFINITY, f64::min);
                if best.is_finite() {
                    harmonic = harmonic.max(best / harmonicity_scale(&sys, &x));
                }
            }
        }
    }
    let mut flux_high = 0.0f64;
    for n in [4, 5] {
        let sys = assemble(&cfg(n, 1.0, 2.0, 1e-3), DEFAULT_TOL).expect("assemble");
        let quad = SphereQuadrature::for_dimension(n, SEED).expect("rule");
        for (i, expected) in [(1u8, 1.0), (2, -1.0)] {
            let f = quadrature_flux(&sys, i, &quad, Execution::Parallel).expect("flux").value;
            flux_high = flux_high.max((f - expected).abs());
        }
    }
    Outcome {
        pass: boundary < 1e-8 && flux3 < 1e-8 && flux_high < 1e-3 && harmonic < 1e-4 && oracle < 1e-6,
        detail: format!(
            "boundary {boundary:.2e}, flux n=3 {flux3:.2e}, flux n>=4 {flux_high:.2e}, harmonicity {harmonic:.2e}, oracle {oracle:.2e}"
        ),
    }
}

/// Ladder sequence: recursion, closed form, monotonicity, and the fixed-point constant.
fn sequence_diagnostics() -> Outcome {
    let deltas = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
    let mut recursion = 0.0f64;
    let mut closed = 0.0f64;
    let mut monotone = true;
    let mut constant_spread = 0.0f64;
    for d in [0.1, 0.5, 1.0, 2.0, 10.0] {
        for delta in deltas {
            let sys = assemble(&cfg(3, 1.0, d, delta), DEFAULT_TOL).expect("assemble");
            let rep = diagnostics(&sys).expect("diagnostics");
            recursion = recursion.max(rep.recursion_residual_max);
            closed = closed.max(rep.closed_form_max_rel_dev);
            monotone &= rep.y_monotone;
        }
        if d != 1.0 {
            let cs: Vec<f64> = deltas
                .iter()
                .map(|&dl| (fixed_point_quadratic_root(d, dl) - fixed_point_leading_order(d, dl)).abs() / dl)
                .collect();
            constant_spread = constant_spread.max(spread(&cs));
        }
    }
    // d = 1: the O(δ) term vanishes, so only the bound itself is checked.
    let c_sym = deltas
        .iter()
        .map(|&dl| (fixed_point_quadratic_root(1.0, dl) - fixed_point_leading_order(1.0, dl)).abs() / dl)
        .fold(0.0, f64::max);
    Outcome {
        pass: recursion < 1e-12 && closed < 1e-10 && monotone && constant_spread <= 2.0 && c_sym < 1.0,
        detail: format!(
            "recursion {recursion:.2e}, closed form {closed:.2e}, monotone {monotone}, fixed-point constant spread (d != 1) {constant_spread:.4}, d = 1 max error/delta {c_sym:.2e}"
        ),
    }
}

/// Scaling all lengths by λ scales the gap by λ and leaves magnitudes unchanged.
fn scale_invariance() -> Outcome {
    let mut gap = 0.0f64;
    let mut mags = 0.0f64;
    for (n, r2, eps) in [(3, 2.0, 1e-4), (3, 0.3, 1e-2), (4, 5.0, 1e-5)] {
        let base = cfg(n, 1.0, r2, eps);
        let field = HarmonicField::coordinate(n, 1);
        let sys = assemble(&base, DEFAULT_TOL).expect("assemble");
        let g = potential_difference(&sys, &field).expect("gap").value;
        for lambda in [0.1, 7.0] {
            let scaled = assemble(&base.scaled(lambda).expect("scaled"), DEFAULT_TOL).expect("assemble");
            let gs = potential_difference(&scaled, &field).expect("gap").value;
            gap = gap.max((gs / (lambda * g) - 1.0).abs());
            let rel = |a: f64, b: f64| if a == b { 0.0 } else { ((a - b) / b).abs() };
            for (x, y) in [(scaled.q1, sys.q1), (scaled.q2, sys.q2), (scaled.m, sys.m)] {
                mags = mags.max(rel(x, y));
            }
            for f in [1u8, 2] {
                let (a, b) = (scaled.ladder(f), sys.ladder(f));
                if a.len() != b.len() {
                    mags = f64::INFINITY;
                    continue;
                }
                for (x, y) in a.charges.iter().zip(&b.charges) {
                    mags = mags.max(rel(x.magnitude, y.magnitude));
                }
            }
        }
    }
    Outcome { pass: gap < 1e-12 && mags < 1e-13, detail: format!("gap {gap:.2e}, q/Q/M {mags:.2e}") }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 planar coefficient", planar_coefficient, Duration::from_secs(1)),
        ("2 three-dimensional rate", three_dimensional_rate, Duration::from_secs(30)),
        ("3 high-dimensional rate", high_dimensional_rate, Duration::from_secs(30)),
        ("4 radius law", radius_law, Duration::from_secs(30)),
        ("5 transverse null", transverse_null, Duration::from_secs(30)),
        ("6 construction invariants", construction_invariants, Duration::from_secs(120)),
        ("7 sequence diagnostics", sequence_diagnostics, Duration::from_secs(30)),
        ("8 scale invariance", scale_invariance, Duration::from_secs(30)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.2}s / budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
