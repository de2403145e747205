//! The verification suite behind `spheregap verify`: every check compares an
//! independently computed value against its expectation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{diagnostics, BAND_CONSTANT};
use crate::error::{Error, Result};
use crate::geometry::{Point, TwoSphereConfig};
use crate::images::assemble;
use crate::oracle::{
    boundary_constancy, distance_to_conductors, fd_step_study, harmonicity_scale, quadrature_flux,
    quadrature_potential_difference, ConductorPotential, SphereQuadrature,
};
use crate::par::Execution;
use crate::potential::{potential_difference, potential_difference_2d, HarmonicField, PlanarH};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|value − expected| ≤ tolerance`.
    Absolute,
    /// `value` is already a relative deviation; `value ≤ tolerance`.
    Relative,
    /// `expected / tolerance ≤ value ≤ expected · tolerance`.
    Factor,
    /// `value ≥ expected`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, expected: f64, tolerance: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::Absolute => (value - expected).abs() <= tolerance,
            Comparison::Relative => value.abs() <= tolerance,
            Comparison::Factor => value >= expected / tolerance && value <= expected * tolerance,
            Comparison::AtLeast => value >= expected,
        };
        Self { name: name.into(), value, expected, tolerance, comparison, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub format_version: u32,
    pub config: TwoSphereConfig,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub tol: f64,
    pub seed: u64,
    /// Relative error injected into `Q2` after assembly.
    pub perturb_q: Option<f64>,
    pub exec: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { tol: crate::images::DEFAULT_TOL, seed: 0, perturb_q: None, exec: Execution::Parallel }
    }
}

pub const FD_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];
const HARMONICITY_POINTS: usize = 12;

/// Seeded exterior points: a box sample around both spheres plus two points
/// in the neck between them.
fn probe_points(cfg: &TwoSphereConfig, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = 2.0 * cfg.r_max();
    let margin = 0.05 * cfg.r1.min(cfg.r2);
    let mut pts = Vec::new();
    while pts.len() < HARMONICITY_POINTS - 2 {
        let x = Point::new((0..cfg.n).map(|_| rng.gen_range(-reach..reach)).collect()).expect("finite");
        if distance_to_conductors(cfg, &x) > margin {
            pts.push(x);
        }
    }
    for scale in [3.0, 10.0] {
        let mut coords = vec![0.0; cfg.n];
        coords[1] = scale * (cfg.eps * cfg.reduced_radius()).sqrt();
        pts.push(Point::new(coords).expect("finite"));
    }
    pts
}

fn best_fd_ratio<P: ConductorPotential>(pot: &P, x: &Point, scale: f64) -> Option<f64> {
    let cfg = *pot.config();
    FD_STEPS
        .iter()
        .filter_map(|s| fd_step_study(|p: &Point| pot.value(p), x, &[s * cfg.r1], Some(&cfg)).ok())
        .flatten()
        .map(|(_, lap)| lap.abs() / scale)
        .reduce(f64::min)
}

fn relative_gap_error(oracle: f64, direct: f64) -> f64 {
    if direct == 0.0 {
        oracle.abs()
    } else {
        ((oracle - direct) / direct).abs()
    }
}

/// Runs every check that applies to `cfg.n`. Evaluation failures propagate;
/// failed checks are reported, not raised.
pub fn run_verification(cfg: &TwoSphereConfig, field: &HarmonicField, opts: &VerifyOptions) -> Result<VerificationReport> {
    if field.dim() != cfg.n {
        return Err(Error::DimensionMismatch { expected: cfg.n, got: field.dim() });
    }
    let checks = if cfg.n == 2 { planar_checks(cfg, field, opts)? } else { ladder_checks(cfg, field, opts)? };
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { format_version: FORMAT_VERSION, config: *cfg, checks, all_pass })
}

fn planar_checks(cfg: &TwoSphereConfig, field: &HarmonicField, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let planar = PlanarH::new(cfg)?;
    let quad = SphereQuadrature::for_dimension(2, opts.seed)?;
    let mut checks = Vec::new();
    for i in [1u8, 2] {
        let s = boundary_constancy(&planar, i, 720, opts.seed)?;
        checks.push(Check::new(format!("boundary_constancy_D{i}"), s.max_abs_deviation, 0.0, 1e-13, Comparison::Absolute));
    }
    for (i, expected) in [(1u8, 1.0), (2, -1.0)] {
        let f = quadrature_flux(&planar, i, &quad, opts.exec)?;
        checks.push(Check::new(format!("flux_D{i}"), f.value, expected, 1e-10, Comparison::Absolute));
    }
    let mut worst = 0.0f64;
    for x in probe_points(cfg, opts.seed) {
        let (d1, d2) = (x.distance(&planar.p1), x.distance(&planar.p2));
        let scale = (1.0 / (d1 * d1) + 1.0 / (d2 * d2)) / (2.0 * std::f64::consts::PI);
        if let Some(r) = best_fd_ratio(&planar, &x, scale) {
            worst = worst.max(r);
        }
    }
    checks.push(Check::new("fd_harmonicity", worst, 0.0, 1e-4, Comparison::Relative));
    let direct = potential_difference_2d(cfg, field)?.value;
    let oracle = quadrature_potential_difference(&planar, field, &quad, opts.exec)?.value;
    checks.push(Check::new("oracle_equivalence", relative_gap_error(oracle, direct), 0.0, 1e-6, Comparison::Relative));
    let null = potential_difference_2d(cfg, &HarmonicField::coordinate(2, 2))?.value;
    checks.push(Check::new("transverse_null", null, 0.0, 1e-15, Comparison::Absolute));
    Ok(checks)
}

fn ladder_checks(cfg: &TwoSphereConfig, field: &HarmonicField, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut sys = assemble(cfg, opts.tol)?;
    if let Some(rel) = opts.perturb_q {
        sys.perturb_normalizer(rel);
    }
    let quad = SphereQuadrature::for_dimension(cfg.n, opts.seed)?;
    let (flux_tol, oracle_tol) = if cfg.n == 3 { (1e-8, 1e-6) } else { (1e-3, 1e-3) };
    let mut checks = Vec::new();

    for i in [1u8, 2] {
        let s = boundary_constancy(&sys, i, 500, opts.seed)?;
        checks.push(Check::new(
            format!("boundary_constancy_D{i}"),
            s.max_abs_deviation / s.mean.abs(),
            0.0,
            1e-8,
            Comparison::Relative,
        ));
    }
    for (i, expected) in [(1u8, 1.0), (2, -1.0)] {
        let f = quadrature_flux(&sys, i, &quad, opts.exec)?;
        checks.push(Check::new(format!("flux_D{i}"), f.value, expected, flux_tol, Comparison::Absolute));
        let w: f64 = sys.interior_charge_weights(i)?.iter().map(|(_, w)| w).sum();
        checks.push(Check::new(format!("interior_weights_D{i}"), w, expected, 1e-10, Comparison::Absolute));
    }
    let mut worst = 0.0f64;
    for x in probe_points(cfg, opts.seed) {
        if let Some(r) = best_fd_ratio(&sys, &x, harmonicity_scale(&sys, &x)) {
            worst = worst.max(r);
        }
    }
    checks.push(Check::new("fd_harmonicity", worst, 0.0, 1e-4, Comparison::Relative));

    let direct = potential_difference(&sys, field)?.value;
    let oracle = quadrature_potential_difference(&sys, field, &quad, opts.exec)?.value;
    checks.push(Check::new("oracle_equivalence", relative_gap_error(oracle, direct), 0.0, oracle_tol, Comparison::Relative));
    let null = potential_difference(&sys, &HarmonicField::coordinate(cfg.n, 2))?.value;
    checks.push(Check::new("transverse_null", null, 0.0, 1e-15, Comparison::Absolute));

    let diag = diagnostics(&sys)?;
    checks.push(Check::new("recursion_residual", diag.recursion_residual_max, 0.0, 1e-12, Comparison::Absolute));
    checks.push(Check::new("closed_form_agreement", diag.closed_form_max_rel_dev, 0.0, 1e-10, Comparison::Relative));
    checks.push(Check::new("y_monotone", f64::from(u8::from(diag.y_monotone)), 1.0, 0.0, Comparison::Absolute));
    for band in &diag.bands {
        let check = if band.upper.is_finite() {
            Check::new(format!("band: {}", band.name), band.statistic, 1.0, BAND_CONSTANT, Comparison::Factor)
        } else {
            Check::new(format!("band: {}", band.name), band.statistic, band.lower, 0.0, Comparison::AtLeast)
        };
        checks.push(check);
    }
    Ok(checks)
}
