//! Predicted blow-up rates, eps-sweeps, rate fits, and diagnostics of the
//! image-charge ladders.
//!
//! Logarithms are natural. The scale-free `|log δ|` with `δ = eps / r1` is
//! used for fits and bands; the raw `|log eps|` form of the prediction is
//! reported alongside it.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{fixed_point_leading_order, fixed_point_quadratic_root, TwoSphereConfig};
use crate::images::{assemble, ChargeSystem};
use crate::output::fmt_f64;
use crate::par::{map_collect, Execution};
use crate::potential::{gradient_lower_bound, potential_difference, potential_difference_2d, HarmonicField};
use crate::summation::NeumaierSum;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    PotentialGap,
    GradientLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    SqrtEps,
    InvLogEps,
    Constant,
    InvEpsLogEps,
    InvSqrtEps,
    InvEps,
}

impl RateModel {
    pub const ALL: [RateModel; 6] = [
        Self::SqrtEps,
        Self::InvLogEps,
        Self::Constant,
        Self::InvEpsLogEps,
        Self::InvSqrtEps,
        Self::InvEps,
    ];

    /// The model the theory predicts for dimension `n`.
    pub fn for_regime(n: usize, kind: RateKind) -> Self {
        match (n, kind) {
            (2, RateKind::PotentialGap) => Self::SqrtEps,
            (3, RateKind::PotentialGap) => Self::InvLogEps,
            (_, RateKind::PotentialGap) => Self::Constant,
            (2, RateKind::GradientLower) => Self::InvSqrtEps,
            (3, RateKind::GradientLower) => Self::InvEpsLogEps,
            (_, RateKind::GradientLower) => Self::InvEps,
        }
    }

    pub fn kind(self) -> RateKind {
        match self {
            Self::SqrtEps | Self::InvLogEps | Self::Constant => RateKind::PotentialGap,
            _ => RateKind::GradientLower,
        }
    }

    /// Shape `g` of the model `y = β g`.
    pub fn basis(self, eps: f64, delta: f64) -> f64 {
        let log = delta.ln().abs();
        match self {
            Self::SqrtEps => eps.sqrt(),
            Self::InvLogEps => 1.0 / log,
            Self::Constant => 1.0,
            Self::InvEpsLogEps => 1.0 / (eps * log),
            Self::InvSqrtEps => 1.0 / eps.sqrt(),
            Self::InvEps => 1.0 / eps,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SqrtEps => "sqrt_eps",
            Self::InvLogEps => "inv_log_eps",
            Self::Constant => "constant",
            Self::InvEpsLogEps => "inv_eps_log_eps",
            Self::InvSqrtEps => "inv_sqrt_eps",
            Self::InvEps => "inv_eps",
        }
    }
}

impl fmt::Display for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown rate model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePrediction {
    pub n: usize,
    pub kind: RateKind,
    pub model: RateModel,
    /// Prediction with `|log eps|`; for `n ≥ 3` only up to an unknown constant.
    pub formula_value: f64,
    /// Same prediction with the scale-free `|log δ|`.
    pub formula_value_scaled: f64,
    pub constant_unknown: bool,
}

/// `a1 = ∂H/∂x₁`: `4 a1 sqrt(r eps)` (n = 2), `a1 r / |log eps|` (n = 3),
/// `a1 r` (n ≥ 4), with `r = r1 r2 / (r1 + r2)`.
pub fn predicted_gap(n: usize, r1: f64, r2: f64, eps: f64, a1: f64) -> RatePrediction {
    let r = r1 * r2 / (r1 + r2);
    let (raw, scaled) = match n {
        2 => {
            let v = 4.0 * a1 * (r * eps).sqrt();
            (v, v)
        }
        3 => (a1 * r / eps.ln().abs(), a1 * r / (eps / r1).ln().abs()),
        _ => (a1 * r, a1 * r),
    };
    RatePrediction {
        n,
        kind: RateKind::PotentialGap,
        model: RateModel::for_regime(n, RateKind::PotentialGap),
        formula_value: raw,
        formula_value_scaled: scaled,
        constant_unknown: n != 2,
    }
}

/// [`predicted_gap`] divided by the gap width `2 eps`.
pub fn predicted_gradient(n: usize, r1: f64, r2: f64, eps: f64, a1: f64) -> RatePrediction {
    let gap = predicted_gap(n, r1, r2, eps, a1);
    RatePrediction {
        kind: RateKind::GradientLower,
        model: RateModel::for_regime(n, RateKind::GradientLower),
        formula_value: gap.formula_value / (2.0 * eps),
        formula_value_scaled: gap.formula_value_scaled / (2.0 * eps),
        ..gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub delta: f64,
    pub d: f64,
    pub delta_u: Option<f64>,
    pub gradient_lower_bound: Option<f64>,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub m: Option<f64>,
    pub ladder1_len: Option<usize>,
    pub ladder2_len: Option<usize>,
    pub tail_bound1: Option<f64>,
    pub tail_bound2: Option<f64>,
    pub tail_error: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub format_version: u32,
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub field: String,
    pub tol: f64,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_COLUMNS: [&str; 15] = [
    "format_version",
    "eps",
    "delta",
    "d",
    "delta_u",
    "gradient_lower_bound",
    "Q1",
    "Q2",
    "M",
    "ladder1_len",
    "ladder2_len",
    "tail_bound1",
    "tail_bound2",
    "tail_error",
    "status",
];

impl SweepTable {
    /// One line per row in [`SWEEP_CSV_COLUMNS`] order; missing values are empty.
    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let int = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = SWEEP_CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            };
            let cells = [
                FORMAT_VERSION.to_string(),
                fmt_f64(r.eps),
                fmt_f64(r.delta),
                fmt_f64(r.d),
                num(r.delta_u),
                num(r.gradient_lower_bound),
                num(r.q1),
                num(r.q2),
                num(r.m),
                int(r.ladder1_len),
                int(r.ladder2_len),
                num(r.tail_bound1),
                num(r.tail_bound2),
                num(r.tail_error),
                status,
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn sweep_row(cfg: &TwoSphereConfig, field: &HarmonicField, tol: f64) -> SweepRow {
    let mut row = SweepRow {
        eps: cfg.eps,
        delta: cfg.delta(),
        d: cfg.d(),
        delta_u: None,
        gradient_lower_bound: None,
        q1: None,
        q2: None,
        m: None,
        ladder1_len: None,
        ladder2_len: None,
        tail_bound1: None,
        tail_bound2: None,
        tail_error: None,
        error: None,
    };
    let result = if cfg.n == 2 {
        potential_difference_2d(cfg, field)
    } else {
        assemble(cfg, tol).and_then(|sys| {
            row.q1 = Some(sys.q1);
            row.q2 = Some(sys.q2);
            row.m = Some(sys.m);
            row.ladder1_len = Some(sys.ladder1.len());
            row.ladder2_len = Some(sys.ladder2.len());
            row.tail_bound1 = Some(sys.ladder1.tail_bound);
            row.tail_bound2 = Some(sys.ladder2.tail_bound);
            potential_difference(&sys, field)
        })
    };
    match result {
        Ok(res) => {
            row.delta_u = Some(res.value);
            row.gradient_lower_bound = Some(gradient_lower_bound(&res));
            row.tail_error = Some(res.tail_error);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluates the gap at each eps. Rows are independent; a failing row is
/// recorded with its error instead of aborting the sweep.
pub fn run_sweep(
    base: &TwoSphereConfig,
    field: &HarmonicField,
    eps_list: &[f64],
    tol: f64,
    exec: Execution,
) -> Result<SweepTable> {
    if eps_list.is_empty() {
        return Err(Error::InvalidSweep("eps list is empty".into()));
    }
    if let Some(bad) = eps_list.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::InvalidSweep(format!("eps must be finite and > 0, got {bad}")));
    }
    if let Some(w) = eps_list.windows(2).find(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSweep(format!(
            "eps list must be strictly decreasing, found {} then {}",
            w[0], w[1]
        )));
    }
    if field.dim() != base.n {
        return Err(Error::DimensionMismatch { expected: base.n, got: field.dim() });
    }
    let cfgs = eps_list.iter().map(|&e| base.with_eps(e)).collect::<Result<Vec<_>>>()?;
    let rows = map_collect(exec, &cfgs, |c| sweep_row(c, field, tol));
    Ok(SweepTable {
        format_version: FORMAT_VERSION,
        n: base.n,
        r1: base.r1,
        r2: base.r2,
        field: format!("{field:?}"),
        tol,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub format_version: u32,
    pub model: RateModel,
    pub kind: RateKind,
    pub coefficient: f64,
    /// Max relative misfit `|y − β g| / |y|` over the rows used.
    pub residual: f64,
    pub fit_range: (f64, f64),
    pub rows_used: usize,
}

pub const DEFAULT_MISMATCH_THRESHOLD: f64 = 0.2;
/// Rows whose truncation error exceeds this fraction of the gap are not fitted.
pub const FIT_TAIL_LIMIT: f64 = 1e-9;

/// Fits `y = β g(eps)` and rejects a residual above the default threshold.
pub fn fit_rate(table: &SweepTable, model: RateModel) -> Result<FitResult> {
    fit_rate_with_threshold(table, model, DEFAULT_MISMATCH_THRESHOLD)
}

pub fn fit_rate_with_threshold(table: &SweepTable, model: RateModel, threshold: f64) -> Result<FitResult> {
    let fit = fit_rate_unchecked(table, model)?;
    if fit.residual.is_nan() || fit.residual > threshold {
        return Err(Error::ModelMismatch { model: model.name().into(), residual: fit.residual, threshold });
    }
    Ok(fit)
}

/// Least squares on relative residuals: minimizes `Σ (1 − β g / y)²`, so
/// every row counts equally however the data scale across decades.
pub fn fit_rate_unchecked(table: &SweepTable, model: RateModel) -> Result<FitResult> {
    let data: Vec<(f64, f64, f64)> = table
        .rows
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| {
            let dv = r.delta_u?;
            if r.tail_error.unwrap_or(0.0) > FIT_TAIL_LIMIT * dv.abs() {
                return None;
            }
            let y = match model.kind() {
                RateKind::PotentialGap => dv,
                RateKind::GradientLower => r.gradient_lower_bound?,
            };
            (y != 0.0 && y.is_finite()).then(|| (r.eps, model.basis(r.eps, r.delta), y))
        })
        .collect();
    if data.len() < 4 {
        return Err(Error::InvalidSweep(format!("rate fit needs >= 4 usable rows, got {}", data.len())));
    }
    let num: NeumaierSum = data.iter().map(|(_, g, y)| g / y).collect();
    let den: NeumaierSum = data.iter().map(|(_, g, y)| (g / y).powi(2)).collect();
    let coefficient = num.value() / den.value();
    let residual = data.iter().map(|(_, g, y)| ((y - coefficient * g) / y).abs()).fold(0.0, f64::max);
    let eps_min = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let eps_max = data.iter().map(|d| d.0).fold(0.0, f64::max);
    Ok(FitResult {
        format_version: FORMAT_VERSION,
        model,
        kind: model.kind(),
        coefficient,
        residual,
        fit_range: (eps_min, eps_max),
        rows_used: data.len(),
    })
}

/// A normalized statistic expected to lie in `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub name: String,
    pub statistic: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Band {
    fn new(name: &str, statistic: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), statistic, lower, upper, pass: statistic >= lower && statistic <= upper }
    }
}

/// Frozen band constant `C` for statistics that should be `≍ 1`: accepted
/// in `[1/C, C]`.
pub const BAND_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub format_version: u32,
    pub config: TwoSphereConfig,
    pub d: f64,
    pub delta: f64,
    pub abs_log_delta: f64,
    /// `Σ_m q_{s,m}` for `n = 3`, `Σ_m q_{s,m}^{n-2}` otherwise.
    pub q_sum1: f64,
    pub q_sum2: f64,
    pub q1: f64,
    pub q2: f64,
    pub m: f64,
    /// `(−1)^{s+1} [Σ c_{s,2k} q^{n-2} − Σ c_{s,2k+1} q^{n-2}] / r_s`.
    pub weighted_sum1: f64,
    pub weighted_sum2: f64,
    pub fixed_point_over_r1: f64,
    pub fixed_point_leading_order: f64,
    /// `|p/r1 − 2 sqrt(d/(d+1)) sqrt δ| / δ`.
    pub fixed_point_constant: f64,
    /// Relative distance of the last even ladder position from `p`.
    pub ladder_limit_deviation: f64,
    pub recursion_residual_max: f64,
    pub closed_form_max_rel_dev: f64,
    pub closed_form_points: usize,
    pub y_monotone: bool,
    /// `max_{k ≤ N} |y_{2k} − d/(k(d+1)+d)| / (sqrt(d/(d+1)) sqrt δ)`.
    pub y_approx_constant: f64,
    /// Measured remainder constant in `1/z_{2k} = 1 + k(d+1)/d + ((d+1)/d)^{3/2} k² O(sqrt δ)`.
    pub c1: f64,
    pub n_threshold: usize,
    pub a: f64,
    pub b: f64,
    /// Range of `−y_{2k+1} / (sqrt(d/(d+1)) sqrt δ)` over `k ≥ N`.
    pub odd_bracket_min: f64,
    pub odd_bracket_max: f64,
    pub bands: Vec<Band>,
    pub all_bands_pass: bool,
}

/// The coefficients of `y_{2k} y_{2k-2} + α y_{2k} − β y_{2k-2} − γ = 0`.
fn recursion_coefficients(d: f64, delta: f64) -> (f64, f64, f64) {
    let den = 1.0 + d + 2.0 * delta;
    let alpha = (d + (1.0 + 3.0 * d) * delta + 2.0 * delta * delta) / den;
    let beta = (d + (3.0 + d) * delta + 2.0 * delta * delta) / den;
    let gamma = (4.0 * d * delta + 3.0 * (1.0 + d) * delta * delta + 2.0 * delta.powi(3)) / den;
    (alpha, beta, gamma)
}

/// `(A − 1, B)` with `1/z_{2k} + B = A (1/z_{2k-2} + B)`.
fn contraction_constants(d: f64, delta: f64, p: f64) -> (f64, f64) {
    let den1 = 1.0 + d + 2.0 * delta;
    let (_, beta, _) = recursion_coefficients(d, delta);
    let skew = (d - 1.0) * delta / den1;
    let a_minus_1 = 2.0 * (skew + p) / (beta - p);
    let b = 1.0 / (2.0 * (skew + p));
    (a_minus_1, b)
}

/// `y_{2k}` from the closed form `1/((1/z0 + B) A^k − B) + p/r1`.
pub fn closed_form_even_position(d: f64, delta: f64, k: usize) -> f64 {
    let p = fixed_point_quadratic_root(d, delta);
    let (a_minus_1, b) = contraction_constants(d, delta, p);
    let z0 = 1.0 + delta - p;
    let growth = (k as f64 * a_minus_1.ln_1p()).exp_m1();
    let inv_z = (1.0 + growth) / z0 + b * growth;
    1.0 / inv_z + p
}

/// Ladder diagnostics for `n ≥ 3`. Band violations are flagged, not raised.
pub fn diagnostics(sys: &ChargeSystem) -> Result<DiagnosticsReport> {
    let cfg = sys.cfg;
    if cfg.n < 3 {
        return Err(Error::InvalidConfig("diagnostics need n >= 3".into()));
    }
    let (d, delta) = (cfg.d(), cfg.delta());
    let log = delta.ln().abs();
    let k = (cfg.n - 2) as i32;
    let root = (d / (d + 1.0)).sqrt() * delta.sqrt();

    let q_sum = |f: u8| -> f64 {
        sys.ladder(f).charges.iter().map(|c| if k == 1 { c.magnitude } else { c.magnitude.powi(k) }).collect::<NeumaierSum>().value()
    };
    let weighted = |f: u8, r: f64| -> f64 {
        let s: NeumaierSum =
            sys.ladder(f).charges.iter().map(|c| f64::from(c.sign) * c.axial_position * c.magnitude.powi(k)).collect();
        let sign = if f == 1 { 1.0 } else { -1.0 };
        sign * s.value() / r
    };
    let (q_sum1, q_sum2) = (q_sum(1), q_sum(2));
    let (weighted_sum1, weighted_sum2) = (weighted(1, cfg.r1), weighted(2, cfg.r2));

    let p = fixed_point_quadratic_root(d, delta);
    let lead = fixed_point_leading_order(d, delta);
    let y: Vec<f64> = sys.ladder1.charges.iter().map(|c| c.axial_position / cfg.r1).collect();
    let evens: Vec<f64> = y.iter().step_by(2).copied().collect();
    let odds: Vec<f64> = y.iter().skip(1).step_by(2).copied().collect();

    let (alpha, beta, gamma) = recursion_coefficients(d, delta);
    let recursion_residual_max = evens
        .windows(2)
        .map(|w| (w[1] * w[0] + alpha * w[1] - beta * w[0] - gamma).abs())
        .fold(0.0, f64::max);

    let (a_minus_1, b) = contraction_constants(d, delta, p);
    let z0 = 1.0 + delta - p;
    let k0 = std::f64::consts::LN_2 / 8.0 * (d / (d + 1.0)).sqrt() / delta.sqrt();
    let ratio = (d + 1.0) / d;
    let k_measure = (k0.floor() as usize).max(1).min(evens.len().saturating_sub(1).max(1));
    let c1 = (1..=k_measure)
        .filter_map(|kk| evens.get(kk).map(|&yk| (kk as f64, yk)))
        .map(|(kk, yk)| {
            let inv_z = 1.0 / (yk - p);
            ((inv_z - 1.0 - kk * ratio) / (ratio.powf(1.5) * kk * kk) / delta.sqrt()).abs()
        })
        .fold(0.0, f64::max);
    let n_threshold = if c1 > 0.0 { ((k0 / c1).ceil() as usize).max(1) } else { 1 };

    let limit = n_threshold.min(evens.len() - 1);
    let closed_form_max_rel_dev = (0..=limit)
        .map(|kk| {
            let growth = (kk as f64 * a_minus_1.ln_1p()).exp_m1();
            let cf = 1.0 / ((1.0 + growth) / z0 + b * growth) + p;
            ((cf - evens[kk]) / evens[kk]).abs()
        })
        .fold(0.0, f64::max);
    let y_approx_constant = (0..=limit)
        .map(|kk| (evens[kk] - d / (kk as f64 * (d + 1.0) + d)).abs() / root)
        .fold(0.0, f64::max);

    // The iterated limit differs from the root by the fixed point's
    // conditioning, ~ulp / (A − 1). Strict decrease is required only above
    // that floor; below it the ladder may stall but never climb.
    let floor = p * f64::EPSILON * (64.0 + 4.0 / a_minus_1);
    let y_monotone = evens.windows(2).all(|w| if w[1] - p > floor { w[1] < w[0] } else { w[1] <= w[0] })
        && evens.iter().all(|&v| v >= p - floor);

    let bracket: Vec<f64> = odds.iter().skip(n_threshold).map(|&v| -v / root).collect();
    let odd_bracket_min = bracket.iter().copied().fold(f64::INFINITY, f64::min);
    let odd_bracket_max = bracket.iter().copied().fold(0.0, f64::max);

    let c = BAND_CONSTANT;
    let mut bands = Vec::new();
    if cfg.n == 3 {
        bands.push(Band::new("q_sum1 / ((d/(d+1)) |log delta|)", q_sum1 / (d / (d + 1.0) * log), 1.0 / c, c));
        bands.push(Band::new("q_sum2 / ((1/(d+1)) |log delta|)", q_sum2 / (log / (d + 1.0)), 1.0 / c, c));
    } else {
        bands.push(Band::new("q_pow_sum1", q_sum1, 1.0 / c, c));
        bands.push(Band::new("q_pow_sum2", q_sum2, 1.0 / c, c));
    }
    bands.push(Band::new("Q1 (d+1)", sys.q1 * (d + 1.0), 1.0 / c, c));
    bands.push(Band::new("Q2 (d+1)/d", sys.q2 * (d + 1.0) / d, 1.0 / c, c));
    bands.push(Band::new("weighted_sum1", weighted_sum1, 1.0 / c, c));
    bands.push(Band::new("weighted_sum2", weighted_sum2, 1.0 / c, c));
    if !bracket.is_empty() {
        bands.push(Band::new("odd_bracket_min", odd_bracket_min, 1.0, f64::INFINITY));
    }
    let all_bands_pass = bands.iter().all(|b| b.pass);

    Ok(DiagnosticsReport {
        format_version: FORMAT_VERSION,
        config: cfg,
        d,
        delta,
        abs_log_delta: log,
        q_sum1,
        q_sum2,
        q1: sys.q1,
        q2: sys.q2,
        m: sys.m,
        weighted_sum1,
        weighted_sum2,
        fixed_point_over_r1: p,
        fixed_point_leading_order: lead,
        fixed_point_constant: (p - lead).abs() / delta,
        ladder_limit_deviation: ((evens[evens.len() - 1] - p) / p).abs(),
        recursion_residual_max,
        closed_form_max_rel_dev,
        closed_form_points: limit + 1,
        y_monotone,
        y_approx_constant,
        c1,
        n_threshold,
        a: 1.0 + a_minus_1,
        b,
        odd_bracket_min,
        odd_bracket_max,
        bands,
        all_bands_pass,
    })
}
