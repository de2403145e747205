//! Evaluation of `h`, its gradient, and the potential gap
//! `u|∂D₁ − u|∂D₂` for an applied harmonic field `H`.
//!
//! The gap never needs the exterior field `u` itself: by Green's identity it
//! equals `Σ_D₁ ∫ ∂_ν h · H + Σ_D₂ ∫ ∂_ν h · H`, and each flux integral of a
//! point-charge potential against a function harmonic inside the sphere
//! collapses onto the charge location. So the gap is the weighted sum of `H`
//! over the interior image charges.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{fixed_points, Point, TwoSphereConfig};
use crate::images::{assemble, ChargeSystem};
use crate::summation::NeumaierSum;

type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An applied potential `H`, harmonic on all of ℝⁿ.
#[derive(Clone)]
pub enum HarmonicField {
    /// `H(x) = a · x`.
    Linear(Vec<f64>),
    /// Caller-supplied harmonic function. Harmonicity is taken on trust
    /// unless checked with [`HarmonicField::verify_harmonic`].
    Custom {
        dim: usize,
        evaluate: Arc<FieldFn>,
        declared_harmonic: bool,
    },
}

impl fmt::Debug for HarmonicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(a) => f.debug_tuple("Linear").field(a).finish(),
            Self::Custom { dim, declared_harmonic, .. } => f
                .debug_struct("Custom")
                .field("dim", dim)
                .field("declared_harmonic", declared_harmonic)
                .finish_non_exhaustive(),
        }
    }
}

impl HarmonicField {
    pub fn linear(a: Vec<f64>) -> Self {
        Self::Linear(a)
    }

    /// `H = x_axis` (1-based axis index) in ℝⁿ.
    pub fn coordinate(n: usize, axis: usize) -> Self {
        let mut a = vec![0.0; n];
        a[axis - 1] = 1.0;
        Self::Linear(a)
    }

    pub fn custom<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom { dim, evaluate: Arc::new(f), declared_harmonic: true }
    }

    /// Custom field that must pass [`Self::verify_harmonic`] before use.
    pub fn custom_verified<F>(dim: usize, f: F, seed: u64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let field = Self::custom(dim, f);
        field.verify_harmonic(seed)?;
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear(a) => a.len(),
            Self::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear(a) => a.iter().zip(x).map(|(ai, xi)| ai * xi).sum(),
            Self::Custom { evaluate, .. } => evaluate(x),
        }
    }

    /// `H` at `(x1, 0, …, 0)`.
    pub fn eval_axial(&self, x1: f64) -> f64 {
        match self {
            Self::Linear(a) => a[0] * x1,
            Self::Custom { dim, evaluate, .. } => {
                let mut x = vec![0.0; *dim];
                x[0] = x1;
                evaluate(&x)
            }
        }
    }

    /// Finite-difference Laplacian spot-check at 20 seeded points in `[-2, 2]ⁿ`.
    pub fn verify_harmonic(&self, seed: u64) -> Result<()> {
        if matches!(self, Self::Linear(_)) {
            return Ok(());
        }
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-3;
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f0 = self.eval(&x);
            let mut lap = 0.0;
            let mut scale = 0.0;
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let second = (self.eval(&xp) - 2.0 * f0 + self.eval(&xm)) / (h * h);
                lap += second;
                scale += second.abs();
            }
            let noise = 64.0 * f64::EPSILON * (1.0 + f0.abs()) * n as f64 / (h * h);
            if lap.abs() > 1e-6 * scale + noise {
                return Err(Error::NotHarmonic { laplacian: lap.abs() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    ChargeSum,
    FixedPoint2d,
    QuadratureOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialDifferenceResult {
    /// `u|∂D₁ − u|∂D₂`.
    pub value: f64,
    pub method: GapMethod,
    /// Bound on the contribution of the truncated image charges.
    pub tail_error: f64,
    pub config: TwoSphereConfig,
}

/// Tolerance for treating a point as lying on a sphere rather than inside it.
const BOUNDARY_SLACK: f64 = 1e-12;

fn check_exterior(cfg: &TwoSphereConfig, x: &Point, allow_boundary: bool) -> Result<()> {
    if x.dim() != cfg.n {
        return Err(Error::DimensionMismatch { expected: cfg.n, got: x.dim() });
    }
    for i in [1u8, 2] {
        let s = cfg.sphere(i);
        let dist = x.distance(&s.center);
        let inside = if allow_boundary { dist < s.radius * (1.0 - BOUNDARY_SLACK) } else { dist <= s.radius };
        if inside {
            return Err(Error::PointInsideConductor { sphere: i });
        }
    }
    Ok(())
}

fn h_unchecked(sys: &ChargeSystem, x: &Point) -> f64 {
    let n = sys.cfg.n as i32;
    let perp = x.off_axis_norm_sq();
    let x1 = x.x1();
    let mut acc = NeumaierSum::new();
    for s in sys.sources() {
        let dx = x1 - s.axial_position;
        let r = (dx * dx + perp).sqrt();
        acc.add(s.weight / r.powi(n - 2));
    }
    acc.value() / ((2 - n) as f64 * sys.omega_n)
}

fn grad_unchecked(sys: &ChargeSystem, x: &Point) -> Vec<f64> {
    let n = sys.cfg.n;
    let perp = x.off_axis_norm_sq();
    let x1 = x.x1();
    // Axisymmetry: ∇h = g_axial e1 + g_radial (x - x1 e1).
    let mut axial = NeumaierSum::new();
    let mut radial = NeumaierSum::new();
    for s in sys.sources() {
        let dx = x1 - s.axial_position;
        let r2 = dx * dx + perp;
        let inv = s.weight / (r2.powi(n as i32 / 2) * if n % 2 == 1 { r2.sqrt() } else { 1.0 });
        axial.add(inv * dx);
        radial.add(inv);
    }
    let scale = 1.0 / sys.omega_n;
    let mut g: Vec<f64> = x.coords().iter().map(|c| c * radial.value() * scale).collect();
    g[0] = axial.value() * scale;
    g
}

/// `h(x)` at a point strictly outside both conductors.
pub fn h_eval(sys: &ChargeSystem, x: &Point) -> Result<f64> {
    check_exterior(&sys.cfg, x, false)?;
    Ok(h_unchecked(sys, x))
}

/// `h(x)` on or outside the conductor boundaries.
pub fn h_eval_boundary(sys: &ChargeSystem, x: &Point) -> Result<f64> {
    check_exterior(&sys.cfg, x, true)?;
    Ok(h_unchecked(sys, x))
}

/// `h(x)` together with an estimate of the truncation error at `x`.
pub fn h_eval_with_error(sys: &ChargeSystem, x: &Point) -> Result<(f64, f64)> {
    let value = h_eval_boundary(sys, x)?;
    let n = sys.cfg.n as i32;
    let fp = &sys.fixed_points;
    let dist = x.distance(&fp.p1).min(x.distance(&fp.p2));
    let err = sys.weight_tail_bound() / (f64::from(n - 2) * sys.omega_n * dist.powi(n - 2));
    Ok((value, err))
}

/// `∇h(x)` at a point strictly outside both conductors.
pub fn grad_h_eval(sys: &ChargeSystem, x: &Point) -> Result<Vec<f64>> {
    check_exterior(&sys.cfg, x, false)?;
    Ok(grad_unchecked(sys, x))
}

/// `∇h(x)` on or outside the conductor boundaries.
pub fn grad_h_eval_boundary(sys: &ChargeSystem, x: &Point) -> Result<Vec<f64>> {
    check_exterior(&sys.cfg, x, true)?;
    Ok(grad_unchecked(sys, x))
}

/// The potential gap from the interior image charges.
pub fn potential_difference(sys: &ChargeSystem, field: &HarmonicField) -> Result<PotentialDifferenceResult> {
    let n = sys.cfg.n;
    if field.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: field.dim() });
    }
    // Total weight is zero, so shifting H(0) to zero changes nothing but roundoff.
    let shift = field.eval(&vec![0.0; n]);
    let shifted = |x1: f64| field.eval_axial(x1) - shift;
    let value = sys
        .sources()
        .iter()
        .map(|s| s.weight * shifted(s.axial_position))
        .collect::<NeumaierSum>()
        .value();

    let fp = &sys.fixed_points;
    let mut h_max = shifted(fp.p1.x1()).abs().max(shifted(fp.p2.x1()).abs());
    for ladder in [&sys.ladder1, &sys.ladder2] {
        if let Some(last) = ladder.charges.last() {
            h_max = h_max.max(shifted(last.axial_position).abs());
        }
    }
    Ok(PotentialDifferenceResult {
        value,
        method: GapMethod::ChargeSum,
        tail_error: sys.weight_tail_bound() * h_max,
        config: sys.cfg,
    })
}

/// The planar gap `H(p1) − H(p2)` from the two fixed points.
pub fn potential_difference_2d(cfg: &TwoSphereConfig, field: &HarmonicField) -> Result<PotentialDifferenceResult> {
    if cfg.n != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: cfg.n });
    }
    if field.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: field.dim() });
    }
    let fp = fixed_points(cfg)?;
    let value = field.eval(fp.p1.coords()) - field.eval(fp.p2.coords());
    Ok(PotentialDifferenceResult { value, method: GapMethod::FixedPoint2d, tail_error: 0.0, config: *cfg })
}

/// The planar `h = (1/2π) log(|x − p1| / |x − p2|)` with its fixed points
/// resolved once.
#[derive(Debug, Clone)]
pub struct PlanarH {
    pub cfg: TwoSphereConfig,
    pub p1: Point,
    pub p2: Point,
}

impl PlanarH {
    pub fn new(cfg: &TwoSphereConfig) -> Result<Self> {
        if cfg.n != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: cfg.n });
        }
        let fp = fixed_points(cfg)?;
        Ok(Self { cfg: *cfg, p1: fp.p1, p2: fp.p2 })
    }

    fn pole_distances(&self, x: &Point) -> Result<(f64, f64)> {
        if x.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.dim() });
        }
        let (d1, d2) = (x.distance(&self.p1), x.distance(&self.p2));
        if d1 == 0.0 || d2 == 0.0 {
            return Err(Error::EvaluationAtPole);
        }
        check_exterior(&self.cfg, x, true)?;
        Ok((d1, d2))
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        let (d1, d2) = self.pole_distances(x)?;
        Ok((d1 / d2).ln() / (2.0 * std::f64::consts::PI))
    }

    pub fn grad(&self, x: &Point) -> Result<Vec<f64>> {
        self.pole_distances(x)?;
        let mut g = vec![0.0; 2];
        for (p, sign) in [(&self.p1, 1.0), (&self.p2, -1.0)] {
            let dx = x.coords()[0] - p.coords()[0];
            let dy = x.coords()[1] - p.coords()[1];
            let r2 = dx * dx + dy * dy;
            g[0] += sign * dx / r2;
            g[1] += sign * dy / r2;
        }
        let scale = 1.0 / (2.0 * std::f64::consts::PI);
        Ok(g.into_iter().map(|v| v * scale).collect())
    }
}

/// Closed-form planar `h`.
pub fn h_eval_2d(cfg: &TwoSphereConfig, x: &Point) -> Result<f64> {
    PlanarH::new(cfg)?.eval(x)
}

/// Gradient of the planar closed form.
pub fn grad_h_eval_2d(cfg: &TwoSphereConfig, x: &Point) -> Result<Vec<f64>> {
    PlanarH::new(cfg)?.grad(x)
}

/// Mean-value certificate `|Δu| / (2 eps)`: some point of the gap carries a
/// field at least this strong.
pub fn gradient_lower_bound(result: &PotentialDifferenceResult) -> f64 {
    result.value.abs() / (2.0 * result.config.eps)
}

/// Potential gap for any dimension: closed form for `n = 2`, image charges otherwise.
pub fn compute_gap(cfg: &TwoSphereConfig, field: &HarmonicField, tol: f64) -> Result<PotentialDifferenceResult> {
    if cfg.n == 2 {
        potential_difference_2d(cfg, field)
    } else {
        potential_difference(&assemble(cfg, tol)?, field)
    }
}
