//! Spheres on the x₁-axis, sphere inversion, and the fixed points of the
//! composed reflections.
//!
//! The canonical placement puts `D₁ = B_{r1}((r1 + eps, 0, …))` and
//! `D₂ = B_{r2}((-(r2 + eps), 0, …))`, so the gap `[-eps, eps]` straddles the
//! origin. Arbitrary placements go through [`normalize_placement`] first.
//!
//! Points on the axis inside a sphere are often handled through their *depth*,
//! the distance from the sphere's gap-facing boundary point (`x - eps` in D₁,
//! `-eps - x` in D₂). Reflections written in depths avoid the cancellation
//! that absolute coordinates suffer when everything crowds into the gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidConfig("point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("point coordinates must be finite".into()));
        }
        Ok(Self { coords })
    }

    /// `(x1, 0, …, 0)` in ℝⁿ.
    pub fn on_axis(n: usize, x1: f64) -> Self {
        let mut coords = vec![0.0; n];
        coords[0] = x1;
        Self { coords }
    }

    pub fn origin(n: usize) -> Self {
        Self { coords: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn x1(&self) -> f64 {
        self.coords[0]
    }

    /// Squared distance from the x₁-axis.
    pub fn off_axis_norm_sq(&self) -> f64 {
        self.coords[1..].iter().map(|c| c * c).sum()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Point,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }
}

/// Two spheres `2·eps` apart on the x₁-axis in ℝⁿ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSphereConfig {
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub eps: f64,
}

impl TwoSphereConfig {
    pub fn new(n: usize, r1: f64, r2: f64, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("dimension n must be >= 2, got {n}")));
        }
        for (name, v) in [("r1", r1), ("r2", r2), ("eps", eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { n, r1, r2, eps })
    }

    pub fn c1(&self) -> Point {
        Point::on_axis(self.n, self.r1 + self.eps)
    }

    pub fn c2(&self) -> Point {
        Point::on_axis(self.n, -(self.r2 + self.eps))
    }

    pub fn sphere1(&self) -> Sphere {
        Sphere { center: self.c1(), radius: self.r1 }
    }

    pub fn sphere2(&self) -> Sphere {
        Sphere { center: self.c2(), radius: self.r2 }
    }

    /// Sphere `i ∈ {1, 2}`.
    pub fn sphere(&self, i: u8) -> Sphere {
        if i == 1 {
            self.sphere1()
        } else {
            self.sphere2()
        }
    }

    /// Radius ratio `r2 / r1`.
    pub fn d(&self) -> f64 {
        self.r2 / self.r1
    }

    /// Relative half-gap `eps / r1`.
    pub fn delta(&self) -> f64 {
        self.eps / self.r1
    }

    pub fn r_max(&self) -> f64 {
        self.r1.max(self.r2)
    }

    /// Harmonic-mean radius factor `r1 r2 / (r1 + r2)`.
    pub fn reduced_radius(&self) -> f64 {
        self.r1 * self.r2 / (self.r1 + self.r2)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.n, self.r1, self.r2, eps)
    }

    /// Uniform dilation by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(self.n, lambda * self.r1, lambda * self.r2, lambda * self.eps)
    }

    /// Same geometry in units of `r1`: `(1, d, delta)`.
    pub fn nondimensional(&self) -> Self {
        Self { n: self.n, r1: 1.0, r2: self.d(), eps: self.delta() }
    }

    /// Which closed sphere contains `x`, if any.
    pub fn containing_sphere(&self, x: &Point) -> Option<u8> {
        if x.distance(&self.c1()) <= self.r1 {
            Some(1)
        } else if x.distance(&self.c2()) <= self.r2 {
            Some(2)
        } else {
            None
        }
    }

    /// Reflects an axial point of D₁ at depth `a` through D₂.
    /// Returns the image depth in D₂ and the magnitude ratio `r2 / |c2 - x|`
    /// together with its complement `1 - ratio`.
    pub(crate) fn reflect_depth_1_to_2(&self, a: f64) -> DepthStep {
        let reach = a + 2.0 * self.eps;
        let denom = reach + self.r2;
        DepthStep {
            depth: self.r2 * reach / denom,
            ratio: self.r2 / denom,
            ratio_complement: reach / denom,
        }
    }

    /// Mirror of [`Self::reflect_depth_1_to_2`]: D₂ depth `b` through D₁.
    pub(crate) fn reflect_depth_2_to_1(&self, b: f64) -> DepthStep {
        let reach = b + 2.0 * self.eps;
        let denom = reach + self.r1;
        DepthStep {
            depth: self.r1 * reach / denom,
            ratio: self.r1 / denom,
            ratio_complement: reach / denom,
        }
    }

    /// Axial coordinate of a point at `depth` inside sphere `host`.
    pub(crate) fn axial_from_depth(&self, host: u8, depth: f64) -> f64 {
        if host == 1 {
            self.eps + depth
        } else {
            -self.eps - depth
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DepthStep {
    pub depth: f64,
    pub ratio: f64,
    pub ratio_complement: f64,
}

/// Sphere inversion `r²(p − c)/|p − c|² + c`.
pub fn reflect(p: &Point, s: &Sphere) -> Result<Point> {
    if p.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: p.dim() });
    }
    let diff: Vec<f64> = p.coords.iter().zip(&s.center.coords).map(|(a, c)| a - c).collect();
    let dist_sq: f64 = diff.iter().map(|v| v * v).sum();
    if dist_sq == 0.0 {
        return Err(Error::CenterReflection);
    }
    let scale = s.radius * s.radius / dist_sq;
    let coords = diff.iter().zip(&s.center.coords).map(|(v, c)| scale * v + c).collect();
    Ok(Point { coords })
}

/// The Apollonius factor `r / |p − c|` for an exterior point: every boundary
/// point `x` satisfies `|x − p| = |x − R(p)| · |p − c| / r`.
pub fn apollonius_ratio(p: &Point, s: &Sphere) -> Result<f64> {
    if p.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: p.dim() });
    }
    let distance = p.distance(&s.center);
    if distance <= s.radius {
        return Err(Error::PointNotExterior { distance, radius: s.radius });
    }
    Ok(s.radius / distance)
}

/// Fixed points of `R₁∘R₂` (in D₁) and `R₂∘R₁` (in D₂).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub p1: Point,
    pub p2: Point,
    /// `|R₁(R₂(p1)) − p1|`.
    pub residual1: f64,
    /// `|R₂(R₁(p2)) − p2|`.
    pub residual2: f64,
    /// Depth of `p1` below D₁'s gap-facing boundary point.
    pub depth1: f64,
    /// Depth of `p2` below D₂'s gap-facing boundary point.
    pub depth2: f64,
    /// Double reflections taken by the iterative cross-check.
    pub iterations: usize,
    /// `|p1_iterated − p1_closed_form|`.
    pub iteration_gap: f64,
}

impl FixedPointResult {
    pub fn p1_over_r1(&self, cfg: &TwoSphereConfig) -> f64 {
        self.p1.x1() / cfg.r1
    }
}

const FIXED_POINT_ITERATION_CAP: usize = 50_000_000;

/// Root `p/r1 > 0` of `y² + b y − c = 0` with the coefficients of the
/// double-reflection fixed-point equation.
pub fn fixed_point_quadratic_root(d: f64, delta: f64) -> f64 {
    let den = 1.0 + d + 2.0 * delta;
    let b = 2.0 * (d - 1.0) * delta / den;
    let c = (4.0 * d * delta + 3.0 * (1.0 + d) * delta * delta + 2.0 * delta.powi(3)) / den;
    let disc = (b * b + 4.0 * c).sqrt();
    if b >= 0.0 {
        2.0 * c / (b + disc)
    } else {
        (disc - b) / 2.0
    }
}

/// Leading-order small-gap approximation `2 √(d/(d+1)) √δ` of `p1/r1`.
pub fn fixed_point_leading_order(d: f64, delta: f64) -> f64 {
    2.0 * (d / (d + 1.0)).sqrt() * delta.sqrt()
}

pub fn fixed_points(cfg: &TwoSphereConfig) -> Result<FixedPointResult> {
    let y = fixed_point_quadratic_root(cfg.d(), cfg.delta());
    let depth1 = cfg.r1 * (y - cfg.delta());
    let depth2 = cfg.reflect_depth_1_to_2(depth1).depth;

    // Iterate R1∘R2 from c1; in exact arithmetic the depths decrease
    // monotonically, so stalling marks convergence to working precision.
    let mut a = cfg.r1;
    let mut iterations = 0;
    loop {
        let b = cfg.reflect_depth_1_to_2(a).depth;
        let next = cfg.reflect_depth_2_to_1(b).depth;
        iterations += 1;
        if next >= a {
            break;
        }
        a = next;
        if iterations >= FIXED_POINT_ITERATION_CAP {
            return Err(Error::NoConvergence { iterations });
        }
    }

    let p1 = Point::on_axis(cfg.n, cfg.axial_from_depth(1, depth1));
    let p2 = Point::on_axis(cfg.n, cfg.axial_from_depth(2, depth2));
    let (s1, s2) = (cfg.sphere1(), cfg.sphere2());
    let residual1 = reflect(&reflect(&p1, &s2)?, &s1)?.distance(&p1);
    let residual2 = reflect(&reflect(&p2, &s1)?, &s2)?.distance(&p2);

    Ok(FixedPointResult {
        p1,
        p2,
        residual1,
        residual2,
        depth1,
        depth2,
        iterations,
        iteration_gap: (a - depth1).abs(),
    })
}

/// Orientation-preserving isometry `x ↦ Q (x − origin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    origin: Vec<f64>,
    /// Row-major n×n orthogonal matrix with det +1.
    rotation: Vec<f64>,
    n: usize,
}

impl RigidMotion {
    pub fn apply(&self, x: &Point) -> Point {
        let n = self.n;
        let shifted: Vec<f64> = x.coords.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
        let coords = (0..n)
            .map(|i| (0..n).map(|j| self.rotation[i * n + j] * shifted[j]).sum())
            .collect();
        Point { coords }
    }

    pub fn apply_inverse(&self, x: &Point) -> Point {
        let n = self.n;
        let coords = (0..n)
            .map(|j| (0..n).map(|i| self.rotation[i * n + j] * x.coords[i]).sum::<f64>() + self.origin[j])
            .collect();
        Point { coords }
    }
}

/// Maps an arbitrary pair of disjoint spheres onto the canonical placement:
/// `a` becomes D₁ (centered on the positive x₁-axis), `b` becomes D₂.
pub fn normalize_placement(a: &Sphere, b: &Sphere) -> Result<(TwoSphereConfig, RigidMotion)> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.dim() });
    }
    let span = a.center.distance(&b.center);
    let eps = 0.5 * (span - a.radius - b.radius);
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig("spheres overlap or touch".into()));
    }
    let cfg = TwoSphereConfig::new(n, a.radius, b.radius, eps)?;

    let u: Vec<f64> = a.center.coords.iter().zip(&b.center.coords).map(|(x, y)| (x - y) / span).collect();
    let origin: Vec<f64> = b.center.coords.iter().zip(&u).map(|(c, ui)| c + (b.radius + eps) * ui).collect();

    // Householder reflection taking u to e1, then flip x2 to restore det = +1.
    let mut v = u.clone();
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut rotation = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            rotation[i * n + j] = if vv > 1e-30 { id - 2.0 * v[i] * v[j] / vv } else { id };
        }
    }
    if vv > 1e-30 {
        for j in 0..n {
            rotation[n + j] = -rotation[n + j];
        }
    }
    Ok((cfg, RigidMotion { origin, rotation, n }))
}
