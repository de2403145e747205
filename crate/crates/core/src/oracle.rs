//! Brute-force checks that share no code path with the image-charge sums:
//! surface quadrature of `∂_ν h` and `H ∂_ν h`, finite-difference Laplacians,
//! and sampling of `h` on the conductor boundaries.
//!
//! Near the gap `∂_ν h` concentrates on a cap of angular width `~ sqrt(eps/r)`,
//! which no fixed tensor rule resolves uniformly in `eps`. The default rule is
//! therefore a product of composite Gauss–Legendre panels in the polar angle,
//! graded geometrically toward both poles, with a transverse rule on the
//! equatorial sphere `S^{n-2}`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, TwoSphereConfig};
use crate::images::{unit_sphere_area, ChargeSystem};
use crate::par::{map_collect, Execution};
use crate::potential::{grad_h_eval_boundary, h_eval_boundary, HarmonicField, PlanarH};
use crate::summation::NeumaierSum;

/// A potential with constant values on both conductor boundaries.
pub trait ConductorPotential: Sync {
    fn config(&self) -> &TwoSphereConfig;
    fn value(&self, x: &Point) -> Result<f64>;
    fn gradient(&self, x: &Point) -> Result<Vec<f64>>;
}

impl ConductorPotential for ChargeSystem {
    fn config(&self) -> &TwoSphereConfig {
        &self.cfg
    }
    fn value(&self, x: &Point) -> Result<f64> {
        h_eval_boundary(self, x)
    }
    fn gradient(&self, x: &Point) -> Result<Vec<f64>> {
        grad_h_eval_boundary(self, x)
    }
}

impl ConductorPotential for PlanarH {
    fn config(&self) -> &TwoSphereConfig {
        &self.cfg
    }
    fn value(&self, x: &Point) -> Result<f64> {
        self.eval(x)
    }
    fn gradient(&self, x: &Point) -> Result<Vec<f64>> {
        self.grad(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuadratureScheme {
    /// Gauss–Legendre in the polar angle times a uniform azimuth (n = 3).
    ProductGauss { polar: usize, azimuth: usize },
    /// Uniform angles on the circle (n = 2).
    TrapezoidCircle { count: usize },
    /// Normalized Gaussian directions in antithetic pairs.
    MonteCarlo { count: usize, seed: u64 },
    /// Polar Gauss–Legendre panels halving toward both poles, times a
    /// transverse rule: `{±1}` (n = 2), uniform azimuth (n = 3), or seeded
    /// antithetic directions (n ≥ 4).
    GradedProduct { levels: usize, panel_points: usize, transverse: usize, seed: u64 },
}

/// A weighted rule on the unit sphere `S^{n-1}`.
///
/// Nodes are split into groups; for stochastic rules each group is an
/// independent unbiased estimate, which yields the standard error.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n: usize,
    pub nodes: Vec<(Point, f64)>,
    pub scheme: QuadratureScheme,
    groups: Vec<usize>,
    group_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureEstimate {
    pub value: f64,
    /// Zero for deterministic rules.
    pub std_error: f64,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn unit_vector(coords: Vec<f64>) -> Point {
    Point::new(coords).expect("finite unit vector")
}

fn gaussian_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Polar angles in `[0, π]` with weights `w · sin^{n-2} θ`.
fn polar_rule(n: usize, breakpoints: &[f64], panel_points: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(panel_points);
    let mut out = Vec::with_capacity(breakpoints.len() * panel_points);
    for pair in breakpoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in gx.iter().zip(&gw) {
            let theta = mid + half * x;
            out.push((theta, w * half * theta.sin().powi(n as i32 - 2)));
        }
    }
    out
}

impl SphereQuadrature {
    /// Default rule for flux and gap integrals at any separation.
    pub fn for_dimension(n: usize, seed: u64) -> Result<Self> {
        let transverse = match n {
            2 => 2,
            3 => 16,
            _ => 64,
        };
        Self::graded(n, 40, 16, transverse, seed)
    }

    pub fn graded(n: usize, levels: usize, panel_points: usize, transverse: usize, seed: u64) -> Result<Self> {
        if n < 2 || panel_points == 0 || transverse == 0 {
            return Err(Error::InvalidConfig("graded rule needs n >= 2 and positive node counts".into()));
        }
        let mut breaks = vec![0.0];
        breaks.extend((0..=levels).rev().map(|k| 0.5 * PI * 0.5f64.powi(k as i32)));
        let upper: Vec<f64> = breaks.iter().rev().skip(1).map(|t| PI - t).collect();
        breaks.extend(upper);
        let polar = polar_rule(n, &breaks, panel_points);
        let scheme = QuadratureScheme::GradedProduct { levels, panel_points, transverse, seed };

        let directions: Vec<Vec<f64>> = match n {
            2 => vec![vec![1.0], vec![-1.0]],
            3 => (0..transverse)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / transverse as f64;
                    vec![phi.cos(), phi.sin()]
                })
                .collect(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pairs = transverse.div_ceil(2);
                let mut dirs = Vec::with_capacity(2 * pairs);
                for _ in 0..pairs {
                    let u = gaussian_direction(&mut rng, n - 1);
                    dirs.push(u.iter().map(|c| -c).collect());
                    dirs.push(u);
                }
                dirs
            }
        };
        let transverse_weight = unit_sphere_area(n - 1) / directions.len() as f64;
        let stochastic = n >= 4;
        let mut nodes = Vec::with_capacity(polar.len() * directions.len());
        let mut groups = Vec::with_capacity(nodes.capacity());
        for &(theta, w) in &polar {
            let (s, c) = theta.sin_cos();
            for (k, dir) in directions.iter().enumerate() {
                let mut coords = Vec::with_capacity(n);
                coords.push(c);
                coords.extend(dir.iter().map(|d| s * d));
                nodes.push((unit_vector(coords), w * transverse_weight));
                groups.push(if stochastic { k / 2 } else { 0 });
            }
        }
        let group_count = if stochastic { directions.len() / 2 } else { 1 };
        Ok(Self { n, nodes, scheme, groups, group_count })
    }

    /// Gauss–Legendre in the polar angle times a uniform azimuth on S².
    pub fn product_gauss(polar: usize, azimuth: usize) -> Result<Self> {
        if polar == 0 || azimuth == 0 {
            return Err(Error::InvalidConfig("product rule needs positive node counts".into()));
        }
        let (gx, gw) = gauss_legendre(polar);
        let mut nodes = Vec::with_capacity(polar * azimuth);
        let dphi = 2.0 * PI / azimuth as f64;
        for (t, w) in gx.iter().zip(&gw) {
            let s = (1.0 - t * t).sqrt();
            for k in 0..azimuth {
                let phi = dphi * k as f64;
                nodes.push((unit_vector(vec![*t, s * phi.cos(), s * phi.sin()]), w * dphi));
            }
        }
        let groups = vec![0; nodes.len()];
        Ok(Self { n: 3, nodes, scheme: QuadratureScheme::ProductGauss { polar, azimuth }, groups, group_count: 1 })
    }

    pub fn trapezoid_circle(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("trapezoid rule needs a positive node count".into()));
        }
        let w = 2.0 * PI / count as f64;
        let nodes: Vec<(Point, f64)> = (0..count)
            .map(|k| {
                let phi = w * k as f64;
                (unit_vector(vec![phi.cos(), phi.sin()]), w)
            })
            .collect();
        let groups = vec![0; count];
        Ok(Self { n: 2, nodes, scheme: QuadratureScheme::TrapezoidCircle { count }, groups, group_count: 1 })
    }

    /// Equal-weight Gaussian directions in antithetic pairs.
    pub fn monte_carlo(n: usize, count: usize, seed: u64) -> Result<Self> {
        if n < 2 || count < 4 {
            return Err(Error::InvalidConfig("Monte Carlo rule needs n >= 2 and at least 4 nodes".into()));
        }
        let pairs = count.div_ceil(2);
        let w = unit_sphere_area(n) / (2 * pairs) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(2 * pairs);
        let mut groups = Vec::with_capacity(2 * pairs);
        for g in 0..pairs {
            let u = gaussian_direction(&mut rng, n);
            nodes.push((unit_vector(u.iter().map(|c| -c).collect()), w));
            nodes.push((unit_vector(u), w));
            groups.extend([g, g]);
        }
        Ok(Self { n, nodes, scheme: QuadratureScheme::MonteCarlo { count: 2 * pairs, seed }, groups, group_count: pairs })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_stochastic(&self) -> bool {
        self.group_count > 1
    }

    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| *w).collect::<NeumaierSum>().value()
    }

    /// `∫_{S^{n-1}} f`. Node values are computed in `exec` mode and reduced
    /// in node order.
    pub fn integrate<F>(&self, exec: Execution, f: F) -> Result<QuadratureEstimate>
    where
        F: Fn(&Point) -> Result<f64> + Sync + Send,
    {
        let values = map_collect(exec, &self.nodes, |(u, w)| f(u).map(|v| v * w));
        let mut per_group = vec![NeumaierSum::new(); self.group_count];
        let mut total = NeumaierSum::new();
        for (v, &g) in values.into_iter().zip(&self.groups) {
            let v = v?;
            per_group[g].add(v);
            total.add(v);
        }
        let value = total.value();
        let std_error = if self.group_count > 1 {
            let g = self.group_count as f64;
            let var: f64 = per_group.iter().map(|s| (g * s.value() - value).powi(2)).sum::<f64>() / (g - 1.0);
            (var / g).sqrt()
        } else {
            0.0
        };
        Ok(QuadratureEstimate { value, std_error })
    }
}

fn surface_point(cfg: &TwoSphereConfig, sphere: u8, u: &Point) -> Point {
    let s = cfg.sphere(sphere);
    let coords = s.center.coords().iter().zip(u.coords()).map(|(c, ui)| c + s.radius * ui).collect();
    Point::new(coords).expect("finite surface point")
}

fn check_sphere(sphere: u8) -> Result<()> {
    if sphere == 1 || sphere == 2 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("sphere index must be 1 or 2, got {sphere}")))
    }
}

fn normal_integral<P, F>(
    pot: &P,
    sphere: u8,
    quad: &SphereQuadrature,
    exec: Execution,
    weight: F,
) -> Result<QuadratureEstimate>
where
    P: ConductorPotential + ?Sized,
    F: Fn(&Point) -> f64 + Sync + Send,
{
    check_sphere(sphere)?;
    let cfg = *pot.config();
    if quad.n != cfg.n {
        return Err(Error::DimensionMismatch { expected: cfg.n, got: quad.n });
    }
    let jacobian = cfg.sphere(sphere).radius.powi(cfg.n as i32 - 1);
    let est = quad.integrate(exec, |u| {
        let x = surface_point(&cfg, sphere, u);
        let g = pot.gradient(&x)?;
        let dn: f64 = g.iter().zip(u.coords()).map(|(a, b)| a * b).sum();
        Ok(dn * weight(&x))
    })?;
    Ok(QuadratureEstimate { value: est.value * jacobian, std_error: est.std_error * jacobian })
}

/// `∫_{∂D_i} ∂_ν h dS` with the outward normal of `D_i`; `+1` for `i = 1`, `-1` for `i = 2`.
pub fn quadrature_flux<P>(pot: &P, sphere: u8, quad: &SphereQuadrature, exec: Execution) -> Result<QuadratureEstimate>
where
    P: ConductorPotential + ?Sized,
{
    normal_integral(pot, sphere, quad, exec, |_| 1.0)
}

/// `∫_{∂D₁} ∂_ν h H dS + ∫_{∂D₂} ∂_ν h H dS`.
pub fn quadrature_potential_difference<P>(
    pot: &P,
    field: &HarmonicField,
    quad: &SphereQuadrature,
    exec: Execution,
) -> Result<QuadratureEstimate>
where
    P: ConductorPotential + ?Sized,
{
    let n = pot.config().n;
    if field.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: field.dim() });
    }
    let a = normal_integral(pot, 1, quad, exec, |x| field.eval(x.coords()))?;
    let b = normal_integral(pot, 2, quad, exec, |x| field.eval(x.coords()))?;
    Ok(QuadratureEstimate { value: a.value + b.value, std_error: a.std_error.hypot(b.std_error) })
}

/// Central-difference Laplacian `Σ_i (f(x+s e_i) − 2f(x) + f(x−s e_i)) / s²`.
///
/// With `obstacles`, the stencil must stay farther than `2·step` from both spheres.
pub fn fd_laplacian<F>(field: F, x: &Point, step: f64, obstacles: Option<&TwoSphereConfig>) -> Result<f64>
where
    F: Fn(&Point) -> Result<f64>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::StepTooLarge { step });
    }
    if let Some(cfg) = obstacles {
        if x.dim() != cfg.n {
            return Err(Error::DimensionMismatch { expected: cfg.n, got: x.dim() });
        }
        if distance_to_conductors(cfg, x) <= 2.0 * step {
            return Err(Error::StepTooLarge { step });
        }
    }
    let f0 = field(x)?;
    let mut acc = NeumaierSum::new();
    for i in 0..x.dim() {
        let mut plus = x.coords().to_vec();
        let mut minus = plus.clone();
        plus[i] += step;
        minus[i] -= step;
        let fp = field(&Point::new(plus)?)?;
        let fm = field(&Point::new(minus)?)?;
        acc.add(((fp - f0) + (fm - f0)) / (step * step));
    }
    Ok(acc.value())
}

/// `fd_laplacian` at each step, in order.
pub fn fd_step_study<F>(field: F, x: &Point, steps: &[f64], obstacles: Option<&TwoSphereConfig>) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&Point) -> Result<f64>,
{
    steps.iter().map(|&s| Ok((s, fd_laplacian(&field, x, s, obstacles)?))).collect()
}

/// Distance from `x` to the closer conductor surface; negative inside.
pub fn distance_to_conductors(cfg: &TwoSphereConfig, x: &Point) -> f64 {
    let d1 = x.distance(&cfg.c1()) - cfg.r1;
    let d2 = x.distance(&cfg.c2()) - cfg.r2;
    d1.min(d2)
}

/// `Σ |w| |x − c|^{2−n} / ((n−2) ω_n) / dist²`: the size of the individual
/// charge contributions to `Δh` at `x`, against which a finite-difference
/// Laplacian is judged.
pub fn harmonicity_scale(sys: &ChargeSystem, x: &Point) -> f64 {
    let n = sys.cfg.n as i32;
    let perp = x.off_axis_norm_sq();
    let abs_sum: f64 = sys
        .sources()
        .iter()
        .map(|s| {
            let dx = x.x1() - s.axial_position;
            s.weight.abs() / (dx * dx + perp).sqrt().powi(n - 2)
        })
        .collect::<NeumaierSum>()
        .value();
    let dist = distance_to_conductors(&sys.cfg, x);
    abs_sum / (f64::from(n - 2) * sys.omega_n) / (dist * dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySample {
    pub mean: f64,
    pub max_abs_deviation: f64,
}

/// Samples the potential on `∂D_i`: golden-angle spiral (n = 3), uniform
/// angles with a seeded offset (n = 2), normalized Gaussians (n ≥ 4).
pub fn boundary_constancy<P>(pot: &P, sphere: u8, sample_count: usize, seed: u64) -> Result<BoundarySample>
where
    P: ConductorPotential + ?Sized,
{
    check_sphere(sphere)?;
    if sample_count < 10 {
        return Err(Error::InvalidConfig(format!("sample_count must be >= 10, got {sample_count}")));
    }
    let cfg = *pot.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = match cfg.n {
        2 => {
            let offset: f64 = rand::Rng::gen_range(&mut rng, 0.0..1.0);
            (0..sample_count)
                .map(|k| {
                    let phi = 2.0 * PI * (k as f64 + offset) / sample_count as f64;
                    vec![phi.cos(), phi.sin()]
                })
                .collect()
        }
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let m = sample_count as f64;
            (0..sample_count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / m;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    vec![z, r * phi.cos(), r * phi.sin()]
                })
                .collect()
        }
        n => (0..sample_count).map(|_| gaussian_direction(&mut rng, n)).collect(),
    };
    let values = dirs
        .into_iter()
        .map(|u| pot.value(&surface_point(&cfg, sphere, &unit_vector(u))))
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().copied().collect::<NeumaierSum>().value() / values.len() as f64;
    let max_abs_deviation = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    Ok(BoundarySample { mean, max_abs_deviation })
}
