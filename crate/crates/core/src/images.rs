//! The two image-charge ladders and the normalizers that turn them into the
//! unit-flux potential `h`.
//!
//! Family 1 seeds a unit charge at `c1` and alternately reflects it through
//! D₂ and D₁; family 2 mirrors this from `c2`. Every charge lies on the
//! x₁-axis, so positions are stored as scalars. Ladders are built in units of
//! `r1` (so magnitudes and normalizers are exactly scale-free) and positions
//! are rescaled afterwards.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{fixed_points, FixedPointResult, TwoSphereConfig};
use crate::summation::NeumaierSum;
use crate::FORMAT_VERSION;

/// Default relative truncation tolerance on `Σ q^{n-2}`.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Hard cap on the number of charges per ladder.
pub const MAX_CHARGES: usize = 10_000_000;
/// Smallest supported `delta = eps / r1`.
pub const DELTA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageCharge {
    pub family: u8,
    pub index: usize,
    /// x₁-coordinate; off-axis coordinates are zero.
    pub axial_position: f64,
    /// `q_{s,m}` (not raised to `n - 2`).
    pub magnitude: f64,
    /// `(-1)^m`.
    pub sign: i8,
    pub host: u8,
    /// Distance from the host sphere's gap-facing boundary point.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeLadder {
    pub family: u8,
    pub charges: Vec<ImageCharge>,
    /// Upper bound on the omitted `Σ_{m > last} q_{s,m}^{n-2}`.
    pub tail_bound: f64,
    /// Largest observed ratio `ρ_{s,j}`, `j >= 1`.
    pub rho_max: f64,
    /// Limit of the single-step ratios; every `ρ_{s,j}` stays below it.
    pub rho_limit: f64,
    /// `Σ_k q_{s,2k}^{n-2}` over the truncated ladder.
    pub even_power_sum: f64,
    /// `Σ_k q_{s,2k+1}^{n-2}` over the truncated ladder.
    pub odd_power_sum: f64,
    /// `Q_s = Σ_m (-1)^m q_{s,m}^{n-2}`, accumulated pairwise.
    pub alternating_sum: f64,
}

impl ChargeLadder {
    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn power_sum(&self) -> f64 {
        self.even_power_sum + self.odd_power_sum
    }
}

/// `1 - (1 - c)^k` without cancellation.
fn one_minus_pow_from_complement(complement: f64, k: i32) -> f64 {
    -((k as f64) * (-complement).ln_1p()).exp_m1()
}

pub fn build_ladder(cfg: &TwoSphereConfig, family: u8, tol: f64) -> Result<ChargeLadder> {
    build_ladder_with_cap(cfg, family, tol, MAX_CHARGES)
}

pub fn build_ladder_with_cap(cfg: &TwoSphereConfig, family: u8, tol: f64, cap: usize) -> Result<ChargeLadder> {
    if cfg.n < 3 {
        return Err(Error::InvalidConfig(
            "n = 2: closed form has no ladder (image ladders need n >= 3)".into(),
        ));
    }
    if family != 1 && family != 2 {
        return Err(Error::InvalidConfig(format!("family must be 1 or 2, got {family}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!("tol must lie in (0, 1), got {tol}")));
    }
    if cfg.delta() < DELTA_FLOOR {
        return Err(Error::PrecisionRefused { delta: cfg.delta(), floor: DELTA_FLOOR });
    }

    let nd = cfg.nondimensional();
    let k = (cfg.n - 2) as i32;
    let fp = fixed_points(&nd)?;

    // Ratios increase monotonically toward their values at the fixed points.
    let lim_into_2 = nd.reflect_depth_1_to_2(fp.depth1);
    let lim_into_1 = nd.reflect_depth_2_to_1(fp.depth2);
    let lim = if lim_into_2.ratio >= lim_into_1.ratio { lim_into_2 } else { lim_into_1 };
    let tail_ratio = lim.ratio.powi(k);
    let tail_factor = tail_ratio / one_minus_pow_from_complement(lim.ratio_complement, k);
    let crude_bound = 1.0 / (1.0 + 2.0 * nd.eps / nd.r_max());

    let mut charges = Vec::new();
    let mut host = family;
    let mut depth = if family == 1 { nd.r1 } else { nd.r2 };
    let mut q = 1.0_f64;
    let mut rho_max = 0.0_f64;
    let mut even = NeumaierSum::new();
    let mut odd = NeumaierSum::new();
    let mut alternating = NeumaierSum::new();
    let mut m = 0usize;

    let push = |charges: &mut Vec<ImageCharge>, m: usize, host: u8, depth: f64, q: f64| {
        charges.push(ImageCharge {
            family,
            index: m,
            axial_position: cfg.r1 * nd.axial_from_depth(host, depth),
            magnitude: q,
            sign: if m.is_multiple_of(2) { 1 } else { -1 },
            host,
            depth: cfg.r1 * depth,
        });
    };
    push(&mut charges, 0, host, depth, q);
    even.add(1.0);

    let tail_bound = loop {
        let step = if host == 1 { nd.reflect_depth_1_to_2(depth) } else { nd.reflect_depth_2_to_1(depth) };
        debug_assert!(step.ratio <= crude_bound * (1.0 + 1e-14));
        debug_assert!(step.ratio <= lim.ratio * (1.0 + 1e-12));
        rho_max = rho_max.max(step.ratio);

        let q_prev_pow = q.powi(k);
        q *= step.ratio;
        depth = step.depth;
        host = 3 - host;
        m += 1;
        let q_pow = q.powi(k);
        push(&mut charges, m, host, depth, q);

        if m % 2 == 1 {
            odd.add(q_pow);
            alternating.add(q_prev_pow * one_minus_pow_from_complement(step.ratio_complement, k));
            let tail = q_pow * tail_factor;
            if tail < tol * (even.value() + odd.value()) {
                break tail;
            }
        } else {
            even.add(q_pow);
        }
        if charges.len() >= cap {
            return Err(Error::TruncationOverflow { cap, tol });
        }
    };

    Ok(ChargeLadder {
        family,
        charges,
        tail_bound,
        rho_max,
        rho_limit: lim.ratio,
        even_power_sum: even.value(),
        odd_power_sum: odd.value(),
        alternating_sum: alternating.value(),
    })
}

/// Surface area `ω_n = 2 π^{n/2} / Γ(n/2)` of the unit sphere in ℝⁿ.
pub fn unit_sphere_area(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let (mut area, mut k) = if n.is_multiple_of(2) { (2.0 * pi, 2) } else { (2.0, 1) };
    while k < n {
        area *= 2.0 * pi / k as f64;
        k += 2;
    }
    area
}

/// A weighted point source of `h`: `h(x) = Σ w |x - c|^{2-n} / ((2-n) ω_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Source {
    pub axial_position: f64,
    pub weight: f64,
    pub host: u8,
}

/// The assembled, truncated representation of `h`.
#[derive(Debug, Clone)]
pub struct ChargeSystem {
    pub cfg: TwoSphereConfig,
    pub ladder1: ChargeLadder,
    pub ladder2: ChargeLadder,
    pub q1: f64,
    pub q2: f64,
    pub m: f64,
    pub omega_n: f64,
    pub truncation_tol: f64,
    pub fixed_points: FixedPointResult,
    sources: Vec<Source>,
}

pub fn assemble(cfg: &TwoSphereConfig, tol: f64) -> Result<ChargeSystem> {
    assemble_with_cap(cfg, tol, MAX_CHARGES)
}

pub fn assemble_with_cap(cfg: &TwoSphereConfig, tol: f64, cap: usize) -> Result<ChargeSystem> {
    let ladder1 = build_ladder_with_cap(cfg, 1, tol, cap)?;
    let ladder2 = build_ladder_with_cap(cfg, 2, tol, cap)?;
    let q1 = ladder1.alternating_sum;
    let q2 = ladder2.alternating_sum;
    let m = q2 * ladder1.even_power_sum + q1 * ladder2.odd_power_sum;
    let mut sys = ChargeSystem {
        cfg: *cfg,
        fixed_points: fixed_points(cfg)?,
        ladder1,
        ladder2,
        q1,
        q2,
        m,
        omega_n: unit_sphere_area(cfg.n),
        truncation_tol: tol,
        sources: Vec::new(),
    };
    sys.rebuild_sources();
    Ok(sys)
}

impl ChargeSystem {
    fn rebuild_sources(&mut self) {
        let k = (self.cfg.n - 2) as i32;
        let (c1, c2) = (self.q2 / self.m, -self.q1 / self.m);
        let mut sources = Vec::with_capacity(self.ladder1.len() + self.ladder2.len());
        for (ladder, coef) in [(&self.ladder1, c1), (&self.ladder2, c2)] {
            sources.extend(ladder.charges.iter().map(|c| Source {
                axial_position: c.axial_position,
                weight: coef * f64::from(c.sign) * c.magnitude.powi(k),
                host: c.host,
            }));
        }
        // smallest contributions first
        sources.sort_by(|a, b| a.weight.abs().total_cmp(&b.weight.abs()));
        self.sources = sources;
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn ladder(&self, family: u8) -> &ChargeLadder {
        if family == 1 {
            &self.ladder1
        } else {
            &self.ladder2
        }
    }

    /// Bound on the total `|weight|` carried by the omitted charges.
    pub fn weight_tail_bound(&self) -> f64 {
        (self.q2.abs() * self.ladder1.tail_bound + self.q1.abs() * self.ladder2.tail_bound) / self.m
    }

    /// Charges inside sphere `i` with their signed weights in `h`'s numerator.
    /// The weights sum to `+1` over D₁ and `-1` over D₂.
    pub fn interior_charge_weights(&self, sphere_index: u8) -> Result<Vec<(f64, f64)>> {
        if sphere_index != 1 && sphere_index != 2 {
            return Err(Error::InvalidConfig(format!("sphere index must be 1 or 2, got {sphere_index}")));
        }
        let k = (self.cfg.n - 2) as i32;
        let mut out = Vec::new();
        for (ladder, coef) in [(&self.ladder1, self.q2 / self.m), (&self.ladder2, -self.q1 / self.m)] {
            out.extend(
                ladder
                    .charges
                    .iter()
                    .filter(|c| c.host == sphere_index)
                    .map(|c| (c.axial_position, coef * f64::from(c.sign) * c.magnitude.powi(k))),
            );
        }
        Ok(out)
    }

    /// Fault injection for the verification harness: scales `Q2` without
    /// renormalizing `M`, which breaks the unit-flux condition.
    #[doc(hidden)]
    pub fn perturb_normalizer(&mut self, relative: f64) {
        self.q2 *= 1.0 + relative;
        self.rebuild_sources();
    }

    pub fn to_json(&self) -> serde_json::Value {
        let charges: Vec<_> = self
            .ladder1
            .charges
            .iter()
            .chain(&self.ladder2.charges)
            .map(|c| json!({"family": c.family, "m": c.index, "x": c.axial_position, "q": c.magnitude, "sign": c.sign}))
            .collect();
        json!({
            "format_version": FORMAT_VERSION,
            "config": self.cfg,
            "charges": charges,
            "Q1": self.q1,
            "Q2": self.q2,
            "M": self.m,
            "omega_n": self.omega_n,
            "tail_bounds": [self.ladder1.tail_bound, self.ladder2.tail_bound],
        })
    }
}
