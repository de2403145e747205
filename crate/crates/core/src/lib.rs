//! Image-charge construction of the auxiliary potential `h` for two closely
//! spaced spherical perfect conductors, the potential gap it yields for an
//! applied harmonic field, and tooling to measure how that gap and the
//! field between the spheres blow up as the separation closes.
//!
//! - [`geometry`]: sphere inversion, Apollonius ratio, fixed points of the
//!   double reflections.
//! - [`images`]: the two truncated image-charge ladders and normalizers.
//! - [`potential`]: `h`, `∇h`, the gap `u|∂D₁ − u|∂D₂`, its planar closed form.
//! - [`asymptotics`]: predicted rates, eps-sweeps, rate fits, ladder diagnostics.
//! - [`oracle`]: independent quadrature and finite-difference checks.
//! - [`cli`]: the `spheregap` command-line front end.

pub mod error;
pub mod geometry;
pub mod asymptotics;
pub mod cli;
pub mod images;
pub mod oracle;
pub mod output;
pub mod par;
pub mod potential;
pub mod summation;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{Point, Sphere, TwoSphereConfig};
pub use images::{assemble, ChargeSystem};
pub use par::Execution;
pub use potential::HarmonicField;

/// Version tag carried by every JSON and CSV artifact.
pub const FORMAT_VERSION: u32 = 1;
