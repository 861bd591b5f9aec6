//! Statistical checks turning comparison, flow and moment properties of the
//! solution map into pass/fail reports.
//!
//! Almost-sure statements become per-`B`-path assertions: a property holds
//! when its pass fraction over `B`-paths reaches [`Thresholds::pass_fraction`],
//! with estimates compared at [`Thresholds::sigmas`] standard errors.
//! Suprema over `[t, T]` are maxima over grid nodes.

mod comparison;
mod homeo;
mod moments;

pub use comparison::{
    comparison_check, envelope_threshold, sandwich_check, ComparisonReport, EnvelopePoint, SandwichReport,
};
pub use homeo::{
    field_monotonicity, inverse_probe, monotonicity_scan, HomeoReport, InverseResult, InverseStatus, RangeRow,
};
pub use moments::{
    forward_moment_check, holder_moment_estimate, negative_moment_decay, MomentKind, MomentPoint, MomentReport,
};

use crate::drivers::DriverPaths;
use crate::scalar::Scalar;

/// What is needed to replay a report bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: u64,
    /// Hash of the canonical experiment config; empty outside the runner.
    pub config_hash: String,
}

impl Provenance {
    pub fn of<T: Scalar>(paths: &DriverPaths<T>) -> Self {
        Self {
            seed: paths.rng().master_seed,
            config_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub pass_fraction: f64,
    pub sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            pass_fraction: 0.99,
            sigmas: 3.0,
        }
    }
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}
