//! Analytical performance models for multi-cell edge video analytics.
//!
//! The crate composes an uplink stochastic-geometry model (coverage, ergodic
//! rate, transmission time), a parametric object-detector cost model and an
//! M/D/1 edge server into per-distance success probabilities, effective frame
//! rates and fairness measures. [`montecarlo`] holds independent simulators
//! that every analytical expression is checked against.

pub mod detection;
pub mod montecarlo;
pub mod numerics;
pub mod params;
pub mod pipeline;
pub mod queue;
pub mod radio;

pub use params::{validate, ConfigError, SystemConfig, ValidatedConfig};

/// Order-preserving map over a slice, evaluated on the rayon pool when the
/// `parallel` feature is enabled.
pub(crate) fn ordered_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
