//! Browser front end for the edgevid models.
//!
//! [`curves`] holds plain Rust functions that produce plot series from the
//! reference scenario with a few fields changed. The `#[wasm_bindgen]`
//! exports below wrap them for JavaScript; `www/index.html` draws the results.

pub mod curves;

use wasm_bindgen::prelude::*;

pub use curves::{DemoError, Series};

#[wasm_bindgen]
pub struct Plot {
    series: Series,
}

#[wasm_bindgen]
impl Plot {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.series.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.series.y.clone()
    }

    /// Lorenz gap for fairness plots, NaN otherwise.
    #[wasm_bindgen(getter)]
    pub fn gap(&self) -> f64 {
        self.series.gap.unwrap_or(f64::NAN)
    }
}

fn plot(r: Result<Series, DemoError>) -> Result<Plot, JsError> {
    r.map(|series| Plot { series })
        .map_err(|e| JsError::new(&e.to_string()))
}

/// Ergodic uplink rate (bit/s) on `n` distances up to `r_max_km`.
#[wasm_bindgen]
pub fn rate_curve(epsilon: f64, ref_power_w: f64, bandwidth_hz: f64, r_max_km: f64, n: usize) -> Result<Plot, JsError> {
    plot(curves::rate(epsilon, ref_power_w, bandwidth_hz, r_max_km, n))
}

/// Probability of meeting the deadline against distance.
#[wasm_bindgen]
pub fn success_curve(
    side_px: f64,
    lambda_fps: f64,
    deadline_s: f64,
    bandwidth_hz: f64,
    r_max_km: f64,
    n: usize,
) -> Result<Plot, JsError> {
    plot(curves::success(
        curves::Scenario {
            side_px,
            lambda_fps,
            deadline_s,
            bandwidth_hz,
        },
        r_max_km,
        n,
    ))
}

/// Effective against offered arrival rate up to the admissible maximum.
#[wasm_bindgen]
pub fn effective_rate_curve(side_px: f64, deadline_s: f64, bandwidth_hz: f64, n: usize) -> Result<Plot, JsError> {
    plot(curves::effective_rate(side_px, deadline_s, bandwidth_hz, n))
}

#[wasm_bindgen]
pub fn lorenz_curve(
    side_px: f64,
    lambda_fps: f64,
    deadline_s: f64,
    bandwidth_hz: f64,
    n: usize,
) -> Result<Plot, JsError> {
    plot(curves::lorenz(
        curves::Scenario {
            side_px,
            lambda_fps,
            deadline_s,
            bandwidth_hz,
        },
        n,
    ))
}
