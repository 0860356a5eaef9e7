//! Uplink channel model: fractional power control, the Laplace transform of
//! the inter-cell interference, conditional coverage, conditional ergodic
//! capacity and the deterministic image transmission time.
//!
//! All functions condition on the distance `r_km` between the user and its
//! serving base station. Interferer distances to their own base stations are
//! treated as i.i.d. Rayleigh variables; `u = r_z²` is then exponential with
//! rate `π·λ_u`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

use crate::numerics::{self, NumericsError, QuadratureSpec};
use crate::params::ValidatedConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("ergodic rate underflows to zero at r = {r_km} km")]
    DegenerateLink { r_km: f64 },
}

/// Distances below this (1 m) are outside the model's range of validity.
pub const MIN_TRUSTED_DISTANCE_KM: f64 = 1e-3;

/// Below this many pixels the deterministic uplink-time limit is not trusted.
pub const MIN_TRUSTED_PIXELS: f64 = 40_000.0;

/// Rayleigh law of the distance to the nearest base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePdf {
    pub lambda_b: f64,
}

impl DistancePdf {
    pub fn new(lambda_b: f64) -> Self {
        DistancePdf { lambda_b }
    }

    pub fn pdf(&self, r_km: f64) -> f64 {
        if r_km < 0.0 {
            return 0.0;
        }
        2.0 * PI * self.lambda_b * r_km * (-PI * self.lambda_b * r_km * r_km).exp()
    }

    pub fn cdf(&self, r_km: f64) -> f64 {
        if r_km <= 0.0 {
            return 0.0;
        }
        -(-PI * self.lambda_b * r_km * r_km).exp_m1()
    }

    /// Exact inverse of [`cdf`](Self::cdf) on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        (-(-u).ln_1p() / (PI * self.lambda_b)).sqrt()
    }

    pub fn mean(&self) -> f64 {
        0.5 / self.lambda_b.sqrt()
    }
}

/// Transmit power of a user at distance `r_km`: `min(P·r^{αε}, P̄)`.
pub fn tx_power_law(r_km: f64, cfg: &ValidatedConfig) -> f64 {
    let p = &cfg.power;
    (p.ref_power_watt * r_km.powf(cfg.network.alpha * p.epsilon)).min(p.peak_power_watt)
}

/// Power as a function of the squared distance `u = r²`.
#[inline]
fn power_of_squared(u: f64, cfg: &ValidatedConfig) -> f64 {
    let p = &cfg.power;
    (p.ref_power_watt * u.powf(0.5 * cfg.network.alpha * p.epsilon)).min(p.peak_power_watt)
}

/// Squared distance at which the peak-power clip engages.
fn clip_point_squared(cfg: &ValidatedConfig) -> Option<f64> {
    let p = &cfg.power;
    if p.epsilon == 0.0 || p.ref_power_watt >= p.peak_power_watt {
        return None;
    }
    Some((p.peak_power_watt / p.ref_power_watt).powf(2.0 / (cfg.network.alpha * p.epsilon)))
}

/// Upper limit of the exponential weight `e^{-v}`; `e^{-40} ≈ 4e-18`.
const EXP_WEIGHT_CUTOFF: f64 = 40.0;

/// Breakpoints for integrating against `e^{-v}` on `[0, 40]`, including the
/// clip kink when it falls inside.
fn exp_weight_breaks(cfg: &ValidatedConfig) -> Vec<f64> {
    let mut pts = vec![0.0, 0.05, 0.5, 2.0, 6.0, 15.0, EXP_WEIGHT_CUTOFF];
    if let Some(u_clip) = clip_point_squared(cfg) {
        let v_clip = PI * cfg.network.lambda_u * u_clip;
        if v_clip > 0.0 && v_clip < EXP_WEIGHT_CUTOFF && !pts.contains(&v_clip) {
            pts.push(v_clip);
            pts.sort_by(f64::total_cmp);
        }
    }
    pts
}

/// `∫_{z0}^∞ z / (1 + z^α) dz`, the radial interference integral after scaling.
#[cfg(test)]
fn radial_tail(z0: f64, alpha: f64) -> Result<f64, NumericsError> {
    if z0 >= RADIAL_SERIES_FROM {
        return Ok(radial_tail_series(z0, alpha));
    }
    if z0 <= 0.0 {
        return Ok(radial_total(alpha));
    }
    let spec = QuadratureSpec::new(1e-14, 1e-13, 50, 1e-15)?;
    let head = numerics::integrate(|z: f64| z / (1.0 + z.powf(alpha)), 0.0, z0, &spec)?;
    Ok(radial_total(alpha) - head.value)
}

const RADIAL_SERIES_FROM: f64 = 1.5;
const RADIAL_TABLE_POINTS: usize = 3000;

/// `∫_0^∞ z / (1 + z^α) dz = (π/α) / sin(2π/α)`.
#[cfg(test)]
fn radial_total(alpha: f64) -> f64 {
    PI / (alpha * (2.0 * PI / alpha).sin())
}

/// Alternating expansion in `z0^{-α}`, used for `z0 ≥ 1.5` where the ratio is below 0.45.
fn radial_tail_series(z0: f64, alpha: f64) -> f64 {
    let ratio = z0.powf(-alpha);
    let mut term = z0.powf(2.0 - alpha);
    let mut sum = 0.0;
    for k in 0..200 {
        let contrib = term / (alpha * (k + 1) as f64 - 2.0);
        sum += if k % 2 == 0 { contrib } else { -contrib };
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
        term *= ratio;
    }
    sum
}

/// Cubic Hermite table of [`radial_tail`] on `[0, 1.5]` for one path-loss exponent.
struct RadialTable {
    alpha: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl RadialTable {
    fn build(alpha: f64) -> Self {
        let step = RADIAL_SERIES_FROM / RADIAL_TABLE_POINTS as f64;
        let f = |z: f64| z / (1.0 + z.powf(alpha));
        let spec = QuadratureSpec::new(1e-16, 1e-15, 8, 1e-17).expect("static spec");
        let mut values = Vec::with_capacity(RADIAL_TABLE_POINTS + 1);
        // accumulate from the series end so the table meets it continuously
        let mut acc = radial_tail_series(RADIAL_SERIES_FROM, alpha);
        values.push(acc);
        for i in (0..RADIAL_TABLE_POINTS).rev() {
            let a = step * i as f64;
            let piece = numerics::integrate(f, a, a + step, &spec)
                .map(|e| e.value)
                .unwrap_or_else(|e| match e {
                    NumericsError::Convergence { estimate, .. } => estimate,
                    _ => f64::NAN,
                });
            acc += piece;
            values.push(acc);
        }
        values.reverse();
        let slopes = (0..=RADIAL_TABLE_POINTS).map(|i| -f(step * i as f64)).collect();
        RadialTable {
            alpha,
            step,
            values,
            slopes,
        }
    }

    #[inline]
    fn eval(&self, z0: f64) -> f64 {
        if z0 >= RADIAL_SERIES_FROM {
            return radial_tail_series(z0, self.alpha);
        }
        let z0 = z0.max(0.0);
        let pos = z0 / self.step;
        let i = (pos as usize).min(RADIAL_TABLE_POINTS - 1);
        let t = pos - i as f64;
        let h = self.step;
        let (d1, d2) = (self.slopes[i], self.slopes[i + 1]);
        let (y1, y2) = (self.values[i], self.values[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y1
            + (t3 - 2.0 * t2 + t) * h * d1
            + (-2.0 * t3 + 3.0 * t2) * y2
            + (t3 - t2) * h * d2
    }
}

fn radial_table(alpha: f64) -> Arc<RadialTable> {
    static TABLES: OnceLock<RwLock<Vec<Arc<RadialTable>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| RwLock::new(Vec::new()));
    if let Ok(list) = tables.read() {
        if let Some(t) = list.iter().find(|t| t.alpha.to_bits() == alpha.to_bits()) {
            return Arc::clone(t);
        }
    }
    let table = Arc::new(RadialTable::build(alpha));
    if let Ok(mut list) = tables.write() {
        if list.len() >= 64 {
            list.clear();
        }
        list.push(Arc::clone(&table));
    }
    table
}

/// Laplace transform `E[exp(-s·I)]` of the interference seen by a base station
/// whose nearest interferer is at least `r_km` away.
///
/// Evaluated with the radial integral done first: for an interferer with
/// power coefficient `c = s·ℓ(√u)`,
/// `∫_r^∞ x·c·x^{-α} / (1 + c·x^{-α}) dx = c^{2/α}·∫_{r·c^{-1/α}}^∞ z/(1+z^α) dz`,
/// which leaves a single expectation over `u`.
pub fn interference_laplace(s: f64, r_km: f64, cfg: &ValidatedConfig) -> Result<f64, RadioError> {
    if s <= 0.0 {
        return Ok(1.0);
    }
    let alpha = cfg.network.alpha;
    let lambda_u = cfg.network.lambda_u;
    let p = &cfg.power;
    let table = radial_table(alpha);
    let r = r_km.max(0.0);
    // ln c = ln s + ln ℓ(√u), with ln ℓ = ln P + (αε/2)·ln(v / πλ_u) below the clip
    let ln_s = s.ln();
    let ln_ref = p.ref_power_watt.ln() - 0.5 * alpha * p.epsilon * (PI * lambda_u).ln();
    let ln_peak = p.peak_power_watt.ln();
    let exponent = 0.5 * alpha * p.epsilon;
    let integrand = |v: f64| -> f64 {
        let ln_power = if exponent == 0.0 {
            p.ref_power_watt.min(p.peak_power_watt).ln()
        } else if v <= 0.0 {
            return 0.0;
        } else {
            (ln_ref + exponent * v.ln()).min(ln_peak)
        };
        let ln_c = ln_s + ln_power;
        (-v + 2.0 * ln_c / alpha).exp() * table.eval(r * (-ln_c / alpha).exp())
    };
    // v = w² smooths the v^{αε/2} cusp at the origin
    let breaks: Vec<f64> = exp_weight_breaks(cfg).iter().map(|v| v.sqrt()).collect();
    let mean =
        numerics::integrate_with_breaks(|w: f64| 2.0 * w * integrand(w * w), &breaks, &QuadratureSpec::INNER)?.value;
    Ok((-2.0 * PI * lambda_u * mean).exp())
}

/// The same transform evaluated as written: an outer integral over the
/// interferer distance `x ∈ [r, ∞)` of `β(x, s)·x`, with `β` itself an
/// expectation over `u`. Slower; kept as a cross-check of
/// [`interference_laplace`].
pub fn interference_laplace_nested(s: f64, r_km: f64, cfg: &ValidatedConfig) -> Result<f64, RadioError> {
    if s <= 0.0 {
        return Ok(1.0);
    }
    let alpha = cfg.network.alpha;
    let lambda_u = cfg.network.lambda_u;
    let scale = PI * lambda_u;
    let breaks = exp_weight_breaks(cfg);
    let inner_spec = QuadratureSpec::INNER;
    let beta = |x: f64| -> Result<f64, NumericsError> {
        let path = x.powf(-alpha);
        let est = numerics::integrate_with_breaks(
            |v: f64| {
                let q = s * power_of_squared(v / scale, cfg) * path;
                (-v).exp() * q / (1.0 + q)
            },
            &breaks,
            &inner_spec,
        )?;
        Ok(est.value)
    };
    let failure = std::cell::Cell::new(None);
    let outer = |x: f64| match beta(x) {
        Ok(b) => b * x,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    // β(x,s)·x ≤ s·P̄·x^{1-α}
    let peak = cfg.power.peak_power_watt;
    let tail = move |x: f64| s * peak * x.powf(2.0 - alpha) / (alpha - 2.0);
    let spec = QuadratureSpec::new(1e-9, 1e-8, 400, 1e-10)?;
    let start = r_km.max(1e-6);
    let head = if r_km < start {
        numerics::integrate(outer, 0.0, start, &spec)?.value
    } else {
        0.0
    };
    let body = numerics::integrate_semi_infinite_scaled(outer, start, start.max(0.25), &spec, Some(tail))?;
    if let Some(e) = failure.take() {
        return Err(e.into());
    }
    Ok((-2.0 * PI * lambda_u * (head + body)).exp())
}

/// `s = γ·r^α / ℓ(r)`: the Laplace argument for threshold `gamma` at distance `r_km`.
fn laplace_argument(gamma: f64, r_km: f64, cfg: &ValidatedConfig) -> f64 {
    gamma * r_km.powf(cfg.network.alpha) / tx_power_law(r_km, cfg)
}

/// `P(SINR ≥ γ | r)`.
pub fn coverage_given_r(gamma: f64, r_km: f64, cfg: &ValidatedConfig) -> Result<f64, RadioError> {
    if gamma <= 0.0 {
        return Ok(1.0);
    }
    let s = laplace_argument(gamma, r_km, cfg);
    let noise = (-s * cfg.noise_power_watt()).exp();
    if noise == 0.0 {
        return Ok(0.0);
    }
    Ok((noise * interference_laplace(s, r_km, cfg)?).clamp(0.0, 1.0))
}

/// Ergodic rate `E[B·log2(1 + SINR) | r]` in bit/s, uncached.
pub fn ergodic_capacity_given_r_uncached(r_km: f64, cfg: &ValidatedConfig) -> Result<f64, RadioError> {
    let failure = std::cell::Cell::new(None);
    let integrand = |t: f64| match coverage_given_r(t.exp_m1(), r_km, cfg) {
        Ok(p) => p,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    let nats = numerics::integrate_semi_infinite(integrand, 0.0, &QuadratureSpec::OUTER)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(cfg.radio.bandwidth_hz / std::f64::consts::LN_2 * nats)
}

/// Noise-only capacity `B·log2(1 + ℓ(r)·r^{-α}/σ²)`, an upper bound on the ergodic rate.
pub fn interference_free_capacity(r_km: f64, cfg: &ValidatedConfig) -> f64 {
    let snr = tx_power_law(r_km, cfg) * r_km.powf(-cfg.network.alpha) / cfg.noise_power_watt();
    cfg.radio.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RateKey([u64; 9]);

impl RateKey {
    fn new(r_km: f64, cfg: &ValidatedConfig) -> Self {
        let n = &cfg.network;
        let p = &cfg.power;
        RateKey([
            r_km.to_bits(),
            n.alpha.to_bits(),
            n.lambda_u.to_bits(),
            p.ref_power_watt.to_bits(),
            p.peak_power_watt.to_bits(),
            p.epsilon.to_bits(),
            p.noise_density_watt_per_hz.to_bits(),
            cfg.radio.bandwidth_hz.to_bits(),
            n.lambda_b.to_bits(),
        ])
    }
}

const RATE_CACHE_LIMIT: usize = 1 << 20;

fn rate_cache() -> &'static RwLock<HashMap<RateKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<RateKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Ergodic rate `E[B·log2(1 + SINR) | r]` in bit/s.
///
/// Results are memoised on the exact bits of `r_km` and the radio-relevant
/// parameters; entries are deterministic so concurrent writers are harmless.
pub fn ergodic_capacity_given_r(r_km: f64, cfg: &ValidatedConfig) -> Result<f64, RadioError> {
    let key = RateKey::new(r_km, cfg);
    if let Some(v) = rate_cache().read().ok().and_then(|m| m.get(&key).copied()) {
        return Ok(v);
    }
    let v = ergodic_capacity_given_r_uncached(r_km, cfg)?;
    if let Ok(mut m) = rate_cache().write() {
        if m.len() >= RATE_CACHE_LIMIT {
            m.clear();
        }
        m.insert(key, v);
    }
    Ok(v)
}

/// Result of [`uplink_time_given_r`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkTime {
    pub seconds: f64,
    pub rate_bps: f64,
    /// The image has fewer than 40 kilopixels, so the deterministic limit is
    /// an optimistic approximation.
    pub low_resolution: bool,
}

/// Transmission time of one image in the many-coherence-blocks limit:
/// payload bits divided by the ergodic rate.
pub fn uplink_time_given_r(r_km: f64, cfg: &ValidatedConfig) -> Result<UplinkTime, RadioError> {
    let rate = ergodic_capacity_given_r(r_km, cfg)?;
    let seconds = cfg.image.payload_bits() / rate;
    if rate.is_nan() || rate <= 0.0 || !seconds.is_finite() {
        return Err(RadioError::DegenerateLink { r_km });
    }
    Ok(UplinkTime {
        seconds,
        rate_bps: rate,
        low_resolution: cfg.image.side_px * cfg.image.side_px < MIN_TRUSTED_PIXELS,
    })
}

/// Per-distance link summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub r_km: f64,
    /// `(γ, P(SINR ≥ γ | r))` pairs in the order requested.
    pub coverage: Vec<(f64, f64)>,
    pub ergodic_rate_bps: f64,
    pub uplink_time_s: f64,
    /// `r_km` is below one metre.
    pub extrapolated: bool,
}

pub fn link_stats(r_km: f64, gammas: &[f64], cfg: &ValidatedConfig) -> Result<LinkStats, RadioError> {
    let coverage = gammas
        .iter()
        .map(|&g| coverage_given_r(g, r_km, cfg).map(|p| (g, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let ergodic_rate_bps = ergodic_capacity_given_r(r_km, cfg)?;
    let uplink_time_s = if ergodic_rate_bps > 0.0 {
        cfg.image.payload_bits() / ergodic_rate_bps
    } else {
        f64::INFINITY
    };
    Ok(LinkStats {
        r_km,
        coverage,
        ergodic_rate_bps,
        uplink_time_s,
        extrapolated: r_km < MIN_TRUSTED_DISTANCE_KM,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate, SystemConfig};

    fn reference() -> ValidatedConfig {
        validate(SystemConfig::reference()).unwrap()
    }

    #[test]
    fn power_law_reference_and_clip() {
        let cfg = reference();
        assert!((tx_power_law(1.0, &cfg) - 0.01).abs() < 1e-15);
        let flat = cfg.with(|c| c.power.epsilon = 0.0).unwrap();
        assert_eq!(tx_power_law(7.3, &flat), 0.01);
        let r_clip = 20f64.powf(1.0 / 0.925);
        assert!((r_clip - 25.5).abs() < 0.1);
        assert!(tx_power_law(r_clip * 0.99, &cfg) < cfg.power.peak_power_watt);
        assert_eq!(tx_power_law(r_clip * 1.01, &cfg), cfg.power.peak_power_watt);
    }

    #[test]
    fn distance_law_consistency() {
        let d = DistancePdf::new(0.25);
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-12);
        }
        assert!((d.cdf(d.quantile(0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn radial_tail_branches_agree() {
        let alpha = 3.7;
        let spec = QuadratureSpec::new(1e-13, 1e-13, 200, 1e-14).unwrap();
        for z0 in [0.0, 0.3, 1.0, 1.49, 1.5, 2.0, 7.0] {
            let q = numerics::integrate_semi_infinite(|z: f64| z / (1.0 + z.powf(alpha)), z0, &spec).unwrap();
            let v = radial_tail(z0, alpha).unwrap();
            assert!((v - q).abs() < 1e-9, "z0={z0}: {v} vs {q}");
        }
    }

    #[test]
    fn radial_table_matches_direct_evaluation() {
        let table = RadialTable::build(3.7);
        for i in 0..=600 {
            let z0 = 1.6 * i as f64 / 600.0;
            let exact = radial_tail(z0, 3.7).unwrap();
            assert!((table.eval(z0) - exact).abs() < 1e-12, "z0={z0}");
        }
    }

    #[test]
    fn laplace_trivial_limits() {
        let cfg = reference();
        assert_eq!(interference_laplace(0.0, 0.7, &cfg).unwrap(), 1.0);
        let sparse = cfg.with(|c| c.network.lambda_u = 1e-12).unwrap();
        let v = interference_laplace(1e3, 0.5, &sparse).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn laplace_routes_agree() {
        let cfg = reference();
        for (s, r) in [(1.0, 1.0), (100.0, 1.0), (30.0, 0.5), (2000.0, 1.5), (5.0, 0.01)] {
            let fast = interference_laplace(s, r, &cfg).unwrap();
            let nested = interference_laplace_nested(s, r, &cfg).unwrap();
            assert!(
                (fast - nested).abs() < 1e-7 * fast.max(1e-3),
                "s={s} r={r}: {fast} vs {nested}"
            );
        }
    }

    #[test]
    fn laplace_monotonicity() {
        let cfg = reference();
        let mut last = 1.0;
        for k in 0..12 {
            let s = 10f64.powf(-2.0 + 0.5 * k as f64);
            let v = interference_laplace(s, 1.0, &cfg).unwrap();
            assert!(v > 0.0 && v <= last + 1e-12);
            last = v;
        }
        let mut last = 0.0;
        for r in [0.1, 0.3, 0.6, 1.0, 2.0] {
            let v = interference_laplace(50.0, r, &cfg).unwrap();
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn coverage_limits_and_shape() {
        let cfg = reference();
        assert_eq!(coverage_given_r(0.0, 1.0, &cfg).unwrap(), 1.0);
        assert!(coverage_given_r(1e6, 1.0, &cfg).unwrap() < 1e-3);
        let mut last = 1.0;
        for k in 0..=16 {
            let g = 10f64.powf(-3.0 + 0.5 * k as f64);
            let p = coverage_given_r(g, 0.8, &cfg).unwrap();
            assert!((0.0..=1.0).contains(&p) && p <= last + 1e-12);
            last = p;
        }
    }

    #[test]
    fn coverage_decays_with_distance_without_power_control() {
        let cfg = reference().with(|c| c.power.epsilon = 0.0).unwrap();
        let mut last = 1.0;
        for i in 0..=29 {
            let r = 0.1 + 0.1 * i as f64;
            let p = coverage_given_r(1.0, r, &cfg).unwrap();
            assert!(p <= last + 1e-9, "r={r}");
            last = p;
        }
    }

    #[test]
    fn capacity_bounded_by_noise_only_link() {
        let cfg = reference();
        for r in [0.2, 1.0, 2.5] {
            let c = ergodic_capacity_given_r(r, &cfg).unwrap();
            assert!(c > 0.0 && c <= interference_free_capacity(r, &cfg));
        }
    }

    #[test]
    fn capacity_without_interferers_matches_noise_only_integral() {
        // with no interference E[log(1+X·snr)], X ~ Exp(1), equals ∫ e^{-(e^t-1)/snr} dt
        let cfg = reference()
            .with(|c| {
                c.network.lambda_u = 1e-12;
                c.power.noise_density_watt_per_hz = 1e-12;
            })
            .unwrap();
        let r = 1.0;
        let snr = tx_power_law(r, &cfg) / cfg.noise_power_watt();
        let spec = QuadratureSpec::new(1e-11, 1e-11, 400, 1e-12).unwrap();
        let direct = numerics::integrate_semi_infinite(|t: f64| (-(t.exp_m1()) / snr).exp(), 0.0, &spec).unwrap();
        let expected = cfg.radio.bandwidth_hz / std::f64::consts::LN_2 * direct;
        let got = ergodic_capacity_given_r_uncached(r, &cfg).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn capacity_falls_as_noise_rises() {
        let base = reference();
        let mut last = f64::INFINITY;
        for n0 in [1e-21, 1e-15, 1e-12, 1e-10] {
            let cfg = base.with(|c| c.power.noise_density_watt_per_hz = n0).unwrap();
            let c = ergodic_capacity_given_r(1.0, &cfg).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn uplink_time_arithmetic() {
        let cfg = reference().with(|c| c.image.side_px = 600.0).unwrap();
        assert!((cfg.image.payload_bits() / 10e6 - 0.432).abs() < 1e-12);
        let t1 = uplink_time_given_r(1.0, &cfg).unwrap();
        let big = cfg.with(|c| c.image.side_px = 1200.0).unwrap();
        let t2 = uplink_time_given_r(1.0, &big).unwrap();
        assert!((t2.seconds / t1.seconds - 4.0).abs() < 1e-12);
        assert!(!t1.low_resolution);
        let small = cfg.with(|c| c.image.side_px = 150.0).unwrap();
        assert!(uplink_time_given_r(1.0, &small).unwrap().low_resolution);
    }

    #[test]
    fn link_stats_flags_tiny_distances() {
        let cfg = reference();
        let s = link_stats(5e-4, &[1.0], &cfg).unwrap();
        assert!(s.extrapolated);
        assert!(s.coverage[0].1 > 0.9);
    }
}
