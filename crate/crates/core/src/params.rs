//! Scenario parameters, unit conversions and validation.
//!
//! Distances are kilometres, powers watts, bandwidths hertz and rates bit/s.
//! Every model in the crate consumes a [`ValidatedConfig`]; the noise power
//! is derived from the noise density and the per-user bandwidth, never stored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or validating a scenario.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    /// A physical quantity that must be positive (or finite) is not.
    #[error("unit error on `{field}`: {value} is not a valid positive quantity")]
    Unit { field: &'static str, value: f64 },
    /// A model constraint between fields is violated.
    #[error("constraint violated on `{field}`: {reason}")]
    Constraint { field: &'static str, reason: String },
    /// The scenario text could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),
}

impl ConfigError {
    /// The field named by the error, if any.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ConfigError::Unit { field, .. } | ConfigError::Constraint { field, .. } => Some(field),
            ConfigError::Parse(_) => None,
        }
    }
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watt_to_dbm(p_watt: f64) -> f64 {
    10.0 * p_watt.log10() + 30.0
}

/// Base-station and interferer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Base-station density (BS/km²).
    pub lambda_b: f64,
    /// Density of users sharing the same band (users/km²).
    pub lambda_u: f64,
    /// Frequency reuse factor.
    pub delta: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

/// Uplink power control and receiver noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    /// Transmit power (W) that a user at 1 km uses.
    pub ref_power_watt: f64,
    /// Peak transmit power (W).
    pub peak_power_watt: f64,
    /// Fractional power-control factor in `[0, 1]`.
    pub epsilon: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_density_watt_per_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Per-user bandwidth (Hz).
    pub bandwidth_hz: f64,
    pub coherence_time_s: f64,
    pub coherence_bandwidth_hz: f64,
}

impl RadioParams {
    /// Coherence interval in channel uses.
    pub fn coherence_interval(&self) -> f64 {
        self.coherence_time_s * self.coherence_bandwidth_hz
    }

    /// Number of coherence intervals in a block of `t_s` seconds over the user bandwidth.
    pub fn coherence_blocks(&self, t_s: f64) -> f64 {
        t_s * self.bandwidth_hz / self.coherence_interval()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    /// Image height and width (pixels).
    pub side_px: f64,
    pub bits_per_px: f64,
    /// Compression ratio (`ξ:1`).
    pub compression: f64,
}

impl ImageParams {
    /// Encoded image size in bits.
    pub fn payload_bits(&self) -> f64 {
        self.bits_per_px * self.side_px * self.side_px / self.compression
    }
}

/// Detector cost/accuracy constants and server speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// TFLOP per px³.
    pub c1: f64,
    /// TFLOP.
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// 1/px.
    pub c5: f64,
    /// Server speed (TFLOP/s).
    pub cpu_tflops: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerParams {
    /// Maximum admissible load (Erlang).
    pub rho_max: f64,
    /// Aggregate arrival rate at the server (frames/s).
    pub aggregate_lambda: f64,
    /// Per-frame delay requirement (s).
    pub deadline_s: f64,
}

/// The full parameter bundle of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub network: NetworkParams,
    pub power: PowerParams,
    pub radio: RadioParams,
    pub image: ImageParams,
    pub detection: DetectionParams,
    pub server: ServerParams,
}

impl SystemConfig {
    /// The reference scenario: α = 3.7, 23 dBm peak power, −174 dBm/Hz noise,
    /// 2.1 MHz per user, 24 bit/px at 2:1 compression, ρ_max = 0.99, 10 TFLOP/s,
    /// λ_b = λ_u = 0.25 km⁻², δ = 1, ε = 0.25, P = 10 mW.
    ///
    /// The image side, arrival rate and deadline default to 280 px, 100 frames/s
    /// and 0.3 s. Coherence time and bandwidth (1 ms, 1 MHz) are not part of the
    /// reference table and only affect the finite-coherence sampler.
    pub fn reference() -> Self {
        SystemConfig {
            network: NetworkParams {
                lambda_b: 0.25,
                lambda_u: 0.25,
                delta: 1.0,
                alpha: 3.7,
            },
            power: PowerParams {
                ref_power_watt: 0.01,
                peak_power_watt: dbm_to_watt(23.0),
                epsilon: 0.25,
                noise_density_watt_per_hz: dbm_to_watt(-174.0),
            },
            radio: RadioParams {
                bandwidth_hz: 2.1e6,
                coherence_time_s: 1e-3,
                coherence_bandwidth_hz: 1e6,
            },
            image: ImageParams {
                side_px: 280.0,
                bits_per_px: 24.0,
                compression: 2.0,
            },
            detection: DetectionParams {
                c1: 7e-10,
                c2: 0.083,
                c3: 1.0,
                c4: 1.578,
                c5: 6.5e-3,
                cpu_tflops: 10.0,
            },
            server: ServerParams {
                rho_max: 0.99,
                aggregate_lambda: 100.0,
                deadline_s: 0.3,
            },
        }
    }

    /// Parses a scenario file on top of the reference scenario.
    ///
    /// Recognised sections are `network`, `power`, `radio`, `image`,
    /// `detection` and `server`; other top-level tables are left to the caller.
    /// Missing keys keep their reference value, unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_toml_table(&table)
    }

    pub fn from_toml_table(table: &toml::Table) -> Result<Self, ConfigError> {
        let mut cfg = Self::reference();
        for (section, body) in table {
            if !SECTIONS.contains(&section.as_str()) {
                continue;
            }
            let body = body
                .as_table()
                .ok_or_else(|| ConfigError::Parse(format!("section `{section}` must be a table")))?;
            for (key, value) in body {
                cfg.set_value(Some(section), key, value)?;
            }
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override. The key is either `section.field` or a
    /// bare field name; the value uses the scenario-file grammar.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("override `{assignment}` lacks `=`")))?;
        let raw = raw.trim();
        let value = match raw.parse::<f64>() {
            Ok(v) => toml::Value::Float(v),
            Err(_) => toml::Value::String(raw.trim_matches('"').to_string()),
        };
        let key = key.trim();
        match key.split_once('.') {
            Some((section, field)) => self.set_value(Some(section), field, &value),
            None => self.set_value(None, key, &value),
        }
    }

    fn set_value(&mut self, section: Option<&str>, key: &str, value: &toml::Value) -> Result<(), ConfigError> {
        let (found_section, kind, slot) = self
            .field_mut(key)
            .ok_or_else(|| ConfigError::Parse(format!("unknown field `{key}`")))?;
        if let Some(section) = section {
            if section != found_section {
                return Err(ConfigError::Parse(format!(
                    "field `{key}` belongs to section `{found_section}`, not `{section}`"
                )));
            }
        }
        *slot = parse_quantity(key, kind, value)?;
        Ok(())
    }

    fn field_mut(&mut self, key: &str) -> Option<(&'static str, Quantity, &mut f64)> {
        use Quantity::*;
        let n = &mut self.network;
        let p = &mut self.power;
        let r = &mut self.radio;
        let i = &mut self.image;
        let d = &mut self.detection;
        let s = &mut self.server;
        Some(match key {
            "lambda_b" => ("network", Plain, &mut n.lambda_b),
            "lambda_u" => ("network", Plain, &mut n.lambda_u),
            "delta" => ("network", Plain, &mut n.delta),
            "alpha" => ("network", Plain, &mut n.alpha),
            "ref_power_watt" => ("power", Power, &mut p.ref_power_watt),
            "peak_power_watt" => ("power", Power, &mut p.peak_power_watt),
            "epsilon" => ("power", Plain, &mut p.epsilon),
            "noise_density_watt_per_hz" => ("power", Density, &mut p.noise_density_watt_per_hz),
            "bandwidth_hz" => ("radio", Plain, &mut r.bandwidth_hz),
            "coherence_time_s" => ("radio", Plain, &mut r.coherence_time_s),
            "coherence_bandwidth_hz" => ("radio", Plain, &mut r.coherence_bandwidth_hz),
            "side_px" => ("image", Plain, &mut i.side_px),
            "bits_per_px" => ("image", Plain, &mut i.bits_per_px),
            "compression" => ("image", Plain, &mut i.compression),
            "c1" => ("detection", Plain, &mut d.c1),
            "c2" => ("detection", Plain, &mut d.c2),
            "c3" => ("detection", Plain, &mut d.c3),
            "c4" => ("detection", Plain, &mut d.c4),
            "c5" => ("detection", Plain, &mut d.c5),
            "cpu_tflops" => ("detection", Plain, &mut d.cpu_tflops),
            "rho_max" => ("server", Plain, &mut s.rho_max),
            "aggregate_lambda" => ("server", Plain, &mut s.aggregate_lambda),
            "deadline_s" => ("server", Plain, &mut s.deadline_s),
            _ => return None,
        })
    }
}

const SECTIONS: [&str; 6] = ["network", "power", "radio", "image", "detection", "server"];

#[derive(Debug, Clone, Copy)]
enum Quantity {
    Plain,
    Power,
    Density,
}

fn parse_quantity(key: &str, kind: Quantity, value: &toml::Value) -> Result<f64, ConfigError> {
    let bad = |what: &str| ConfigError::Parse(format!("field `{key}`: {what}"));
    match value {
        toml::Value::Float(v) => Ok(*v),
        toml::Value::Integer(v) => Ok(*v as f64),
        toml::Value::String(text) => {
            let text = text.trim();
            let split = text
                .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
                .or_else(|| text.rfind(' '))
                .unwrap_or(text.len());
            let (number, unit) = text.split_at(split);
            let number: f64 = number
                .trim()
                .parse()
                .map_err(|_| bad(&format!("cannot read a number from `{text}`")))?;
            let unit = unit.trim();
            match (kind, unit) {
                (_, "") => Ok(number),
                (Quantity::Power, "W") => Ok(number),
                (Quantity::Power, "mW") => Ok(number * 1e-3),
                (Quantity::Power, "dBm") => Ok(dbm_to_watt(number)),
                (Quantity::Density, "W/Hz") => Ok(number),
                (Quantity::Density, "dBm/Hz") => Ok(dbm_to_watt(number)),
                _ => Err(bad(&format!("unit `{unit}` not accepted here"))),
            }
        }
        _ => Err(bad("expected a number or a string with a unit suffix")),
    }
}

/// A [`SystemConfig`] whose invariants have been checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidatedConfig {
    config: SystemConfig,
    noise_power_watt: f64,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// Receiver noise power σ² = N0·B (W).
    pub fn noise_power_watt(&self) -> f64 {
        self.noise_power_watt
    }

    /// Re-validates a modified copy of this configuration.
    pub fn with(&self, edit: impl FnOnce(&mut SystemConfig)) -> Result<ValidatedConfig, ConfigError> {
        let mut cfg = self.config;
        edit(&mut cfg);
        validate(cfg)
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = SystemConfig;

    fn deref(&self) -> &SystemConfig {
        &self.config
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Unit { field, value })
    }
}

fn constraint(field: &'static str, ok: bool, reason: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Constraint {
            field,
            reason: reason.into(),
        })
    }
}

/// Checks every parameter invariant and attaches the derived noise power.
pub fn validate(config: SystemConfig) -> Result<ValidatedConfig, ConfigError> {
    let n = &config.network;
    positive("lambda_b", n.lambda_b)?;
    positive("lambda_u", n.lambda_u)?;
    positive("delta", n.delta)?;
    constraint("delta", n.delta >= 1.0, format!("reuse factor {} < 1", n.delta))?;
    positive("alpha", n.alpha)?;
    constraint(
        "alpha",
        n.alpha > 2.0,
        format!("path-loss exponent {} must exceed 2", n.alpha),
    )?;
    constraint(
        "lambda_u",
        n.lambda_u <= n.lambda_b / n.delta,
        format!(
            "same-band user density {} exceeds lambda_b/delta = {}",
            n.lambda_u,
            n.lambda_b / n.delta
        ),
    )?;

    let p = &config.power;
    positive("ref_power_watt", p.ref_power_watt)?;
    positive("peak_power_watt", p.peak_power_watt)?;
    positive("noise_density_watt_per_hz", p.noise_density_watt_per_hz)?;
    constraint(
        "epsilon",
        (0.0..=1.0).contains(&p.epsilon),
        format!("power-control factor {} outside [0, 1]", p.epsilon),
    )?;
    constraint(
        "ref_power_watt",
        p.ref_power_watt <= p.peak_power_watt,
        format!(
            "reference power {} W exceeds peak power {} W",
            p.ref_power_watt, p.peak_power_watt
        ),
    )?;

    let r = &config.radio;
    positive("bandwidth_hz", r.bandwidth_hz)?;
    positive("coherence_time_s", r.coherence_time_s)?;
    positive("coherence_bandwidth_hz", r.coherence_bandwidth_hz)?;

    let i = &config.image;
    positive("side_px", i.side_px)?;
    positive("bits_per_px", i.bits_per_px)?;
    positive("compression", i.compression)?;
    constraint(
        "compression",
        i.compression >= 1.0,
        format!("compression ratio {} < 1", i.compression),
    )?;

    let d = &config.detection;
    positive("c1", d.c1)?;
    positive("c2", d.c2)?;
    positive("c3", d.c3)?;
    positive("c4", d.c4)?;
    positive("c5", d.c5)?;
    positive("cpu_tflops", d.cpu_tflops)?;

    let s = &config.server;
    positive("rho_max", s.rho_max)?;
    constraint(
        "rho_max",
        s.rho_max < 1.0,
        format!("maximum load {} must be below 1", s.rho_max),
    )?;
    constraint(
        "aggregate_lambda",
        s.aggregate_lambda.is_finite() && s.aggregate_lambda >= 0.0,
        format!("arrival rate {} must be finite and non-negative", s.aggregate_lambda),
    )?;
    positive("deadline_s", s.deadline_s)?;

    let noise_power_watt = p.noise_density_watt_per_hz * r.bandwidth_hz;
    positive("noise_density_watt_per_hz", noise_power_watt)?;
    Ok(ValidatedConfig {
        config,
        noise_power_watt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_is_accepted() {
        let v = validate(SystemConfig::reference()).unwrap();
        let expected_sigma2 = 10f64.powf(-174.0 / 10.0 - 3.0) * 2.1e6;
        assert!((v.noise_power_watt() / expected_sigma2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_out_of_range() {
        let mut cfg = SystemConfig::reference();
        cfg.power.epsilon = 1.5;
        let err = validate(cfg).unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { field: "epsilon", .. }));
    }

    #[test]
    fn too_many_users_per_band() {
        let mut cfg = SystemConfig::reference();
        cfg.network.lambda_u = 0.3;
        assert_eq!(validate(cfg).unwrap_err().field(), Some("lambda_u"));
    }

    #[test]
    fn negative_bandwidth_is_a_unit_error() {
        let mut cfg = SystemConfig::reference();
        cfg.radio.bandwidth_hz = -1.0;
        assert!(matches!(
            validate(cfg),
            Err(ConfigError::Unit {
                field: "bandwidth_hz",
                ..
            })
        ));
    }

    #[test]
    fn overloaded_rho_max() {
        let mut cfg = SystemConfig::reference();
        cfg.server.rho_max = 1.0;
        assert_eq!(validate(cfg).unwrap_err().field(), Some("rho_max"));
    }

    #[test]
    fn dbm_reference_points() {
        // 23 dBm is 0.1995 W, quoted as 200 mW
        assert!((dbm_to_watt(23.0) - 0.2).abs() < 1e-3);
        assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watt(0.0) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn validate_is_idempotent() {
        let once = validate(SystemConfig::reference()).unwrap();
        let twice = validate(*once.config()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn scenario_file_with_units() {
        let text = r#"
            [network]
            lambda_b = 0.5
            lambda_u = 0.25
            [power]
            peak_power_watt = "23 dBm"
            ref_power_watt = "100 mW"
            noise_density_watt_per_hz = "-174 dBm/Hz"
            [radio]
            bandwidth_hz = 10e6
            [sweep]
            anything = "ignored here"
        "#;
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.network.lambda_b, 0.5);
        assert!((cfg.power.peak_power_watt - dbm_to_watt(23.0)).abs() < 1e-15);
        assert!((cfg.power.ref_power_watt - 0.1).abs() < 1e-15);
        assert_eq!(cfg.radio.bandwidth_hz, 10e6);
        validate(cfg).unwrap();
    }

    #[test]
    fn scenario_rejects_unknown_keys_and_units() {
        assert!(SystemConfig::from_toml_str("[network]\nlambda_q = 1").is_err());
        assert!(SystemConfig::from_toml_str("[network]\nalpha = \"3 dBm\"").is_err());
        assert!(SystemConfig::from_toml_str("[power]\nalpha = 3").is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = SystemConfig::reference();
        cfg.apply_override("server.deadline_s=0.2").unwrap();
        cfg.apply_override("side_px = 430").unwrap();
        cfg.apply_override("peak_power_watt=20 dBm").unwrap();
        assert_eq!(cfg.server.deadline_s, 0.2);
        assert_eq!(cfg.image.side_px, 430.0);
        assert!((cfg.power.peak_power_watt - 0.1).abs() < 1e-15);
        assert!(cfg.apply_override("image.deadline_s=1").is_err());
    }

    proptest! {
        #[test]
        fn dbm_round_trip(p in -200.0f64..100.0) {
            let back = watt_to_dbm(dbm_to_watt(p));
            prop_assert!((back - p).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }
}
