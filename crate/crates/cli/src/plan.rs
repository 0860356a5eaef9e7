//! Scenario files and fully resolved run plans.
//!
//! A scenario file holds the model sections understood by
//! [`SystemConfig::from_toml_table`] plus an optional `[sweep]` table with the
//! axes of each command. Command-line flags replace sweep entries.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use edgevid::{validate, SystemConfig, ValidatedConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Inclusive uniform grid written `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, CliError> {
        if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n > 1 && hi <= lo) {
            return Err(CliError::Config(format!("bad grid {lo}:{hi}:{n}")));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || CliError::Config(format!("grid `{s}` is not lo:hi:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].parse().map_err(|_| bad())?;
        let hi = parts[1].parse().map_err(|_| bad())?;
        let n = parts[2].parse().map_err(|_| bad())?;
        Grid::new(lo, hi, n)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

/// Image size, aggregate arrival rate and deadline of one success curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub side_px: f64,
    pub lambda_fps: f64,
    pub deadline_s: f64,
}

/// Image size and deadline of one effective-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub side_px: f64,
    pub deadline_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzScenario {
    pub id: String,
    pub bandwidth_hz: f64,
    pub side_px: f64,
    pub lambda_fps: f64,
    pub deadline_s: f64,
}

/// The `[sweep]` table of a scenario file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub r_grid: Option<String>,
    pub lambda_grid: Option<String>,
    pub accuracy_grid: Option<String>,
    pub epsilon: Option<Vec<f64>>,
    pub ref_power: Option<Vec<String>>,
    pub triples: Option<Vec<[f64; 3]>>,
    pub curves: Option<Vec<[f64; 2]>>,
    pub points_per_curve: Option<usize>,
    pub bandwidths_hz: Option<Vec<f64>>,
    pub deadlines_s: Option<Vec<f64>>,
    pub scenarios: Option<Vec<LorenzScenario>>,
    pub n_quantiles: Option<usize>,
    pub budget: Option<f64>,
}

/// Parsed scenario: base model plus sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub sweep: SweepFile,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let config = SystemConfig::from_toml_table(&table)?;
        let mut sweep = SweepFile::default();
        for (key, value) in &table {
            match key.as_str() {
                "network" | "power" | "radio" | "image" | "detection" | "server" => {}
                "sweep" => {
                    sweep = value
                        .clone()
                        .try_into()
                        .map_err(|e: toml::de::Error| CliError::Config(format!("[sweep]: {e}")))?;
                }
                other => return Err(CliError::Config(format!("unknown section `{other}`"))),
            }
        }
        Ok(Scenario { config, sweep })
    }

    /// Reads `path`, or the reference scenario when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Scenario {
                config: SystemConfig::reference(),
                sweep: SweepFile::default(),
            }),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text)
            }
        }
    }

    /// Applies `key=value` overrides and validates the result.
    pub fn resolve_config(&self, overrides: &[String]) -> Result<ValidatedConfig, CliError> {
        let mut cfg = self.config;
        for o in overrides {
            cfg.apply_override(o)?;
        }
        Ok(validate(cfg)?)
    }
}

/// A command with every sweep axis made explicit; stored in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Plan {
    Rate {
        r_grid: Grid,
        epsilons: Vec<f64>,
        ref_powers_w: Vec<f64>,
    },
    Psucc {
        r_grid: Grid,
        triples: Vec<Triple>,
    },
    LambdaEff {
        /// `None`: each curve uses `points_per_curve` points up to its own `ρ_max/T_s`.
        lambda_grid: Option<Grid>,
        points_per_curve: usize,
        curves: Vec<Curve>,
    },
    Region {
        accuracy_grid: Grid,
        bandwidths_hz: Vec<f64>,
        deadlines_s: Vec<f64>,
    },
    Lorenz {
        scenarios: Vec<LorenzScenario>,
        n_quantiles: usize,
    },
    Validate {
        budget: f64,
    },
}

impl Plan {
    pub fn name(&self) -> &'static str {
        match self {
            Plan::Rate { .. } => "rate",
            Plan::Psucc { .. } => "psucc",
            Plan::LambdaEff { .. } => "lambda-eff",
            Plan::Region { .. } => "region",
            Plan::Lorenz { .. } => "lorenz",
            Plan::Validate { .. } => "validate",
        }
    }
}

pub fn default_r_grid() -> Grid {
    Grid {
        lo: 0.01,
        hi: 3.0,
        n: 300,
    }
}

pub fn default_triples() -> Vec<Triple> {
    let mut out = Vec::new();
    for deadline_s in [0.2, 0.3] {
        for (side_px, lambda_fps) in [(280.0, 100.0), (430.0, 70.0), (600.0, 40.0)] {
            out.push(Triple {
                side_px,
                lambda_fps,
                deadline_s,
            });
        }
    }
    out
}

pub fn default_curves() -> Vec<Curve> {
    [280.0, 430.0, 600.0]
        .iter()
        .map(|&side_px| Curve {
            side_px,
            deadline_s: 0.3,
        })
        .collect()
}

pub fn default_scenarios() -> Vec<LorenzScenario> {
    let s = |id: &str, bandwidth_hz, side_px, lambda_fps| LorenzScenario {
        id: id.to_string(),
        bandwidth_hz,
        side_px,
        lambda_fps,
        deadline_s: 0.3,
    };
    vec![
        s("bandwidth-limited", 2.1e6, 600.0, 40.0),
        s("balanced", 2.1e6, 280.0, 100.0),
        s("computation-limited", 10e6, 280.0, 100.0),
    ]
}

/// Parses a comma-separated list of numbers.
pub fn parse_numbers(text: &str, expected: usize) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("cannot read numbers from `{text}`")))?;
    if values.len() != expected {
        return Err(CliError::Config(format!(
            "`{text}` needs {expected} comma-separated values"
        )));
    }
    Ok(values)
}

/// Converts a power written with or without a unit suffix to watts.
pub fn parse_power(text: &str) -> Result<f64, CliError> {
    let mut cfg = SystemConfig::reference();
    cfg.apply_override(&format!("ref_power_watt={text}"))?;
    Ok(cfg.power.ref_power_watt)
}

pub fn parse_scenario(text: &str) -> Result<LorenzScenario, CliError> {
    let (id, rest) = text
        .split_once(',')
        .ok_or_else(|| CliError::Config(format!("scenario `{text}` is not id,B,s,lambda,t_k")))?;
    let v = parse_numbers(rest, 4)?;
    Ok(LorenzScenario {
        id: id.trim().to_string(),
        bandwidth_hz: v[0],
        side_px: v[1],
        lambda_fps: v[2],
        deadline_s: v[3],
    })
}

pub fn sweep_grid(flag: Option<Grid>, file: &Option<String>, default: Grid) -> Result<Grid, CliError> {
    match (flag, file) {
        (Some(g), _) => Ok(g),
        (None, Some(text)) => text.parse(),
        (None, None) => Ok(default),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g: Grid = "0.1:0.5:5".parse().unwrap();
        assert_eq!(g.points().len(), 5);
        assert_eq!(g.points()[4], 0.5);
        assert!("1:0:3".parse::<Grid>().is_err());
        assert!("1:2".parse::<Grid>().is_err());
        assert_eq!("2:2:1".parse::<Grid>().unwrap().points(), vec![2.0]);
    }

    #[test]
    fn scenario_with_sweep() {
        let s = Scenario::from_toml_str(
            r#"
            [radio]
            bandwidth_hz = 10e6
            [sweep]
            r_grid = "0.1:1:10"
            triples = [[280, 100, 0.3]]
            "#,
        )
        .unwrap();
        assert_eq!(s.config.radio.bandwidth_hz, 10e6);
        assert_eq!(s.sweep.r_grid.as_deref(), Some("0.1:1:10"));
        assert!(Scenario::from_toml_str("[sweep]\nbogus = 1").is_err());
        assert!(Scenario::from_toml_str("[plotting]\nx = 1").is_err());
    }

    #[test]
    fn units_and_lists() {
        assert!((parse_power("10mW").unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(parse_power("0.1").unwrap(), 0.1);
        assert_eq!(parse_numbers("280, 100,0.3", 3).unwrap(), vec![280.0, 100.0, 0.3]);
        assert!(parse_numbers("1,2", 3).is_err());
        let sc = parse_scenario("cpu,10e6,280,100,0.3").unwrap();
        assert_eq!(sc.id, "cpu");
        assert_eq!(sc.bandwidth_hz, 10e6);
    }

    #[test]
    fn plan_serialises_with_tag() {
        let p = Plan::Validate { budget: 1.0 };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"command":"validate","budget":1.0}"#);
        assert_eq!(serde_json::from_str::<Plan>(&text).unwrap(), p);
    }
}
