use edgevid::pipeline::{self, BudgetProfile, PipelineError};
use edgevid::radio::{self, RadioError};
use edgevid::{validate, ConfigError, SystemConfig, ValidatedConfig};
use thiserror::Error;

/// Largest number of points a single request may ask for.
pub const MAX_POINTS: usize = 2000;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("between 2 and {MAX_POINTS} points are supported, got {0}")]
    Points(usize),
    #[error("the distance range must be positive, got {0}")]
    Range(f64),
}

/// One curve: abscissae, ordinates and, for Lorenz curves, the gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gap: Option<f64>,
}

/// Fields of the reference scenario the demo lets users move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub side_px: f64,
    pub lambda_fps: f64,
    pub deadline_s: f64,
    pub bandwidth_hz: f64,
}

impl Scenario {
    fn config(&self) -> Result<ValidatedConfig, ConfigError> {
        let mut c = SystemConfig::reference();
        c.image.side_px = self.side_px;
        c.server.aggregate_lambda = self.lambda_fps;
        c.server.deadline_s = self.deadline_s;
        c.radio.bandwidth_hz = self.bandwidth_hz;
        validate(c)
    }
}

fn check_points(n: usize) -> Result<(), DemoError> {
    if (2..=MAX_POINTS).contains(&n) {
        Ok(())
    } else {
        Err(DemoError::Points(n))
    }
}

/// `n` distances spread evenly over `(0, r_max]`.
fn distances(r_max_km: f64, n: usize) -> Result<Vec<f64>, DemoError> {
    check_points(n)?;
    if !(r_max_km > 0.0 && r_max_km.is_finite()) {
        return Err(DemoError::Range(r_max_km));
    }
    Ok((1..=n).map(|i| r_max_km * i as f64 / n as f64).collect())
}

pub fn rate(epsilon: f64, ref_power_w: f64, bandwidth_hz: f64, r_max_km: f64, n: usize) -> Result<Series, DemoError> {
    let x = distances(r_max_km, n)?;
    let mut c = SystemConfig::reference();
    c.power.epsilon = epsilon;
    c.power.ref_power_watt = ref_power_w;
    c.radio.bandwidth_hz = bandwidth_hz;
    let cfg = validate(c)?;
    let y = x
        .iter()
        .map(|&r| radio::ergodic_capacity_given_r(r, &cfg))
        .collect::<Result<_, _>>()?;
    Ok(Series { x, y, gap: None })
}

pub fn success(scenario: Scenario, r_max_km: f64, n: usize) -> Result<Series, DemoError> {
    let x = distances(r_max_km, n)?;
    let cfg = scenario.config()?;
    let queue = pipeline::server_queue(&cfg)?;
    let y = x
        .iter()
        .map(|&r| pipeline::p_succ_with_queue(r, &cfg, &queue))
        .collect::<Result<_, _>>()?;
    Ok(Series { x, y, gap: None })
}

pub fn effective_rate(side_px: f64, deadline_s: f64, bandwidth_hz: f64, n: usize) -> Result<Series, DemoError> {
    check_points(n)?;
    let cfg = Scenario {
        side_px,
        lambda_fps: 1.0,
        deadline_s,
        bandwidth_hz,
    }
    .config()?;
    let profile = BudgetProfile::new(&cfg)?;
    let hi = profile.ideal_rate();
    let x: Vec<f64> = (1..=n).map(|i| hi * i as f64 / n as f64).collect();
    let y = x.iter().map(|&l| profile.effective_rate(l)).collect::<Result<_, _>>()?;
    Ok(Series { x, y, gap: None })
}

pub fn lorenz(scenario: Scenario, n: usize) -> Result<Series, DemoError> {
    check_points(n)?;
    let curve = pipeline::lorenz_curve(&scenario.config()?, n.max(10))?;
    Ok(Series {
        x: curve.population_fraction,
        y: curve.success_share,
        gap: Some(curve.gap),
    })
}
