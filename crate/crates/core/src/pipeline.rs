//! End-to-end offloading metrics.
//!
//! A frame sent from distance `r` succeeds when uplink time, queueing delay
//! and processing time together fit the deadline:
//! `p_succ(r) = P(W ≤ t_k − T_ul(r) − T_s)`. Averaging over the Rayleigh law
//! of `r` gives the effective (goodput) frame rate of a cell.
//!
//! The latency budget `t_k − T_ul(r) − T_s` does not depend on the arrival
//! rate, so [`BudgetProfile`] evaluates it once on a quadrature grid in the
//! uniform variable `u = F_R(r)` and arrival-rate sweeps only rebuild the queue.

use thiserror::Error;

use crate::detection::{self, DetectionError};
use crate::numerics::{self, bisect_predicate, maximize_scalar};
use crate::params::{ConfigError, ValidatedConfig};
use crate::queue::{build_queue, QueueError, QueueModel};
use crate::radio::{uplink_time_given_r, DistancePdf, RadioError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("every user fails, the Lorenz curve is undefined")]
    DegenerateLorenz,
    #[error("invalid input: {0}")]
    Invalid(&'static str),
}

/// Quadrature nodes per positive-budget piece of the user distribution.
pub const DEFAULT_NODES: usize = 256;

const COARSE_CELLS: usize = 64;
const U_LO: f64 = 1e-9;
const U_HI: f64 = 1.0 - 1e-9;
const U_TOL: f64 = 1e-11;

/// `t_k − T_ul(r) − T_s`; `−∞` where the link rate underflows.
pub fn latency_budget(r_km: f64, cfg: &ValidatedConfig) -> Result<f64, PipelineError> {
    let service = detection::service_time(cfg.image.side_px, &cfg.detection);
    match uplink_time_given_r(r_km, cfg) {
        Ok(ul) => Ok(cfg.server.deadline_s - ul.seconds - service),
        Err(RadioError::DegenerateLink { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e.into()),
    }
}

fn success_from_budget(budget: f64, queue: &QueueModel) -> f64 {
    if budget < 0.0 {
        0.0
    } else {
        queue.waiting_cdf(budget)
    }
}

/// Queue for the configured image size and aggregate arrival rate.
pub fn server_queue(cfg: &ValidatedConfig) -> Result<QueueModel, PipelineError> {
    let service = detection::service_time(cfg.image.side_px, &cfg.detection);
    Ok(build_queue(cfg.server.aggregate_lambda, service, cfg.server.rho_max)?)
}

/// Probability that a frame from distance `r_km` completes within the deadline.
pub fn p_succ_given_r(r_km: f64, cfg: &ValidatedConfig) -> Result<f64, PipelineError> {
    let queue = server_queue(cfg)?;
    p_succ_with_queue(r_km, cfg, &queue)
}

/// [`p_succ_given_r`] with a prebuilt queue.
pub fn p_succ_with_queue(r_km: f64, cfg: &ValidatedConfig, queue: &QueueModel) -> Result<f64, PipelineError> {
    Ok(success_from_budget(latency_budget(r_km, cfg)?, queue))
}

/// Latency budget tabulated over the user-distance distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetProfile {
    pub service_s: f64,
    pub rho_max: f64,
    /// Intervals of `u = F_R(r)` on which the budget is non-negative.
    pub pieces: Vec<(f64, f64)>,
    /// `(weight, budget)` quadrature nodes covering `pieces`.
    nodes: Vec<(f64, f64)>,
}

impl BudgetProfile {
    pub fn new(cfg: &ValidatedConfig) -> Result<Self, PipelineError> {
        Self::with_nodes(cfg, DEFAULT_NODES)
    }

    pub fn with_nodes(cfg: &ValidatedConfig, n_nodes: usize) -> Result<Self, PipelineError> {
        if n_nodes < 2 {
            return Err(PipelineError::Invalid("at least two quadrature nodes are needed"));
        }
        let dist = DistancePdf::new(cfg.network.lambda_b);
        let budget_at = |u: f64| latency_budget(dist.quantile(u), cfg);

        let us: Vec<f64> = (0..=COARSE_CELLS)
            .map(|i| U_LO + (U_HI - U_LO) * i as f64 / COARSE_CELLS as f64)
            .collect();
        let coarse = crate::ordered_map(&us, |&u| budget_at(u));
        let coarse = coarse.into_iter().collect::<Result<Vec<f64>, _>>()?;

        // locate sign changes and sharpen them by bisection
        let mut pieces = Vec::new();
        let mut start = if coarse[0] >= 0.0 { Some(us[0]) } else { None };
        for i in 0..COARSE_CELLS {
            let (a, b) = (coarse[i] >= 0.0, coarse[i + 1] >= 0.0);
            if a == b {
                continue;
            }
            let mut failed = None;
            let edge = bisect_predicate(
                |u| match budget_at(u) {
                    Ok(v) => (v >= 0.0) == a,
                    Err(e) => {
                        failed.get_or_insert(e);
                        false
                    }
                },
                us[i],
                us[i + 1],
                U_TOL,
            );
            if let Some(e) = failed {
                return Err(e);
            }
            if a {
                pieces.push((start.take().unwrap_or(us[i]), edge));
            } else {
                start = Some(edge);
            }
        }
        if let Some(s) = start {
            pieces.push((s, us[COARSE_CELLS]));
        }

        let (gx, gw) = numerics::gauss_legendre(n_nodes);
        let mut points = Vec::with_capacity(pieces.len() * n_nodes);
        for &(a, b) in &pieces {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gx.iter().zip(&gw) {
                points.push((w * half, mid + half * x));
            }
        }
        let budgets = crate::ordered_map(&points, |&(_, u)| budget_at(u));
        let mut nodes = Vec::with_capacity(points.len());
        for (&(w, _), b) in points.iter().zip(budgets) {
            nodes.push((w, b?));
        }
        Ok(BudgetProfile {
            service_s: detection::service_time(cfg.image.side_px, &cfg.detection),
            rho_max: cfg.server.rho_max,
            pieces,
            nodes,
        })
    }

    /// Share of users whose budget is non-negative.
    pub fn feasible_mass(&self) -> f64 {
        self.pieces.iter().map(|(a, b)| b - a).sum()
    }

    /// Largest admissible arrival rate `ρ_max / T_s`.
    pub fn ideal_rate(&self) -> f64 {
        self.rho_max / self.service_s
    }

    /// `E_r[p_succ(r)]` for a given queue.
    pub fn success_fraction(&self, queue: &QueueModel) -> f64 {
        let total: f64 = self.nodes.iter().map(|&(w, b)| w * success_from_budget(b, queue)).sum();
        total.clamp(0.0, 1.0)
    }

    /// Effective arrival rate at aggregate rate `lambda_fps`.
    pub fn effective_rate(&self, lambda_fps: f64) -> Result<f64, PipelineError> {
        let queue = build_queue(lambda_fps, self.service_s, self.rho_max)?;
        Ok(lambda_fps * self.success_fraction(&queue))
    }

    /// Maximum of [`Self::effective_rate`] over `λ ∈ [0, ρ_max/T_s]`.
    pub fn max_effective_rate(&self) -> Result<RatePeak, PipelineError> {
        let hi = self.ideal_rate();
        let mut failed = None;
        let (lambda_star, lambda_eff_star) = maximize_scalar(
            |l| match self.effective_rate(l.min(hi)) {
                Ok(v) => v,
                Err(e) => {
                    failed.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            0.0,
            hi,
            1e-7 * hi,
        );
        match failed {
            Some(e) => Err(e),
            None => Ok(RatePeak {
                lambda_star,
                lambda_eff_star,
            }),
        }
    }
}

/// Maximiser of the effective arrival rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePeak {
    pub lambda_star: f64,
    pub lambda_eff_star: f64,
}

/// `λ·E_r[p_succ(r)]` at the configured aggregate arrival rate.
pub fn effective_arrival_rate(cfg: &ValidatedConfig) -> Result<f64, PipelineError> {
    BudgetProfile::new(cfg)?.effective_rate(cfg.server.aggregate_lambda)
}

/// Effective arrival rate over a grid of aggregate rates (configured rate ignored).
pub fn effective_rate_curve(cfg: &ValidatedConfig, lambdas: &[f64]) -> Result<Vec<f64>, PipelineError> {
    let profile = BudgetProfile::new(cfg)?;
    crate::ordered_map(lambdas, |&l| profile.effective_rate(l))
        .into_iter()
        .collect()
}

/// Maximum effective arrival rate over the admissible λ range (configured rate ignored).
pub fn max_effective_arrival_rate(cfg: &ValidatedConfig) -> Result<RatePeak, PipelineError> {
    BudgetProfile::new(cfg)?.max_effective_rate()
}

/// One point of the rate–accuracy region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPoint {
    pub accuracy: f64,
    pub side_px: f64,
    pub lambda_star: f64,
    pub lambda_eff_star: f64,
    /// `ρ_max / T_s`: loss-free throughput at maximum load.
    pub ideal_rate: f64,
}

/// Maximum effective rate for each target accuracy (configured side and λ ignored).
pub fn rate_accuracy_region(cfg: &ValidatedConfig, accuracies: &[f64]) -> Result<Vec<RegionPoint>, PipelineError> {
    let sides = accuracies
        .iter()
        .map(|&a| detection::accuracy_inverse(a, &cfg.detection))
        .collect::<Result<Vec<_>, _>>()?;
    let cfgs = sides
        .iter()
        .map(|&s| cfg.with(|c| c.image.side_px = s))
        .collect::<Result<Vec<_>, _>>()?;
    let peaks = crate::ordered_map(&cfgs, |c| {
        BudgetProfile::new(c).and_then(|p| p.max_effective_rate().map(|m| (m, p.ideal_rate())))
    });
    accuracies
        .iter()
        .zip(sides)
        .zip(peaks)
        .map(|((&accuracy, side_px), res)| {
            let (peak, ideal_rate) = res?;
            Ok(RegionPoint {
                accuracy,
                side_px,
                lambda_star: peak.lambda_star,
                lambda_eff_star: peak.lambda_eff_star.min(ideal_rate),
                ideal_rate,
            })
        })
        .collect()
}

/// Success probabilities over a distance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessProfile {
    pub r_grid: Vec<f64>,
    pub p_succ: Vec<f64>,
    pub lambda_eff: f64,
    pub side_px: f64,
    pub lambda_fps: f64,
    pub deadline_s: f64,
}

impl SuccessProfile {
    /// Grid indices `i ≥ 1` where `p_succ` rises from `i` to `i + 1`.
    pub fn monotonicity_violations(&self, tol: f64) -> Vec<usize> {
        (1..self.p_succ.len().saturating_sub(1))
            .filter(|&i| self.p_succ[i + 1] > self.p_succ[i] + tol)
            .collect()
    }
}

pub fn success_profile(cfg: &ValidatedConfig, r_grid: &[f64]) -> Result<SuccessProfile, PipelineError> {
    let queue = server_queue(cfg)?;
    let p_succ = crate::ordered_map(r_grid, |&r| p_succ_with_queue(r, cfg, &queue))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let lambda_eff = effective_arrival_rate(cfg)?;
    Ok(SuccessProfile {
        r_grid: r_grid.to_vec(),
        p_succ,
        lambda_eff,
        side_px: cfg.image.side_px,
        lambda_fps: cfg.server.aggregate_lambda,
        deadline_s: cfg.server.deadline_s,
    })
}

/// Cumulative share of success probability against cumulative share of users,
/// users sorted from worst to best.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzCurve {
    /// `0, 1/n, …, 1`.
    pub population_fraction: Vec<f64>,
    pub success_share: Vec<f64>,
    /// Largest vertical distance below the equality line.
    pub gap: f64,
}

/// Lorenz curve of an arbitrary vector of per-user success probabilities.
pub fn lorenz_from_values(values: &[f64]) -> Result<LorenzCurve, PipelineError> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(PipelineError::Invalid("Lorenz input must be non-negative and finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return Err(PipelineError::DegenerateLorenz);
    }
    let n = sorted.len();
    let mut population_fraction = Vec::with_capacity(n + 1);
    let mut success_share = Vec::with_capacity(n + 1);
    population_fraction.push(0.0);
    success_share.push(0.0);
    let mut acc = 0.0;
    let mut gap: f64 = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let u = (k + 1) as f64 / n as f64;
        let l = if k + 1 == n { 1.0 } else { (acc / total).min(u) };
        gap = gap.max(u - l);
        population_fraction.push(u);
        success_share.push(l);
    }
    Ok(LorenzCurve {
        population_fraction,
        success_share,
        gap,
    })
}

/// Lorenz curve over `n_quantiles` users placed at the Rayleigh quantiles
/// `(i − 0.5)/n`.
pub fn lorenz_curve(cfg: &ValidatedConfig, n_quantiles: usize) -> Result<LorenzCurve, PipelineError> {
    if n_quantiles < 10 {
        return Err(PipelineError::Invalid("at least ten quantiles are needed"));
    }
    let dist = DistancePdf::new(cfg.network.lambda_b);
    let queue = server_queue(cfg)?;
    let rs: Vec<f64> = (0..n_quantiles)
        .map(|i| dist.quantile((i as f64 + 0.5) / n_quantiles as f64))
        .collect();
    let p = crate::ordered_map(&rs, |&r| p_succ_with_queue(r, cfg, &queue))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    lorenz_from_values(&p)
}
