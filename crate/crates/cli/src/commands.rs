//! Execution of resolved plans into output tables.

use edgevid::pipeline::{self, BudgetProfile, PipelineError};
use edgevid::queue::QueueError;
use edgevid::radio::{self, DistancePdf};
use edgevid::ValidatedConfig;
use rayon::prelude::*;

use crate::format::Table;
use crate::plan::{Grid, LorenzScenario, Plan};
use crate::report;
use crate::{row, CliError};

/// Tables and per-item problems from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    /// Items skipped without aborting the run (overloaded triples, degenerate curves).
    pub warnings: Vec<String>,
    /// Machine-readable validation report, for `validate` only.
    pub report: Option<report::Report>,
}

impl RunOutput {
    fn tables(tables: Vec<Table>, warnings: Vec<String>) -> Self {
        RunOutput {
            tables,
            warnings,
            report: None,
        }
    }

    pub fn table(&self, file_name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file_name == file_name)
    }
}

/// Runs `plan` on the current rayon pool.
pub fn execute(plan: &Plan, cfg: &ValidatedConfig, seed: u64) -> Result<RunOutput, CliError> {
    match plan {
        Plan::Rate {
            r_grid,
            epsilons,
            ref_powers_w,
        } => rate(cfg, r_grid, epsilons, ref_powers_w),
        Plan::Psucc { r_grid, triples } => psucc(cfg, r_grid, triples),
        Plan::LambdaEff {
            lambda_grid,
            points_per_curve,
            curves,
        } => lambda_eff(cfg, lambda_grid.as_ref(), *points_per_curve, curves),
        Plan::Region {
            accuracy_grid,
            bandwidths_hz,
            deadlines_s,
        } => region(cfg, accuracy_grid, bandwidths_hz, deadlines_s),
        Plan::Lorenz { scenarios, n_quantiles } => lorenz(cfg, scenarios, *n_quantiles),
        Plan::Validate { budget } => {
            let rep = report::run_validation(cfg, seed, *budget)?;
            Ok(RunOutput {
                tables: vec![rep.to_table()],
                warnings: Vec::new(),
                report: Some(rep),
            })
        }
    }
}

fn positive_distances(grid: &Grid) -> Result<Vec<f64>, CliError> {
    if grid.lo <= 0.0 {
        return Err(CliError::Config("distance grid must start above zero".into()));
    }
    Ok(grid.points())
}

fn rate(cfg: &ValidatedConfig, grid: &Grid, epsilons: &[f64], powers: &[f64]) -> Result<RunOutput, CliError> {
    let rs = positive_distances(grid)?;
    let dist = DistancePdf::new(cfg.network.lambda_b);
    let mut table = Table::new("rate.csv", &["r_km", "epsilon", "ref_power_w", "rate_bps", "user_cdf"]);
    for &eps in epsilons {
        for &p in powers {
            let c = cfg.with(|c| {
                c.power.epsilon = eps;
                c.power.ref_power_watt = p;
            })?;
            let rates = rs
                .par_iter()
                .map(|&r| radio::ergodic_capacity_given_r(r, &c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(PipelineError::from)?;
            for (&r, rate) in rs.iter().zip(rates) {
                table.push(row![r, eps, p, rate, dist.cdf(r)]);
            }
        }
    }
    Ok(RunOutput::tables(vec![table], Vec::new()))
}

fn skip_or_fail(e: PipelineError, what: String, warnings: &mut Vec<String>) -> Result<(), CliError> {
    match e {
        PipelineError::Queue(QueueError::Overload { .. }) | PipelineError::DegenerateLorenz => {
            warnings.push(format!("{what}: {e}"));
            Ok(())
        }
        e => Err(e.into()),
    }
}

fn psucc(cfg: &ValidatedConfig, grid: &Grid, triples: &[crate::plan::Triple]) -> Result<RunOutput, CliError> {
    let rs = positive_distances(grid)?;
    let mut table = Table::new("psucc.csv", &["r_km", "s_px", "lambda_fps", "t_k_s", "p_succ"]);
    let mut warnings = Vec::new();
    for t in triples {
        let c = cfg.with(|c| {
            c.image.side_px = t.side_px;
            c.server.aggregate_lambda = t.lambda_fps;
            c.server.deadline_s = t.deadline_s;
        })?;
        let queue = match pipeline::server_queue(&c) {
            Ok(q) => q,
            Err(e) => {
                let what = format!("triple ({}, {}, {})", t.side_px, t.lambda_fps, t.deadline_s);
                skip_or_fail(e, what, &mut warnings)?;
                continue;
            }
        };
        let ps = rs
            .par_iter()
            .map(|&r| pipeline::p_succ_with_queue(r, &c, &queue))
            .collect::<Result<Vec<_>, _>>()?;
        for (&r, p) in rs.iter().zip(ps) {
            table.push(row![r, t.side_px, t.lambda_fps, t.deadline_s, p]);
        }
    }
    Ok(RunOutput::tables(vec![table], warnings))
}

/// Number of strict interior local maxima, counting flat tops once.
pub fn count_peaks(values: &[f64]) -> usize {
    let mut peaks = 0;
    let mut rising = false;
    for w in values.windows(2) {
        if w[1] > w[0] {
            rising = true;
        } else if w[1] < w[0] {
            if rising {
                peaks += 1;
            }
            rising = false;
        }
    }
    if rising {
        // maximum at the right edge
        peaks += 1;
    }
    peaks
}

fn lambda_eff(
    cfg: &ValidatedConfig,
    grid: Option<&Grid>,
    points: usize,
    curves: &[crate::plan::Curve],
) -> Result<RunOutput, CliError> {
    if grid.is_none() && points < 2 {
        return Err(CliError::Config("need at least two points per curve".into()));
    }
    let mut table = Table::new("lambda_eff.csv", &["lambda", "s_px", "t_k_s", "lambda_eff"]);
    let mut peaks = Table::new(
        "lambda_eff_peaks.csv",
        &["s_px", "t_k_s", "lambda_star", "lambda_eff_star", "grid_peaks"],
    );
    let mut warnings = Vec::new();
    for curve in curves {
        let c = cfg.with(|c| {
            c.image.side_px = curve.side_px;
            c.server.deadline_s = curve.deadline_s;
        })?;
        let profile = BudgetProfile::new(&c)?;
        let hi = profile.ideal_rate();
        let lambdas: Vec<f64> = match grid {
            Some(g) => {
                let pts = g.points();
                let kept: Vec<f64> = pts
                    .iter()
                    .copied()
                    .filter(|&l| l > 0.0 && l <= hi * (1.0 + 1e-12))
                    .collect();
                if kept.len() < pts.len() {
                    warnings.push(format!(
                        "curve ({}, {}): {} grid points outside (0, {:.6}] skipped",
                        curve.side_px,
                        curve.deadline_s,
                        pts.len() - kept.len(),
                        hi
                    ));
                }
                kept
            }
            None => (1..=points).map(|i| hi * i as f64 / points as f64).collect(),
        };
        let values = lambdas
            .par_iter()
            .map(|&l| profile.effective_rate(l))
            .collect::<Result<Vec<_>, _>>()?;
        for (&l, v) in lambdas.iter().zip(&values) {
            table.push(row![l, curve.side_px, curve.deadline_s, *v]);
        }
        let peak = profile.max_effective_rate()?;
        peaks.push(row![
            curve.side_px,
            curve.deadline_s,
            peak.lambda_star,
            peak.lambda_eff_star,
            count_peaks(&values)
        ]);
    }
    Ok(RunOutput::tables(vec![table, peaks], warnings))
}

fn region(cfg: &ValidatedConfig, grid: &Grid, bandwidths: &[f64], deadlines: &[f64]) -> Result<RunOutput, CliError> {
    let accuracies = grid.points();
    let mut table = Table::new(
        "region.csv",
        &["accuracy", "B_k_hz", "t_k_s", "lambda_eff_star", "ideal_rate"],
    );
    for &b in bandwidths {
        for &t in deadlines {
            let c = cfg.with(|c| {
                c.radio.bandwidth_hz = b;
                c.server.deadline_s = t;
            })?;
            for p in pipeline::rate_accuracy_region(&c, &accuracies)? {
                table.push(row![p.accuracy, b, t, p.lambda_eff_star, p.ideal_rate]);
            }
        }
    }
    Ok(RunOutput::tables(vec![table], Vec::new()))
}

fn lorenz(cfg: &ValidatedConfig, scenarios: &[LorenzScenario], n: usize) -> Result<RunOutput, CliError> {
    let mut table = Table::new("lorenz.csv", &["scenario_id", "u", "L_u"]);
    let mut summary = Table::new("lorenz_summary.csv", &["scenario_id", "gap"]);
    let mut warnings = Vec::new();
    for s in scenarios {
        let c = cfg.with(|c| {
            c.radio.bandwidth_hz = s.bandwidth_hz;
            c.image.side_px = s.side_px;
            c.server.aggregate_lambda = s.lambda_fps;
            c.server.deadline_s = s.deadline_s;
        })?;
        match pipeline::lorenz_curve(&c, n) {
            Ok(curve) => {
                for (u, l) in curve.population_fraction.iter().zip(&curve.success_share) {
                    table.push(row![s.id.as_str(), *u, *l]);
                }
                summary.push(row![s.id.as_str(), curve.gap]);
            }
            Err(e) => skip_or_fail(e, format!("scenario {}", s.id), &mut warnings)?,
        }
    }
    Ok(RunOutput::tables(vec![table, summary], warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_counting() {
        assert_eq!(count_peaks(&[1.0, 2.0, 3.0, 2.0, 1.0]), 1);
        assert_eq!(count_peaks(&[1.0, 2.0, 2.0, 1.0]), 1);
        assert_eq!(count_peaks(&[1.0, 3.0, 2.0, 4.0, 1.0]), 2);
        assert_eq!(count_peaks(&[1.0, 2.0, 3.0]), 1);
        assert_eq!(count_peaks(&[0.0, 0.0]), 0);
    }
}
