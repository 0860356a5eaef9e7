//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::manifest::{perform, RunManifest, RunRequest};
use crate::plan::{self, Curve, Grid, Plan, Scenario, Triple};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "edgevid",
    version,
    about = "Uplink, queueing and deadline models for edge video analytics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML); the reference scenario when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a model field, e.g. `--set radio.bandwidth_hz=10e6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ergodic uplink rate against distance for several power-control settings.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LO:HI:N")]
        r_grid: Option<Grid>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        /// Reference powers, e.g. `10mW,100mW`.
        #[arg(long, value_delimiter = ',')]
        ref_power: Vec<String>,
    },
    /// Success probability against distance.
    Psucc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LO:HI:N")]
        r_grid: Option<Grid>,
        /// `side_px,lambda,t_k`; repeatable.
        #[arg(long = "triple")]
        triples: Vec<String>,
    },
    /// Effective against offered arrival rate.
    LambdaEff {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LO:HI:N")]
        lambda_grid: Option<Grid>,
        /// Points per curve when no grid is given.
        #[arg(long)]
        points: Option<usize>,
        /// `side_px,t_k`; repeatable.
        #[arg(long = "curve")]
        curves: Vec<String>,
    },
    /// Maximum effective rate against detection accuracy.
    Region {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LO:HI:N")]
        accuracy_grid: Option<Grid>,
        #[arg(long = "bandwidth", value_delimiter = ',')]
        bandwidths: Vec<f64>,
        #[arg(long = "deadline", value_delimiter = ',')]
        deadlines: Vec<f64>,
    },
    /// Lorenz curves of per-location success probability.
    Lorenz {
        #[command(flatten)]
        common: Common,
        /// `id,bandwidth_hz,side_px,lambda,t_k`; repeatable.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long)]
        n_quantiles: Option<usize>,
    },
    /// Compare analytical results with the simulators.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Multiplier on every sample count.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Re-run a previous invocation from its manifest.
    Replay {
        manifest: PathBuf,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn or_default<T: Clone>(flag: Vec<T>, file: Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.unwrap_or(default)
    }
}

type PlanBuilder = Box<dyn FnOnce(&Scenario) -> Result<Plan, CliError>>;

/// Turns parsed arguments into a run request.
pub fn resolve(command: Command) -> Result<RunRequest, CliError> {
    let (common, build): (Common, PlanBuilder) = match command {
        Command::Rate {
            common,
            r_grid,
            epsilon,
            ref_power,
        } => (
            common,
            Box::new(move |s: &Scenario| {
                let powers = if !ref_power.is_empty() {
                    ref_power
                } else {
                    s.sweep
                        .ref_power
                        .clone()
                        .unwrap_or_else(|| vec!["10mW".into(), "100mW".into()])
                };
                Ok(Plan::Rate {
                    r_grid: plan::sweep_grid(r_grid, &s.sweep.r_grid, plan::default_r_grid())?,
                    epsilons: or_default(epsilon, s.sweep.epsilon.clone(), vec![0.0, 0.25, 0.5]),
                    ref_powers_w: powers.iter().map(|p| plan::parse_power(p)).collect::<Result<_, _>>()?,
                })
            }),
        ),
        Command::Psucc {
            common,
            r_grid,
            triples,
        } => (
            common,
            Box::new(move |s: &Scenario| {
                let triples = if !triples.is_empty() {
                    triples
                        .iter()
                        .map(|t| plan::parse_numbers(t, 3).map(|v| [v[0], v[1], v[2]]))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    match &s.sweep.triples {
                        Some(t) => t.clone(),
                        None => plan::default_triples()
                            .iter()
                            .map(|t| [t.side_px, t.lambda_fps, t.deadline_s])
                            .collect(),
                    }
                };
                Ok(Plan::Psucc {
                    r_grid: plan::sweep_grid(
                        r_grid,
                        &s.sweep.r_grid,
                        Grid {
                            lo: 0.01,
                            hi: 2.0,
                            n: 200,
                        },
                    )?,
                    triples: triples
                        .into_iter()
                        .map(|[side_px, lambda_fps, deadline_s]| Triple {
                            side_px,
                            lambda_fps,
                            deadline_s,
                        })
                        .collect(),
                })
            }),
        ),
        Command::LambdaEff {
            common,
            lambda_grid,
            points,
            curves,
        } => (
            common,
            Box::new(move |s: &Scenario| {
                let curves = if !curves.is_empty() {
                    curves
                        .iter()
                        .map(|c| plan::parse_numbers(c, 2).map(|v| [v[0], v[1]]))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    match &s.sweep.curves {
                        Some(c) => c.clone(),
                        None => plan::default_curves()
                            .iter()
                            .map(|c| [c.side_px, c.deadline_s])
                            .collect(),
                    }
                };
                let lambda_grid = match (lambda_grid, &s.sweep.lambda_grid) {
                    (Some(g), _) => Some(g),
                    (None, Some(t)) => Some(t.parse()?),
                    (None, None) => None,
                };
                Ok(Plan::LambdaEff {
                    lambda_grid,
                    points_per_curve: points.or(s.sweep.points_per_curve).unwrap_or(200),
                    curves: curves
                        .into_iter()
                        .map(|[side_px, deadline_s]| Curve { side_px, deadline_s })
                        .collect(),
                })
            }),
        ),
        Command::Region {
            common,
            accuracy_grid,
            bandwidths,
            deadlines,
        } => (
            common,
            Box::new(move |s: &Scenario| {
                Ok(Plan::Region {
                    accuracy_grid: plan::sweep_grid(
                        accuracy_grid,
                        &s.sweep.accuracy_grid,
                        Grid {
                            lo: 0.7,
                            hi: 0.97,
                            n: 28,
                        },
                    )?,
                    bandwidths_hz: or_default(bandwidths, s.sweep.bandwidths_hz.clone(), vec![2.1e6, 10e6]),
                    deadlines_s: or_default(deadlines, s.sweep.deadlines_s.clone(), vec![0.2, 0.3]),
                })
            }),
        ),
        Command::Lorenz {
            common,
            scenarios,
            n_quantiles,
        } => (
            common,
            Box::new(move |s: &Scenario| {
                let scenarios = if !scenarios.is_empty() {
                    scenarios
                        .iter()
                        .map(|t| plan::parse_scenario(t))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    s.sweep.scenarios.clone().unwrap_or_else(plan::default_scenarios)
                };
                Ok(Plan::Lorenz {
                    scenarios,
                    n_quantiles: n_quantiles.or(s.sweep.n_quantiles).unwrap_or(1000),
                })
            }),
        ),
        Command::Validate { common, budget } => (
            common,
            Box::new(move |s: &Scenario| {
                Ok(Plan::Validate {
                    budget: budget.or(s.sweep.budget).unwrap_or(1.0),
                })
            }),
        ),
        Command::Replay {
            manifest,
            out_dir,
            workers,
        } => {
            let m = RunManifest::read(&manifest)?;
            let dir = out_dir.unwrap_or_else(|| manifest.parent().map(PathBuf::from).unwrap_or_default());
            return Ok(RunRequest {
                config: m.validated_config()?,
                plan: m.plan,
                seed: m.seed,
                out_dir: dir,
                workers,
            });
        }
    };
    let scenario = Scenario::load(common.config.as_deref())?;
    let config = scenario.resolve_config(&common.set)?;
    Ok(RunRequest {
        plan: build(&scenario)?,
        config,
        seed: common.seed,
        out_dir: common.out_dir,
        workers: common.workers,
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match resolve(cli.command).and_then(|req| run_request(&req)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("edgevid: {e}");
            e.exit_code()
        }
    }
}

/// Runs a resolved request, printing a short summary.
pub fn run_request(req: &RunRequest) -> Result<(), CliError> {
    let (output, manifest) = perform(req)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    for f in &manifest.outputs {
        println!("{}", req.out_dir.join(f).display());
    }
    if let Some(rep) = &output.report {
        for c in &rep.checks {
            println!(
                "{} {}{}: analytic {} estimate {} tolerance {}",
                if c.pass { "ok  " } else { "FAIL" },
                c.name,
                if c.tight { "" } else { " (loose)" },
                crate::format::fmt_num(c.analytic),
                crate::format::fmt_num(c.estimate),
                crate::format::fmt_num(c.tolerance)
            );
        }
        let failed: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
        if !failed.is_empty() {
            return Err(CliError::Validation(failed.join(", ")));
        }
    }
    Ok(())
}
