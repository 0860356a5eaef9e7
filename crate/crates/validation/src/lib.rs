//! Acceptance criteria for the edgevid models.
//!
//! Each [`Criterion`] evaluates one end-to-end claim about the models and
//! reports a verdict with the numbers behind it. The `acceptance` test target
//! runs them all and prints one line per criterion.

use std::fs;
use std::time::{Duration, Instant};

use edgevid::detection::{accuracy, service_time};
use edgevid::montecarlo::{end_to_end_success, link_estimate, mdi_des, VoronoiSampler};
use edgevid::numerics::{integrate_semi_infinite_scaled, QuadratureSpec};
use edgevid::pipeline::{lorenz_curve, p_succ_given_r, rate_accuracy_region, BudgetProfile, LorenzCurve};
use edgevid::queue::build_queue;
use edgevid::radio::{coverage_given_r, ergodic_capacity_given_r};
use edgevid::{validate, SystemConfig, ValidatedConfig};
use edgevid_cli::commands::count_peaks;
use edgevid_cli::manifest::{perform, RunRequest};
use edgevid_cli::plan::{Grid, Plan};

/// Verdict of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    /// Wall-clock allowance; `None` when the check is instantaneous.
    pub time_limit: Option<Duration>,
    pub run: fn() -> Result<Outcome, String>,
}

/// Result of [`Criterion::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub elapsed: Duration,
}

impl Criterion {
    /// Runs the check and folds the time limit into the verdict.
    pub fn evaluate(&self) -> Verdict {
        let start = Instant::now();
        let mut outcome = (self.run)().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let elapsed = start.elapsed();
        if let Some(limit) = self.time_limit {
            if elapsed > limit {
                outcome.pass = false;
                outcome.detail.push_str(&format!(
                    "; took {:.0}s, limit {}s",
                    elapsed.as_secs_f64(),
                    limit.as_secs()
                ));
            }
        }
        Verdict { outcome, elapsed }
    }
}

pub fn criteria() -> Vec<Criterion> {
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    vec![
        Criterion {
            id: 1,
            title: "detection accuracy at 280/430/600 px",
            time_limit: None,
            run: detection_fidelity,
        },
        Criterion {
            id: 2,
            title: "reference loads are admissible",
            time_limit: None,
            run: load_admissibility,
        },
        Criterion {
            id: 3,
            title: "link quadrature vs interference sampler",
            time_limit: mins(5),
            run: quadrature_vs_sampler,
        },
        Criterion {
            id: 4,
            title: "full Voronoi geometry within 0.05",
            time_limit: mins(10),
            run: voronoi_bound,
        },
        Criterion {
            id: 5,
            title: "M/D/1 waiting time vs event simulation",
            time_limit: mins(5),
            run: queue_correctness,
        },
        Criterion {
            id: 6,
            title: "end-to-end success vs simulation",
            time_limit: mins(5),
            run: end_to_end,
        },
        Criterion {
            id: 7,
            title: "effective rate curve shape",
            time_limit: mins(30),
            run: effective_rate_shape,
        },
        Criterion {
            id: 8,
            title: "rate-accuracy region ordering",
            time_limit: mins(60),
            run: region_ordering,
        },
        Criterion {
            id: 9,
            title: "Lorenz fairness ordering",
            time_limit: mins(10),
            run: fairness_ordering,
        },
        Criterion {
            id: 10,
            title: "validation report determinism",
            time_limit: mins(10),
            run: determinism,
        },
    ]
}

fn reference() -> ValidatedConfig {
    validate(SystemConfig::reference()).expect("reference scenario is valid")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn detection_fidelity() -> Result<Outcome, String> {
    let det = SystemConfig::reference().detection;
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, target) in [(280.0, 0.74), (430.0, 0.90), (600.0, 0.97)] {
        let a = accuracy(s, &det);
        pass &= (a - target).abs() <= 0.01;
        parts.push(format!("A({s})={a:.4}"));
    }
    Ok(Outcome {
        pass,
        detail: parts.join(" "),
    })
}

fn load_admissibility() -> Result<Outcome, String> {
    let cfg = SystemConfig::reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, lambda, approx) in [(280.0, 100.0, 0.984), (430.0, 70.0, 0.971), (600.0, 40.0, 0.937)] {
        let rho = lambda * service_time(s, &cfg.detection);
        pass &= rho <= 0.99 && (rho - approx).abs() < 5e-4;
        pass &= build_queue(lambda, service_time(s, &cfg.detection), cfg.server.rho_max).is_ok();
        parts.push(format!("rho({s},{lambda})={rho:.5}"));
    }
    Ok(Outcome {
        pass,
        detail: parts.join(" "),
    })
}

fn quadrature_vs_sampler() -> Result<Outcome, String> {
    let cfg = reference();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, r) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        let est = link_estimate(r, &[0.1, 1.0, 10.0], &cfg, 1_000_000, 300 + k as u64).map_err(err)?;
        for (g, e) in &est.coverage {
            let z = (e.mean - coverage_given_r(*g, r, &cfg).map_err(err)?).abs() / e.std_error();
            worst = worst.max(z);
            if z > 3.0 {
                failures.push(format!("coverage r={r} gamma={g} z={z:.2}"));
            }
        }
        let e = est.capacity_bps;
        let z = (e.mean - ergodic_capacity_given_r(r, &cfg).map_err(err)?).abs() / e.std_error();
        worst = worst.max(z);
        if z > 3.0 {
            failures.push(format!("capacity r={r} z={z:.2}"));
        }
    }
    Ok(Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("12 points, largest deviation {worst:.2} standard errors")
        } else {
            failures.join("; ")
        },
    })
}

fn voronoi_bound() -> Result<Outcome, String> {
    let cfg = reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, r) in [0.5, 1.0].into_iter().enumerate() {
        let sim = VoronoiSampler::new(r, &cfg)
            .map_err(err)?
            .coverage(1.0, 20_000, 400 + k as u64)
            .map_err(err)?;
        let analytic = coverage_given_r(1.0, r, &cfg).map_err(err)?;
        let gap = (sim.mean - analytic).abs();
        pass &= gap <= 0.05;
        parts.push(format!(
            "r={r}: simulated {:.4} +- {:.4}, analytic {analytic:.4}, gap {gap:.4}",
            sim.mean, sim.half_width_95
        ));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn queue_correctness() -> Result<Outcome, String> {
    const SERVICE_S: f64 = 0.01;
    let spec = QuadratureSpec::new(1e-10, 1e-9, 2000, 1e-12).map_err(err)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, rho) in [0.5, 0.9, 0.98].into_iter().enumerate() {
        let lambda = rho / SERVICE_S;
        let q = build_queue(lambda, SERVICE_S, 0.99).map_err(err)?;
        let des = mdi_des(lambda, SERVICE_S, 10_000_000, 500 + k as u64).map_err(err)?;
        let ks = des.ks_distance(|t| q.waiting_cdf(t));
        let idle_gap = (des.zero_fraction - (1.0 - rho)).abs();
        let implied = integrate_semi_infinite_scaled(
            |t| 1.0 - q.waiting_cdf(t),
            0.0,
            SERVICE_S,
            &spec,
            None::<fn(f64) -> f64>,
        )
        .map_err(err)?;
        let pk = rho * SERVICE_S / (2.0 * (1.0 - rho));
        let rel = (implied / pk - 1.0).abs();
        pass &= ks < 0.005 && idle_gap <= 0.005 && rel <= 0.005;
        parts.push(format!(
            "rho={rho}: KS {ks:.5}, P(W=0) off by {idle_gap:.5}, mean off by {rel:.2e}"
        ));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

/// `(r_km, side_px, lambda_fps, deadline_s)` points of the end-to-end check.
pub const END_TO_END_POINTS: [(f64, f64, f64, f64); 3] = [
    (0.5, 280.0, 100.0, 0.3),
    (0.3, 280.0, 90.0, 0.3),
    (0.25, 430.0, 70.0, 0.4),
];

fn end_to_end() -> Result<Outcome, String> {
    let base = reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (r, s, lambda, t_k)) in END_TO_END_POINTS.into_iter().enumerate() {
        let cfg = base
            .with(|c| {
                c.image.side_px = s;
                c.server.aggregate_lambda = lambda;
                c.server.deadline_s = t_k;
            })
            .map_err(err)?;
        let analytic = p_succ_given_r(r, &cfg).map_err(err)?;
        let sim = end_to_end_success(&cfg, r, 100_000_000, 600 + k as u64).map_err(err)?;
        let gap = (sim.estimate.mean - analytic).abs();
        pass &= gap <= 0.02;
        parts.push(format!(
            "({r},{s},{lambda},{t_k}): analytic {analytic:.4} simulated {:.4} (se {:.4})",
            sim.estimate.mean, sim.replication_std_error
        ));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn effective_rate_shape() -> Result<Outcome, String> {
    let base = reference();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut profiles = Vec::new();
    for s in [280.0, 430.0, 600.0] {
        let cfg = base
            .with(|c| {
                c.image.side_px = s;
                c.server.deadline_s = 0.3;
            })
            .map_err(err)?;
        profiles.push((s, BudgetProfile::new(&cfg).map_err(err)?));
    }
    let probe = 1e-3
        * profiles
            .iter()
            .map(|(_, p)| p.ideal_rate())
            .fold(f64::INFINITY, f64::min);
    let mut slopes = Vec::new();
    for (s, profile) in &profiles {
        let ideal = profile.ideal_rate();
        let grid: Vec<f64> = (1..=200).map(|i| ideal * i as f64 / 200.0).collect();
        let values = grid
            .iter()
            .map(|&l| profile.effective_rate(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let peaks = count_peaks(&values);
        let bounded = grid.iter().zip(&values).all(|(l, v)| *v <= *l);
        let slope = profile.effective_rate(probe).map_err(err)? / probe;
        pass &= peaks == 1 && bounded;
        parts.push(format!("s={s}: {peaks} peak(s), initial slope {slope:.4}"));
        slopes.push(slope);
    }
    let ordered = slopes.windows(2).all(|w| w[0] > w[1]);
    pass &= ordered;
    if !ordered {
        parts.push("initial slopes not ordered".into());
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn region_ordering() -> Result<Outcome, String> {
    let base = reference();
    let accuracies = Grid {
        lo: 0.7,
        hi: 0.97,
        n: 28,
    }
    .points();
    let mut curves = Vec::new();
    for b in [2.1e6, 10e6] {
        for t in [0.2, 0.3] {
            let cfg = base
                .with(|c| {
                    c.radio.bandwidth_hz = b;
                    c.server.deadline_s = t;
                })
                .map_err(err)?;
            curves.push(((b, t), rate_accuracy_region(&cfg, &accuracies).map_err(err)?));
        }
    }
    let below = curves
        .iter()
        .flat_map(|(_, c)| c)
        .all(|p| p.lambda_eff_star < p.ideal_rate);
    let value = |b: f64, t: f64| -> Vec<f64> {
        curves
            .iter()
            .find(|(k, _)| *k == (b, t))
            .map(|(_, c)| c.iter().map(|p| p.lambda_eff_star).collect())
            .unwrap()
    };
    let dominates = |hi: Vec<f64>, lo: Vec<f64>| hi.iter().zip(&lo).all(|(h, l)| h >= l);
    let bandwidth = [0.2, 0.3].iter().all(|&t| dominates(value(10e6, t), value(2.1e6, t)));
    let deadline = [2.1e6, 10e6].iter().all(|&b| dominates(value(b, 0.3), value(b, 0.2)));
    let peak = |b, t| value(b, t).into_iter().fold(0.0, f64::max);
    Ok(Outcome {
        pass: below && bandwidth && deadline,
        detail: format!(
            "below ideal {below}, 10 MHz dominates {bandwidth}, stricter deadline lower {deadline}; peaks {:.2}/{:.2}/{:.2}/{:.2} for (2.1 MHz, 10 MHz) x (0.2, 0.3 s)",
            peak(2.1e6, 0.2),
            peak(10e6, 0.2),
            peak(2.1e6, 0.3),
            peak(10e6, 0.3)
        ),
    })
}

fn lorenz_shape_ok(c: &LorenzCurve) -> bool {
    let u = &c.population_fraction;
    let l = &c.success_share;
    let ends = l[0].abs() <= 1e-12 && (l[l.len() - 1] - 1.0).abs() <= 1e-9 && u[0] == 0.0 && u[u.len() - 1] == 1.0;
    let under = u.iter().zip(l).all(|(u, l)| *l <= *u + 1e-12);
    let slopes: Vec<f64> = (1..u.len()).map(|i| (l[i] - l[i - 1]) / (u[i] - u[i - 1])).collect();
    let convex = slopes.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    ends && under && convex
}

fn fairness_ordering() -> Result<Outcome, String> {
    let base = reference();
    let det = base.detection;
    let load = 0.98;
    let scenario = |b: f64, s: f64| {
        base.with(|c| {
            c.radio.bandwidth_hz = b;
            c.image.side_px = s;
            c.server.aggregate_lambda = load / service_time(s, &det);
            c.server.deadline_s = 0.3;
        })
    };
    let bandwidth_limited = lorenz_curve(&scenario(2.1e6, 600.0).map_err(err)?, 1000).map_err(err)?;
    let computation_limited = lorenz_curve(&scenario(10e6, 280.0).map_err(err)?, 1000).map_err(err)?;
    let balanced = lorenz_curve(&scenario(2.1e6, 280.0).map_err(err)?, 1000).map_err(err)?;
    let shapes = [&bandwidth_limited, &computation_limited, &balanced]
        .iter()
        .all(|c| lorenz_shape_ok(c));
    let ordered = bandwidth_limited.gap > computation_limited.gap;
    Ok(Outcome {
        pass: shapes && ordered,
        detail: format!(
            "load {load}: gap {:.4} bandwidth-limited vs {:.4} computation-limited ({:.4} in between); curve shape {}",
            bandwidth_limited.gap,
            computation_limited.gap,
            balanced.gap,
            if shapes { "ok" } else { "violated" }
        ),
    })
}

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut reports = Vec::new();
    for (run, workers) in [(0, 1), (1, 1), (2, 4)] {
        let out = dir.path().join(format!("run{run}"));
        let req = RunRequest {
            plan: Plan::Validate { budget: 1.0 },
            config: reference(),
            seed: 20_241_014,
            out_dir: out.clone(),
            workers: Some(workers),
        };
        perform(&req).map_err(err)?;
        let json = fs::read(out.join("validate_report.json")).map_err(err)?;
        let csv = fs::read(out.join("validate_report.csv")).map_err(err)?;
        reports.push((json, csv));
    }
    let repeat = reports[0] == reports[1];
    let workers = reports[0] == reports[2];
    Ok(Outcome {
        pass: repeat && workers,
        detail: format!(
            "repeat identical {repeat}, 1 vs 4 workers identical {workers} ({} byte report)",
            reports[0].0.len()
        ),
    })
}
