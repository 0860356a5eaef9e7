use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use edgevid::SystemConfig;
use edgevid_cli::report::run_validation;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["edgevid"];
    full.extend_from_slice(args);
    edgevid_cli::run(full)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).expect("csv opens");
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().expect("numeric cell")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgevid"))
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[plotting]\ncolour = 1\n").unwrap();
    let out = dir.path().join("o");
    let status = bin()
        .args([
            "rate",
            "--config",
            bad.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bin()
        .args(["rate", "--set", "bandwidth_hz=-1", "--out-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bin().args(["rate", "--r-grid", "1:0:3"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["no-such-command"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn rate_table_columns_and_claims() {
    let dir = tempfile::tempdir().unwrap();
    let lambda_b = SystemConfig::reference().network.lambda_b;
    let median = (std::f64::consts::LN_2 / (std::f64::consts::PI * lambda_b)).sqrt();
    let grid = format!("{median}:{}:2", median + 1.0);
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["rate", "--r-grid", &grid, "--out-dir", out]), 0);
    assert_eq!(
        run(&["rate", "--r-grid", "0.05:3:40", "--epsilon", "0,0.25", "--out-dir", out]),
        0
    );
    let (header, rows) = read_csv(&dir.path().join("rate.csv"));
    assert_eq!(header, ["r_km", "epsilon", "ref_power_w", "rate_bps", "user_cdf"]);
    assert_eq!(rows.len(), 2 * 2 * 40);

    for row in &rows {
        let r = num(&row[0]);
        let expect = 1.0 - (-lambda_b * std::f64::consts::PI * r * r).exp();
        assert!((num(&row[4]) - expect).abs() < 1e-8);
    }
    let eps0: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "0" && r[2] == "0.01").collect();
    for w in eps0.windows(2) {
        assert!(num(&w[1][3]) <= num(&w[0][3]));
    }

    fs::remove_file(dir.path().join("rate.csv")).unwrap();
    assert_eq!(run(&["rate", "--r-grid", &grid, "--out-dir", out]), 0);
    let (_, rows) = read_csv(&dir.path().join("rate.csv"));
    let at_median: Vec<f64> = rows
        .iter()
        .filter(|r| (num(&r[0]) - median).abs() < 1e-8)
        .map(|r| num(&r[4]))
        .collect();
    assert!(!at_median.is_empty());
    for c in at_median {
        assert!((c - 0.5).abs() < 1e-8);
    }

    assert_eq!(
        run(&[
            "rate",
            "--r-grid",
            "1:1:1",
            "--epsilon",
            "0.25",
            "--ref-power",
            "10mW,100mW",
            "--out-dir",
            out
        ]),
        0
    );
    let (_, rows) = read_csv(&dir.path().join("rate.csv"));
    let low = num(&rows[0][3]);
    let high = num(&rows[1][3]);
    assert!((high - low).abs() / low < 0.05, "{low} vs {high}");
}

#[test]
fn psucc_bounds_deadline_order_and_overload() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["psucc", "--r-grid", "0.05:2:25", "--out-dir", out]), 0);
    let (header, rows) = read_csv(&dir.path().join("psucc.csv"));
    assert_eq!(header, ["r_km", "s_px", "lambda_fps", "t_k_s", "p_succ"]);
    assert_eq!(rows.len(), 6 * 25);
    let mut by_key: HashMap<(String, String, String), HashMap<String, f64>> = HashMap::new();
    for r in &rows {
        let p = num(&r[4]);
        assert!((0.0..=1.0).contains(&p));
        by_key
            .entry((r[0].clone(), r[1].clone(), r[2].clone()))
            .or_default()
            .insert(r[3].clone(), p);
    }
    for m in by_key.values() {
        assert!(m["0.3"] >= m["0.2"] - 1e-12);
    }

    assert_eq!(
        run(&[
            "psucc",
            "--r-grid",
            "0.1:1:3",
            "--triple",
            "280,200,0.3",
            "--triple",
            "280,100,0.3",
            "--out-dir",
            out
        ]),
        0
    );
    let (_, rows) = read_csv(&dir.path().join("psucc.csv"));
    assert_eq!(rows.len(), 3);
    let manifest = fs::read_to_string(dir.path().join("psucc.manifest.json")).unwrap();
    assert!(manifest.contains("overload") || manifest.contains("Overload") || manifest.contains("exceeds"));
}

#[test]
fn lambda_eff_below_offered_with_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["lambda-eff", "--points", "40", "--out-dir", out]), 0);
    let (header, rows) = read_csv(&dir.path().join("lambda_eff.csv"));
    assert_eq!(header, ["lambda", "s_px", "t_k_s", "lambda_eff"]);
    for r in &rows {
        assert!(num(&r[3]) <= num(&r[0]) * (1.0 + 1e-12));
    }
    let (_, peaks) = read_csv(&dir.path().join("lambda_eff_peaks.csv"));
    assert_eq!(peaks.len(), 3);
    for p in &peaks {
        assert_eq!(p[4], "1");
    }
    // larger images peak earlier
    assert!(num(&peaks[0][2]) > num(&peaks[1][2]));
    assert!(num(&peaks[1][2]) > num(&peaks[2][2]));
}

#[test]
fn region_below_ideal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&[
            "region",
            "--accuracy-grid",
            "0.75:0.95:3",
            "--bandwidth",
            "2.1e6,10e6",
            "--deadline",
            "0.3",
            "--out-dir",
            out
        ]),
        0
    );
    let (header, rows) = read_csv(&dir.path().join("region.csv"));
    assert_eq!(header, ["accuracy", "B_k_hz", "t_k_s", "lambda_eff_star", "ideal_rate"]);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(num(&r[3]) <= num(&r[4]) * (1.0 + 1e-12));
    }
    for i in 0..3 {
        assert!(num(&rows[i + 3][3]) >= num(&rows[i][3]));
    }
}

#[test]
fn lorenz_endpoints_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["lorenz", "--n-quantiles", "200", "--out-dir", out]), 0);
    let (header, rows) = read_csv(&dir.path().join("lorenz.csv"));
    assert_eq!(header, ["scenario_id", "u", "L_u"]);
    for id in ["bandwidth-limited", "balanced", "computation-limited"] {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r[0] == id)
            .map(|r| (num(&r[1]), num(&r[2])))
            .collect();
        assert_eq!(pts.first().unwrap(), &(0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!(last.0, 1.0);
        assert!((last.1 - 1.0).abs() < 1e-9);
        for (u, l) in pts {
            assert!(l <= u + 1e-9);
        }
    }
    let (_, summary) = read_csv(&dir.path().join("lorenz_summary.csv"));
    assert_eq!(summary.len(), 3);
    for s in &summary {
        let g = num(&s[1]);
        assert!((0.0..1.0).contains(&g));
    }
}

#[test]
fn replay_reproduces_tables_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let scenario = dir.path().join("s.toml");
    fs::write(
        &scenario,
        "[radio]\nbandwidth_hz = 5e6\n[sweep]\nr_grid = \"0.1:1.5:12\"\ntriples = [[430, 70, 0.25]]\n",
    )
    .unwrap();
    assert_eq!(
        run(&[
            "psucc",
            "--config",
            scenario.to_str().unwrap(),
            "--seed",
            "9",
            "--out-dir",
            first.to_str().unwrap()
        ]),
        0
    );
    let manifest = first.join("psucc.manifest.json");
    assert_eq!(
        run(&[
            "replay",
            manifest.to_str().unwrap(),
            "--out-dir",
            second.to_str().unwrap()
        ]),
        0
    );
    let a = fs::read(first.join("psucc.csv")).unwrap();
    let b = fs::read(second.join("psucc.csv")).unwrap();
    assert_eq!(a, b);
    let (_, rows) = read_csv(&first.join("psucc.csv"));
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r[1] == "430" && r[3] == "0.25"));
}

#[test]
fn validate_is_deterministic_and_scales() {
    let cfg = edgevid::validate(SystemConfig::reference()).unwrap();
    let a = run_validation(&cfg, 17, 0.01).unwrap();
    let b = run_validation(&cfg, 17, 0.01).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let c = run_validation(&cfg, 18, 0.01).unwrap();
    assert_ne!(a.to_json(), c.to_json());

    let big = run_validation(&cfg, 17, 0.1).unwrap();
    let mut ratios: Vec<f64> = a
        .checks
        .iter()
        .zip(&big.checks)
        .filter(|(s, _)| {
            s.name.starts_with("link.") && s.analytic > 0.05 && s.analytic < 0.95 || s.name.starts_with("link.capacity")
        })
        .map(|(s, l)| s.half_width_95 / l.half_width_95)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!((median / 10f64.sqrt() - 1.0).abs() < 0.2, "median ratio {median}");
}

#[test]
fn validate_writes_report_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "validate",
        "--budget",
        "0.01",
        "--workers",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validate_report.json")).unwrap()).unwrap();
    let all_tight = report["tight_checks_pass"].as_bool().unwrap();
    assert_eq!(code, if all_tight { 0 } else { 3 });
    assert!(dir.path().join("validate.manifest.json").exists());
    assert_eq!(edgevid_cli::CliError::Validation(String::new()).exit_code(), 3);
}
