//! Run manifests and the execution wrapper that writes them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use edgevid::{validate, SystemConfig, ValidatedConfig};
use serde::{Deserialize, Serialize};

use crate::commands::{execute, RunOutput};
use crate::plan::Plan;
use crate::CliError;

pub const TOOL_NAME: &str = "edgevid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub plan: Plan,
    pub config: SystemConfig,
    pub seed: u64,
    /// File names relative to the manifest directory.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn file_name(plan: &Plan) -> String {
        format!("{}.manifest.json", plan.name())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validated_config(&self) -> Result<ValidatedConfig, CliError> {
        Ok(validate(self.config)?)
    }
}

/// Everything needed to run one plan.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub plan: Plan,
    pub config: ValidatedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Evaluates the plan, writes its tables, report and manifest, and returns them.
pub fn perform(req: &RunRequest) -> Result<(RunOutput, RunManifest), CliError> {
    fs::create_dir_all(&req.out_dir).map_err(|e| io(&req.out_dir, e))?;
    let start = Instant::now();
    let output = match req.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?
            .install(|| execute(&req.plan, &req.config, req.seed))?,
        None => execute(&req.plan, &req.config, req.seed)?,
    };
    let mut outputs = Vec::new();
    for t in &output.tables {
        t.write(&req.out_dir)?;
        outputs.push(t.file_name.clone());
    }
    if let Some(rep) = &output.report {
        let name = "validate_report.json";
        let path = req.out_dir.join(name);
        fs::write(&path, rep.to_json()).map_err(|e| io(&path, e))?;
        outputs.push(name.to_string());
    }
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        plan: req.plan.clone(),
        config: *req.config.config(),
        seed: req.seed,
        outputs,
        warnings: output.warnings.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    let path = req.out_dir.join(RunManifest::file_name(&req.plan));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    Ok((output, manifest))
}
