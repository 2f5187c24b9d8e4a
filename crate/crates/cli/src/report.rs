//! Runs stages and writes `report.json`, the stage files and `timings.json`.
//!
//! `report.json` holds no wall-clock data, so equal configs give equal bytes.

use crate::config::ExperimentConfig;
use crate::pipeline::Pipeline;
use crate::stage::Stage;
use anyhow::{Context as _, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

/// SHA-256 of the fully resolved config (defaults and flag overrides applied). The output
/// directory does not change any result and is left out.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(&ExperimentConfig { out: None, ..cfg.clone() }).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub struct Outcome {
    pub stages: Vec<Stage>,
    pub timings: Vec<(String, f64)>,
    pub report: Value,
}

impl Outcome {
    pub fn failures(&self) -> Vec<String> {
        self.stages.iter().flat_map(|s| s.failures.iter().cloned()).collect()
    }

    pub fn passed(&self) -> bool {
        self.stages.iter().all(Stage::passed)
    }
}

/// Runs `names` in order. A stage that errors is recorded as failing `<stage>.error`.
pub fn run(p: &mut Pipeline, names: &[&str]) -> Outcome {
    let mut stages = Vec::new();
    let mut timings = Vec::new();
    for name in names {
        let start = Instant::now();
        let st = match p.run(name) {
            Ok(s) => s,
            Err(e) => {
                let mut s = Stage::new(name);
                s.set("error", format!("{e:#}"));
                s.failures.push(format!("{name}.error"));
                s
            }
        };
        timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        stages.push(st);
    }
    let report = report_json(p, &stages);
    Outcome { stages, timings, report }
}

fn report_json(p: &Pipeline, stages: &[Stage]) -> Value {
    let mut by_name = Map::new();
    for s in stages {
        by_name.insert(s.name.clone(), json!({ "summary": s.summary, "failures": s.failures }));
    }
    let failures: Vec<&String> = stages.iter().flat_map(|s| &s.failures).collect();
    json!({
        "config_hash": config_hash(&p.cfg),
        "seed": p.cfg.seed,
        "budgets": {
            "mass_resolution": p.cfg.decompose.mass_resolution,
            "scheme_truncation_deficit": p.truncation_deficit(),
            "tower_truncation": p.tower_truncation(),
            "decomposition_residual": p.residual(),
        },
        "stages": by_name,
        "failures": failures,
        "passed": failures.is_empty(),
    })
}

pub fn write(dir: &Path, out: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let body = serde_json::to_string_pretty(&out.report)? + "\n";
    std::fs::write(dir.join("report.json"), body)?;
    for s in &out.stages {
        for (name, contents) in &s.files {
            std::fs::write(dir.join(name), contents).with_context(|| format!("writing {name}"))?;
        }
    }
    let timings: Map<String, Value> = out.timings.iter().map(|(n, t)| (n.clone(), json!(t))).collect();
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
    Ok(())
}
