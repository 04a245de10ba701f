//! Artifact emission: `trace.jsonl`, `summary.json` and `grid.csv`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use polgeo::trace::{write_jsonl, IterTrace};
use serde_json::{json, Map, Value};

use crate::config::{defaults_table, echo, parse_config, ConfigError};
use crate::run::{run_experiment, FailureKind};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const GRID_FILE: &str = "grid.csv";

fn write_outputs(out: &Path, summary: &Value, trace: &[IterTrace], grid: Option<&str>) -> io::Result<()> {
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(fs::File::create(out.join(TRACE_FILE))?);
    write_jsonl(&mut w, trace)?;
    w.flush()?;
    let mut text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(out.join(SUMMARY_FILE), text)?;
    if let Some(csv) = grid {
        fs::write(out.join(GRID_FILE), csv)?;
    }
    Ok(())
}

fn error_record(kind: FailureKind, message: &str, violations: Value) -> Value {
    json!({
        "kind": kind,
        "exit_code": kind.exit_code(),
        "message": message,
        "violations": violations,
    })
}

/// Parse, run and write artifacts for one experiment; returns the exit code.
/// `seed` overrides the config's seed.
pub fn execute(task: &str, config: &Path, out: &Path, seed: Option<u64>) -> u8 {
    let start = Instant::now();
    let mut summary = Map::new();
    summary.insert("task".into(), json!(task));
    summary.insert("defaults".into(), defaults_table());

    let (code, trace, grid) = match parse_config(config, Some(task)) {
        Err(e) => {
            eprintln!("polgeo: {e}");
            let violations = match &e {
                ConfigError::Invalid(v) => json!(v),
                ConfigError::Parse { line, column, .. } => json!([{ "path": "(document)", "line": line, "column": column }]),
                ConfigError::Io { .. } => json!([]),
            };
            summary.insert("status".into(), json!("error"));
            summary.insert("config".into(), Value::Null);
            summary.insert("seed".into(), json!(seed));
            summary.insert("error".into(), error_record(FailureKind::Config, &e.to_string(), violations));
            (FailureKind::Config.exit_code(), Vec::new(), None)
        }
        Ok(mut exp) => {
            if let Some(s) = seed {
                exp.config.seed = Some(s);
                exp.applied_defaults.retain(|p| p != "seed");
            }
            summary.insert("seed".into(), json!(exp.config.seed()));
            summary.insert("config".into(), echo(&exp.config));
            summary.insert("applied_defaults".into(), json!(exp.applied_defaults));
            match run_experiment(&exp) {
                Ok(outcome) => {
                    for line in &outcome.report {
                        println!("{line}");
                    }
                    summary.extend(outcome.fields);
                    summary.insert("status".into(), json!("ok"));
                    summary.insert("error".into(), Value::Null);
                    (0, outcome.trace, outcome.grid)
                }
                Err(f) => {
                    eprintln!("polgeo: {}", f.message);
                    if let Some(last) = f.trace.last() {
                        summary.insert("J".into(), json!(last.j));
                        summary.insert("grad_norm".into(), json!(last.grad_norm));
                        summary.insert("iterations".into(), json!(last.iter));
                    }
                    summary.insert("status".into(), json!("error"));
                    summary.insert("error".into(), error_record(f.kind, &f.message, json!([])));
                    (f.kind.exit_code(), f.trace, None)
                }
            }
        }
    };
    summary.insert("wall_time_s".into(), json!(start.elapsed().as_secs_f64()));
    match write_outputs(out, &Value::Object(summary), &trace, grid.as_deref()) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("polgeo: cannot write artifacts to {}: {e}", out.display());
            FailureKind::Internal.exit_code()
        }
    }
}
