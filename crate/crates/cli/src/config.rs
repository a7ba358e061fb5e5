//! JSON experiment files. A file is translated into the equivalent command line and
//! parsed by the same clap definitions, so both entry points share validation.

use crate::error::{CliError, CliResult};
use serde::Deserialize;
use serde_json::{Map, Value};
use std::ffi::OsString;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog name, operator JSON object, or path to an operator file.
    #[serde(default)]
    pub operator: Option<Value>,
    pub task: String,
    /// Sub-action such as `iso`, `coarea` or `invert`; each task has a default.
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub seed: Option<Value>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Option<String>,
}

pub fn read(path: &Path) -> CliResult<ExperimentConfig> {
    let bad = |reason: String| CliError::Config { path: path.display().to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

fn command_path(task: &str, action: Option<&str>) -> CliResult<Vec<&'static str>> {
    let pick = |allowed: &[&'static str], default: &'static str| -> CliResult<&'static str> {
        match action {
            None => Ok(default),
            Some(a) => allowed
                .iter()
                .copied()
                .find(|x| *x == a)
                .ok_or_else(|| CliError::Usage(format!("unknown action '{a}' for task '{task}'"))),
        }
    };
    Ok(match task {
        "info" | "operator" => vec!["operator", pick(&["info", "validate"], "info")?],
        "kernel" => vec!["kernel", pick(&["eval"], "eval")?],
        "semigroup" => vec!["semigroup", pick(&["apply"], "apply")?],
        "frac" => vec!["frac", pick(&["apply", "invert"], "apply")?],
        "perimeter" => vec!["perimeter"],
        "sweep" => vec!["sweep", pick(&["iso"], "iso")?],
        "besov" => vec!["besov", pick(&["seminorm", "coarea", "sobolev"], "seminorm")?],
        "verify" => vec!["verify"],
        other => return Err(CliError::Usage(format!("unknown task '{other}'"))),
    })
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn push_flag(argv: &mut Vec<OsString>, key: &str, value: &Value) {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        Value::Bool(true) => argv.push(flag.into()),
        Value::Bool(false) | Value::Null => {}
        Value::Object(_) => {
            argv.push(flag.into());
            argv.push(value.to_string().into());
        }
        // Arrays of objects (e.g. nothing today) would need JSON; numbers join with commas.
        Value::Array(items) if items.iter().any(|v| v.is_object() || v.is_array()) => {
            argv.push(flag.into());
            argv.push(value.to_string().into());
        }
        other => {
            argv.push(flag.into());
            argv.push(scalar(other).into());
        }
    }
}

/// Equivalent command line, program name first.
pub fn to_argv(cfg: &ExperimentConfig, base_dir: &Path) -> CliResult<Vec<OsString>> {
    let mut argv: Vec<OsString> = vec!["kfp".into()];
    argv.extend(command_path(&cfg.task, cfg.action.as_deref())?.into_iter().map(OsString::from));
    match &cfg.operator {
        None => {}
        Some(Value::String(s)) => {
            let p = base_dir.join(s);
            if p.is_file() {
                argv.push("--spec".into());
                argv.push(p.into_os_string());
            } else {
                argv.push("--catalog".into());
                argv.push(s.into());
            }
        }
        Some(v @ Value::Object(_)) => {
            argv.push("--spec".into());
            argv.push(v.to_string().into());
        }
        Some(other) => return Err(CliError::Usage(format!("operator must be a name, path or object, got {other}"))),
    }
    for (k, v) in &cfg.params {
        push_flag(&mut argv, k, v);
    }
    if let Some(seed) = &cfg.seed {
        push_flag(&mut argv, "seed", seed);
    }
    if let Some(n) = cfg.samples {
        push_flag(&mut argv, "samples", &n.into());
    }
    if let Some(w) = cfg.workers {
        push_flag(&mut argv, "workers", &w.into());
    }
    if let Some(t) = cfg.tol {
        push_flag(&mut argv, "tol", &t.into());
    }
    if let Some(out) = &cfg.output {
        if let Some(p) = &out.path {
            argv.push("--out".into());
            argv.push(base_dir.join(p).into_os_string());
        }
        if let Some(f) = &out.format {
            argv.push("--format".into());
            argv.push(f.into());
        }
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perimeter_config_translates() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"operator": "kolmogorov", "task": "perimeter", "params": {"region": "ball:1", "s": 0.25}, "seed": 7}"#,
        )
        .unwrap();
        let argv = to_argv(&cfg, Path::new("/nonexistent")).unwrap();
        let joined: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(joined, ["kfp", "perimeter", "--catalog", "kolmogorov", "--region", "ball:1", "--s", "0.25", "--seed", "7"]);
    }

    #[test]
    fn unknown_task_is_usage() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"task": "plot"}"#).unwrap();
        assert_eq!(to_argv(&cfg, Path::new(".")).unwrap_err().exit_code(), 64);
    }
}
