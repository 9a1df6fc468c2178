//! `key=value` config files merged under command-line flags.
//!
//! Each key names a long flag (`max_iter` and `max-iter` both mean
//! `--max-iter`). Keys already given on the command line are ignored, so
//! flags always win.

use std::ffi::OsString;
use std::fs;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Flags that affect how a run executes but never what it outputs.
const RUN_ONLY: [&str; 2] = ["--jobs", "--config"];

fn config_path(args: &[OsString]) -> Result<Option<String>, ConfigError> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return match it.next() {
                Some(p) => Ok(Some(p.to_string_lossy().into_owned())),
                None => Err(ConfigError("--config needs a file path".into())),
            };
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

fn given(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag
            || a.strip_prefix(flag)
                .is_some_and(|rest| rest.starts_with('='))
    })
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError(format!(
                "config line {}: expected key=value",
                i + 1
            )));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(ConfigError(format!(
                "config line {}: invalid key {:?}",
                i + 1,
                k.trim()
            )));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Appends config entries for flags missing from `args`.
pub fn merge_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| ConfigError(format!("cannot read config {path}: {e}")))?;
    for (key, value) in parse_config(&text)? {
        let flag = format!("--{key}");
        if given(&args, &flag) {
            continue;
        }
        match value.as_str() {
            "true" => args.push(flag.into()),
            "false" => {}
            _ => {
                args.push(flag.into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// The arguments that determine a run's output: everything after the
/// program name except run-only flags.
pub fn recorded_args(args: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if RUN_ONLY.contains(&a.as_str()) {
            it.next();
            continue;
        }
        if RUN_ONLY.iter().any(|f| a.starts_with(&format!("{f}="))) {
            continue;
        }
        out.push(a);
    }
    out
}
