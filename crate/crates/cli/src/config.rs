//! Flat `key = value` configuration files.
//!
//! File entries are turned into command-line flags and inserted right after
//! the subcommand, so explicit flags and `CML_*` variables win over them.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::CliError;

/// One parsed entry with its line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", n + 1));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        out.push(Entry {
            line: n + 1,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Value of `--config` in `argv`, if any.
fn config_flag(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn has_flag(argv: &[OsString], long: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s.strip_prefix("--")
            .is_some_and(|rest| rest == long || rest.starts_with(&format!("{long}=")))
    })
}

/// Merge the configuration file named by `--config` (or `CML_CONFIG`) into
/// `argv`.
pub fn expand(argv: Vec<OsString>, cli: &Command) -> Result<Vec<OsString>, CliError> {
    let path = config_flag(&argv).or_else(|| std::env::var_os("CML_CONFIG"));
    let Some(path) = path else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let name = path.display();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{name}: file not found")),
        _ => CliError::Usage(format!("{name}: {e}")),
    })?;
    let entries = parse(&text).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;

    // the subcommand is the first argument naming one
    let Some(pos) = argv
        .iter()
        .position(|a| cli.find_subcommand(a.to_string_lossy().as_ref()).is_some())
    else {
        return Ok(argv);
    };
    let sub = cli
        .find_subcommand(argv[pos].to_string_lossy().as_ref())
        .expect("position found above");

    let mut injected: Vec<OsString> = Vec::new();
    for e in entries {
        if e.key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .find(|a| {
                a.get_long() == Some(e.key.as_str())
                    || a.get_all_aliases().is_some_and(|al| al.contains(&e.key.as_str()))
            })
            .ok_or_else(|| CliError::Usage(format!("{name}: line {}: unknown key '{}'", e.line, e.key)))?;
        let long = arg.get_long().expect("config keys map to long flags");
        if has_flag(&argv, long)
            || arg
                .get_all_aliases()
                .is_some_and(|al| al.iter().any(|x| has_flag(&argv, x)))
        {
            continue;
        }
        if arg.get_env().is_some_and(|v| std::env::var_os(v).is_some()) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match e.value.as_str() {
                "true" | "yes" | "1" | "on" => injected.push(format!("--{long}").into()),
                "false" | "no" | "0" | "off" => {}
                v => {
                    return Err(CliError::Usage(format!(
                        "{name}: line {}: '{v}' is not a boolean",
                        e.line
                    )))
                }
            },
            _ => injected.push(format!("--{long}={}", e.value).into()),
        }
    }
    let mut out = argv;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}
