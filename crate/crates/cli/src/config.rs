// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSON config files whose keys mirror the long flags.
//!
//! Keys are flag names without the leading dashes (`outer_folds` and
//! `outer-folds` are both accepted). Values on the command line win over the
//! file. Keys belonging to a different subcommand are ignored so one file can
//! serve a whole pipeline; keys no subcommand knows are an error.

use std::collections::BTreeSet;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;
use serde_json::Value;

use crate::Cli;

/// Returns `argv` with config-file values appended as flags.
pub fn apply_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let map = match serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {path}"))? {
        Value::Object(m) => m,
        _ => bail!("config {path} must be a JSON object"),
    };

    let root = Cli::command();
    let Some(sub) = argv.iter().skip(1).find_map(|a| root.find_subcommand(a)) else {
        // No subcommand: let clap report it.
        return Ok(argv);
    };
    let known_elsewhere: BTreeSet<String> = root
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)))
        .collect();

    let mut out = argv.clone();
    for (key, value) in &map {
        let long = key.replace('_', "-");
        if long == "config" {
            continue;
        }
        let global = root.get_arguments().find(|a| a.get_long() == Some(long.as_str()));
        let local = sub.get_arguments().find(|a| a.get_long() == Some(long.as_str()));
        let arg = match (global, local) {
            (_, Some(a)) | (Some(a), None) => a,
            (None, None) if known_elsewhere.contains(&long) => continue,
            (None, None) => bail!("config {path}: unknown key '{key}'"),
        };
        if given(&argv, &long) {
            continue;
        }
        let flag = format!("--{long}");
        let takes_values = arg.get_action().takes_values();
        match value {
            Value::Bool(true) if !takes_values => out.push(flag),
            Value::Bool(false) if !takes_values => {}
            Value::Number(n) if !takes_values && long == "verbose" => {
                let count = n.as_u64().unwrap_or(0);
                out.extend(std::iter::repeat_n(flag, count as usize));
            }
            Value::Array(items) => {
                let items: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
                if items.is_empty() {
                    continue;
                }
                out.push(flag);
                if arg.get_value_delimiter().is_some() {
                    out.push(items.join(","));
                } else {
                    out.extend(items);
                }
            }
            Value::Null => {}
            v if takes_values => {
                out.push(flag);
                out.push(scalar(v)?);
            }
            v => bail!("config {path}: key '{key}' is a switch, got {v}"),
        }
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_owned());
        }
    }
    None
}

fn given(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let with_eq = format!("{flag}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&with_eq))
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => bail!("config values must be scalars or arrays of scalars, got {other}"),
    })
}
