// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(FIXTURES).join(name)
}

pub fn probekit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probekit"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PROBEKIT_OUT")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn probekit")
}

/// Runs and asserts success, returning stdout.
pub fn ok(out: &Path, args: &[&str]) -> String {
    let o = probekit(out, args);
    assert!(
        o.status.success(),
        "probekit {args:?} failed ({:?}): {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a synthetic dataset with the CLI and returns its manifest.
pub fn synth(dir: &Path, args: &[&str]) -> PathBuf {
    ok(dir, &[&["synth"], args].concat());
    dir.join("manifest.json")
}

pub fn write_folds(path: &Path, rows: &[(&str, Vec<f64>)]) {
    let folds = rows[0].1.len();
    let mut text = String::from("model");
    for f in 0..folds {
        text.push_str(&format!(",fold_{f}"));
    }
    text.push('\n');
    for (name, vals) in rows {
        text.push_str(name);
        for v in vals {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
