//! Field CSV and JSON report files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use charcauchy_core::operators::GridField;
use serde::Serialize;

/// Columns `u, v, value, region`, numbers in shortest round-trip form.
pub fn field_csv(field: &GridField) -> String {
    let g = &field.grid;
    let mut out = String::from("u,v,value,region\n");
    for ((i, j), x) in field.values.indexed_iter() {
        let (u, v) = g.node(i, j);
        writeln!(out, "{u},{v},{x},{}", g.region_label(i, j)).unwrap();
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, &s)
}

/// JSON has no infinities; they are written as null.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}
