//! Text checkpoint: a versioned header, the block layout, then one value per
//! line in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use super::params::ParamLayout;
use crate::error::{Error, Result};

const MAGIC: &str = "symreg-params v1";

pub fn encode(layout: &ParamLayout, params: &[f64]) -> String {
    assert_eq!(params.len(), layout.len());
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "blocks {}", layout.blocks().len()).unwrap();
    for b in layout.blocks() {
        writeln!(out, "{} {} {} {}", b.name, b.rows, b.cols, b.offset).unwrap();
    }
    writeln!(out, "values {}", params.len()).unwrap();
    for v in params {
        writeln!(out, "{v:?}").unwrap();
    }
    out
}

/// Parses a checkpoint, checking that its layout matches `layout` exactly.
pub fn decode(layout: &ParamLayout, text: &str) -> Result<Vec<f64>> {
    let bad = |line: usize, message: String| Error::Data { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty checkpoint".into()))?;
    if header != MAGIC {
        return Err(bad(ln, format!("unsupported header `{header}`")));
    }
    let (ln, count) = lines.next().ok_or_else(|| bad(2, "missing block count".into()))?;
    let count: usize = count
        .strip_prefix("blocks ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| bad(ln, "malformed block count".into()))?;
    if count != layout.blocks().len() {
        return Err(bad(ln, format!("checkpoint has {count} blocks, model has {}", layout.blocks().len())));
    }
    for b in layout.blocks() {
        let (ln, line) = lines.next().ok_or_else(|| bad(0, "truncated layout".into()))?;
        let expected = format!("{} {} {} {}", b.name, b.rows, b.cols, b.offset);
        if line != expected {
            return Err(bad(ln, format!("layout mismatch: `{line}` vs `{expected}`")));
        }
    }
    let (ln, values) = lines.next().ok_or_else(|| bad(0, "missing values header".into()))?;
    let n: usize = values
        .strip_prefix("values ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| bad(ln, "malformed values header".into()))?;
    if n != layout.len() {
        return Err(bad(ln, format!("expected {} values, found {n}", layout.len())));
    }
    let mut params = Vec::with_capacity(n);
    for (ln, line) in lines {
        let v: f64 = line.trim().parse().map_err(|_| bad(ln, format!("bad value `{line}`")))?;
        if !v.is_finite() {
            return Err(bad(ln, "non-finite parameter".into()));
        }
        params.push(v);
    }
    if params.len() != n {
        return Err(bad(0, format!("expected {n} values, read {}", params.len())));
    }
    Ok(params)
}

pub fn save(path: &Path, layout: &ParamLayout, params: &[f64]) -> Result<()> {
    std::fs::write(path, encode(layout, params))?;
    Ok(())
}

pub fn load(path: &Path, layout: &ParamLayout) -> Result<Vec<f64>> {
    decode(layout, &std::fs::read_to_string(path)?)
}
