//! CSV and JSON emission. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::Result;
use crate::grid::MagnetizationGrid;
use crate::observables::{ObservableRecord, SERIES_COLUMNS};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_csv(series: &[ObservableRecord]) -> String {
    let mut out = SERIES_COLUMNS.join(",");
    out.push('\n');
    for r in series {
        out.push_str(&r.cycle.to_string());
        for v in r.values() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn snapshot_csv(grid: &MagnetizationGrid, p: &[f64]) -> String {
    let mut out = String::from("m,P_m\n");
    for (i, x) in p.iter().enumerate() {
        let _ = writeln!(out, "{},{}", grid.m_at(i), fmt_f64(*x));
    }
    out
}

/// Parse a `m,P_m` CSV onto `grid`; bins absent from the file get zero.
pub fn read_snapshot(path: &Path, grid: &MagnetizationGrid) -> std::result::Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut p = vec![0.0; grid.len()];
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line.starts_with('m')) {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(m), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(format!("{}:{}: expected two columns", path.display(), k + 1));
        };
        let m: i64 = m.trim().parse().map_err(|_| format!("{}:{}: bad m", path.display(), k + 1))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("{}:{}: bad P_m", path.display(), k + 1))?;
        if !grid.contains(m) {
            if v != 0.0 {
                return Err(format!("{}:{}: m = {m} outside the grid", path.display(), k + 1));
            }
            continue;
        }
        p[grid.index(m)] = v;
    }
    Ok(p)
}

/// JSON writer that prints floats with 17 significant digits and
/// non-finite floats as `null`.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_json(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) => out.push_str(&i.to_string()),
            (_, Some(u), _) => out.push_str(&u.to_string()),
            (_, _, Some(f)) if f.is_finite() => out.push_str(&fmt_f64(f)),
            _ => out.push_str("null"),
        },
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (k, x) in a.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_json(x, depth + 1, out);
                out.push_str(if k + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(o) if o.is_empty() => out.push_str("{}"),
        Value::Object(o) => {
            out.push_str("{\n");
            for (k, (key, x)) in o.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_json(x, depth + 1, out);
                out.push_str(if k + 1 < o.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
