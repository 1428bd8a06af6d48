//! CSV/JSON serialization for fields, measures, profiles, and reports.
//!
//! A scalar field is a CSV of `value,boundary` rows in row-major node order
//! (first axis slowest) plus a JSON sidecar carrying the grid spec. Discrete
//! measures are CSV with one `x0,...,x{n-1},weight` row per point; ball
//! families drop the weight column for a radius. Reports are pretty-printed
//! JSON with a stable field order.

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField};
use crate::jones::DiscreteMeasure;
use crate::weiss::WeissProfile;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Write `base.csv` (values + mask) and `base.json` (grid spec).
pub fn write_field(base: &Path, field: &ScalarField) -> Result<()> {
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");
    let mut out = String::with_capacity(field.values.len() * 24);
    out.push_str("value,boundary\n");
    for (v, m) in field.values.iter().zip(&field.boundary_mask) {
        out.push_str(&format!("{v:?},{}\n", u8::from(*m)));
    }
    fs::write(csv_path, out)?;
    let spec_json = serde_json::to_string_pretty(&field.spec)
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(json_path, spec_json)?;
    Ok(())
}

/// Read a field written by [`write_field`].
pub fn read_field(base: &Path) -> Result<ScalarField> {
    let spec_text = fs::read_to_string(base.with_extension("json"))?;
    let spec: GridSpec =
        serde_json::from_str(&spec_text).map_err(|e| Error::Parse(e.to_string()))?;
    let csv = fs::read_to_string(base.with_extension("csv"))?;
    let mut values = Vec::with_capacity(spec.node_count());
    let mut mask = Vec::with_capacity(spec.node_count());
    for (lineno, line) in csv.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let mut parts = line.split(',');
        let v: f64 = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {lineno}: missing value")))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        let b: u8 = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {lineno}: missing boundary flag")))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        values.push(v);
        mask.push(b != 0);
    }
    if values.len() != spec.node_count() {
        return Err(Error::Parse(format!(
            "field has {} values, grid wants {}",
            values.len(),
            spec.node_count()
        )));
    }
    Ok(ScalarField { spec, values, boundary_mask: mask })
}

/// CSV with header `x0,...,x{n-1},weight`.
pub fn write_measure(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    let n = mu.dim();
    let mut out = String::new();
    for d in 0..n {
        out.push_str(&format!("x{d},"));
    }
    out.push_str("weight\n");
    for (p, w) in mu.points.iter().zip(&mu.weights) {
        for c in p {
            out.push_str(&format!("{c:?},"));
        }
        out.push_str(&format!("{w:?}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        if cols.len() < 2 {
            return Err(Error::Parse(format!("line {lineno}: need coords plus weight")));
        }
        points.push(cols[..cols.len() - 1].to_vec());
        weights.push(cols[cols.len() - 1]);
    }
    DiscreteMeasure::new(points, weights)
}

/// CSV of `x0,...,x{n-1},radius` rows describing a ball family.
pub fn read_balls(path: &Path) -> Result<Vec<(Vec<f64>, f64)>> {
    let mu = read_measure(path)?;
    Ok(mu.points.into_iter().zip(mu.weights).collect())
}

/// CSV `radius,w,defect` (defect blank on the first row).
pub fn write_weiss_profile(path: &Path, profile: &WeissProfile) -> Result<()> {
    let mut out = String::from("radius,w,defect\n");
    for (j, (r, w)) in profile.radii.iter().zip(&profile.w).enumerate() {
        if j == 0 {
            out.push_str(&format!("{r:?},{w:?},\n"));
        } else {
            out.push_str(&format!("{r:?},{w:?},{:?}\n", profile.defects[j - 1]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV of per-sweep energies.
pub fn write_energy_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = String::from("sweep,energy\n");
    for (i, e) in history.iter().enumerate() {
        out.push_str(&format!("{i},{e:?}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Pretty JSON with a trailing newline (stable across reruns).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
