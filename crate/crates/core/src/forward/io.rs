//! CSV bundle for measurement sets: one `q_fNN.csv` per frequency (rows are
//! poses, columns receptors, entries `re+imj`) and a `metadata.json`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MeasurementSet;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Metadata {
    frequencies: Vec<f64>,
    pose_angles: Vec<f64>,
    receptors: Vec<Vec<[f64; 2]>>,
    z: [f64; 2],
    files: Vec<String>,
    #[serde(default)]
    extra: serde_json::Value,
}

pub fn format_complex(z: Complex64) -> String {
    format!("{:e}{:+e}j", z.re, z.im)
}

pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    let body = s.strip_suffix('j')?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re = body[..split].parse().ok()?;
    let im = body[split..].parse().ok()?;
    Some(Complex64::new(re, im))
}

fn file_name(f: usize) -> String {
    format!("q_f{:02}.csv", f + 1)
}

/// Writes the bundle into `dir`, creating it if needed. `extra` is stored
/// verbatim in the metadata.
pub fn write_measurements(dir: &Path, m: &MeasurementSet, extra: serde_json::Value) -> Result<()> {
    m.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for (f, q) in m.q.iter().enumerate() {
        let name = file_name(f);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        for s in 0..q.nrows() {
            w.write_record(q.row(s).iter().map(|z| format_complex(*z)))
                .map_err(|e| Error::format(&path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push(name);
    }
    let meta = Metadata {
        frequencies: m.frequencies.clone(),
        pose_angles: m.pose_angles.clone(),
        receptors: m.receptors.clone(),
        z: m.z,
        files,
        extra,
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a bundle written by [`write_measurements`], returning the data and
/// the extra metadata.
pub fn read_measurements(dir: &Path) -> Result<(MeasurementSet, serde_json::Value)> {
    let path = dir.join("metadata.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let (s, r) = (meta.pose_angles.len(), meta.receptors.first().map_or(0, Vec::len));
    let mut q = Vec::with_capacity(meta.files.len());
    for name in &meta.files {
        let path = dir.join(name);
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        let mut values = Vec::with_capacity(s * r);
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::format(&path, e.to_string()))?;
            if rec.len() != r {
                return Err(Error::format(
                    &path,
                    format!("row {rows} has {} entries, expected {r}", rec.len()),
                ));
            }
            for field in rec.iter() {
                values.push(parse_complex(field).ok_or_else(|| {
                    Error::format(&path, format!("bad complex entry '{field}'"))
                })?);
            }
            rows += 1;
        }
        if rows != s {
            return Err(Error::format(&path, format!("{rows} rows, expected {s}")));
        }
        q.push(DMatrix::from_row_slice(s, r, &values));
    }
    let m = MeasurementSet {
        frequencies: meta.frequencies,
        q,
        pose_angles: meta.pose_angles,
        receptors: meta.receptors,
        z: meta.z,
    };
    m.validate()?;
    Ok((m, meta.extra))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_text_round_trip() {
        for z in [
            Complex64::new(1.5, -2.25e-7),
            Complex64::new(-3e-300, 4.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0 / 3.0, 1e10),
        ] {
            assert_eq!(parse_complex(&format_complex(z)), Some(z));
        }
        assert_eq!(parse_complex("1+2j"), Some(Complex64::new(1.0, 2.0)));
        assert!(parse_complex("1+2").is_none());
        assert!(parse_complex("abc").is_none());
    }
}
