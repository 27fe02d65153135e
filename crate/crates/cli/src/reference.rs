//! Reference ENF files and the tool's own ENF CSV.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use enf_core::{FrameConfig, HarmonicTag, IfSeries};

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace()).filter(|f| !f.is_empty()).collect()
}

fn parse_field(f: &str, line_no: usize) -> Result<f64> {
    match f.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => bail!("line {line_no}: `{f}` is not a finite number"),
    }
}

/// Numeric rows of a delimited text file. Blank lines and `#` comments are
/// skipped; a non-numeric first row is treated as a header.
fn numeric_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols = fields(line);
        let first = !seen_content;
        seen_content = true;
        if first && cols.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let vals = cols.iter().map(|c| parse_field(c, line_no)).collect::<Result<Vec<_>>>()?;
        rows.push((line_no, vals));
    }
    if rows.is_empty() {
        bail!("no numeric rows");
    }
    Ok(rows)
}

/// Fundamental-frequency values from a Hz-per-line file or a `time,freq`
/// CSV.
pub fn parse_reference(text: &str) -> Result<Vec<f64>> {
    numeric_rows(text)?
        .into_iter()
        .map(|(line_no, vals)| match vals.len() {
            1 => Ok(vals[0]),
            2 => Ok(vals[1]),
            n => bail!("line {line_no}: expected 1 or 2 columns, found {n}"),
        })
        .collect()
}

/// Reference ENF rescaled to the 2nd-harmonic band (×2), one value per
/// frame of `frame`.
pub fn read_reference_enf(path: &Path, frame: FrameConfig) -> Result<IfSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fundamental = parse_reference(&text).with_context(|| format!("parsing {}", path.display()))?;
    let values = fundamental.into_iter().map(|f| 2.0 * f).collect();
    Ok(IfSeries::new(values, HarmonicTag::Normalized, frame))
}

/// Frequencies from a `frame_index,time_sec,freq_hz` CSV, as written.
pub fn parse_enf_csv(text: &str) -> Result<Vec<f64>> {
    numeric_rows(text)?
        .into_iter()
        .enumerate()
        .map(|(k, (line_no, vals))| {
            if vals.len() != 3 {
                bail!("line {line_no}: expected 3 columns, found {}", vals.len());
            }
            if vals[0] != k as f64 {
                bail!("line {line_no}: frame index {} out of sequence, expected {k}", vals[0]);
            }
            Ok(vals[2])
        })
        .collect()
}

pub fn read_enf_csv(path: &Path, frame: FrameConfig) -> Result<IfSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = parse_enf_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(IfSeries::new(values, HarmonicTag::Normalized, frame))
}
