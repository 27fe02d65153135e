//! Serialization of results. Every file is written to a temporary sibling
//! and renamed into place, so a failed run never leaves a truncated file.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use enf_core::{IfSeries, SchemeOutput};
use serde::Serialize;

use crate::config::RunConfig;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("staging {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `frame_index,time_sec,freq_hz`, time at the frame centre.
pub fn enf_csv(series: &IfSeries, sample_rate_hz: f64) -> String {
    let mut s = String::from("frame_index,time_sec,freq_hz\n");
    let cfg = &series.frame_config;
    for (l, v) in series.values_hz.iter().enumerate() {
        let _ = writeln!(s, "{l},{},{v}", cfg.frame_center(l) / sample_rate_hz);
    }
    s
}

pub fn write_enf_csv(path: &Path, series: &IfSeries, sample_rate_hz: f64) -> Result<()> {
    write_atomic(path, enf_csv(series, sample_rate_hz).as_bytes())
}

#[derive(Debug, Serialize)]
pub struct Diagnostics<'a> {
    pub scheme: String,
    pub omega: &'a [u32],
    pub eta: Option<f64>,
    /// Harmonic order of the rows and columns of `cc_matrix`.
    pub cc_harmonics: Vec<u32>,
    pub cc_matrix: Option<&'a [Vec<f64>]>,
    pub maximal_cliques: Option<&'a [Vec<u32>]>,
    pub fallback: Option<bool>,
    pub seed: u64,
    pub n_frames: usize,
    pub config: &'a RunConfig,
}

impl<'a> Diagnostics<'a> {
    pub fn new(out: &'a SchemeOutput, config: &'a RunConfig) -> Self {
        let sel = out.selection.as_ref();
        Diagnostics {
            scheme: out.scheme.to_string(),
            omega: &out.omega,
            eta: out.eta,
            cc_harmonics: sel.map(|s| s.graph.vertices.clone()).unwrap_or_default(),
            cc_matrix: sel.map(|s| s.correlation.as_slice()),
            maximal_cliques: sel.map(|s| s.all_maximal_cliques.as_slice()),
            fallback: sel.map(|s| s.is_fallback()),
            seed: config.seed,
            n_frames: out.estimate.len(),
            config,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Plain CSV from a header and pre-formatted rows.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Harmonic sets are written space-separated so they stay in one CSV cell.
pub fn omega_cell(omega: &[u32]) -> String {
    omega.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}
