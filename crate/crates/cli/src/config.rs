//! Run configuration: command-line flags layered over an optional
//! `key = value` file, layered over the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use enf_core::enhancement::{EdgeMode, QuarterLag};
use enf_core::{EnhancerConfig, FrameConfig, PipelineParams, SchemeId, DEFAULT_HARMONICS};
use serde::Serialize;

pub fn parse_harmonics(s: &str) -> Result<Vec<u32>> {
    let mut v = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().with_context(|| format!("`{t}` is not a harmonic index")))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        bail!("empty harmonic list");
    }
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

pub fn parse_quarter_lag(s: &str) -> Result<QuarterLag> {
    match s.trim().to_ascii_lowercase().as_str() {
        "component" => Ok(QuarterLag::Component),
        "fundamental" => Ok(QuarterLag::Fundamental),
        _ => bail!("quarter lag must be `component` or `fundamental`, got `{s}`"),
    }
}

pub fn parse_edge(s: &str) -> Result<EdgeMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "truncate" => Ok(EdgeMode::Truncate),
        "clamp" => Ok(EdgeMode::Clamp),
        _ => bail!("edge mode must be `truncate` or `clamp`, got `{s}`"),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("`{s}` is not a boolean"),
    }
}

fn clap_harmonics(s: &str) -> Result<Vec<u32>, String> {
    parse_harmonics(s).map_err(|e| e.to_string())
}

fn clap_quarter_lag(s: &str) -> Result<QuarterLag, String> {
    parse_quarter_lag(s).map_err(|e| e.to_string())
}

fn clap_edge(s: &str) -> Result<EdgeMode, String> {
    parse_edge(s).map_err(|e| e.to_string())
}

/// Pipeline settings that may come from either the command line or a
/// config file. Unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct RunOptions {
    /// `key = value` file; explicit flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Estimation scheme (single, e_single, mle, wmle, e_mle, e_wmle, s_mle, s_wmle, p_mle, p_wmle).
    #[arg(long)]
    pub scheme: Option<SchemeId>,
    /// Working sample rate after decimation, Hz.
    #[arg(long)]
    pub target_fs: Option<f64>,
    /// Harmonic set, e.g. `2,3,4,5,6,7`.
    #[arg(long, value_parser = clap_harmonics)]
    pub harmonics: Option<::std::vec::Vec<u32>>,
    /// Enhancement iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Enhancement kernel half-width in samples.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, value_parser = clap_quarter_lag)]
    pub quarter_lag: Option<QuarterLag>,
    #[arg(long, value_parser = clap_edge)]
    pub edge: Option<EdgeMode>,
    /// Frame length in seconds.
    #[arg(long)]
    pub frame_s: Option<f64>,
    /// Frame hop in seconds.
    #[arg(long)]
    pub step_s: Option<f64>,
    /// Periodogram grid spacing, Hz.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Safety multiplier on the noise-correlation threshold.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Noise-pair repetitions for the threshold simulation.
    #[arg(long)]
    pub n_rep: Option<usize>,
    /// Desk mode: 10³ threshold repetitions unless `--n-rep` is given.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub desk: Option<bool>,
    /// Fixed correlation threshold instead of the simulated one.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Comb-filter around the harmonics before estimation.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub prefilter: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunOptions {
    /// Fill unset fields from `other`.
    pub fn or(self, other: RunOptions) -> RunOptions {
        RunOptions {
            config: self.config.or(other.config),
            scheme: self.scheme.or(other.scheme),
            target_fs: self.target_fs.or(other.target_fs),
            harmonics: self.harmonics.or(other.harmonics),
            iterations: self.iterations.or(other.iterations),
            tau: self.tau.or(other.tau),
            quarter_lag: self.quarter_lag.or(other.quarter_lag),
            edge: self.edge.or(other.edge),
            frame_s: self.frame_s.or(other.frame_s),
            step_s: self.step_s.or(other.step_s),
            resolution: self.resolution.or(other.resolution),
            kappa: self.kappa.or(other.kappa),
            n_rep: self.n_rep.or(other.n_rep),
            desk: self.desk.or(other.desk),
            eta: self.eta.or(other.eta),
            prefilter: self.prefilter.or(other.prefilter),
            seed: self.seed.or(other.seed),
        }
    }

    /// Parse a `key = value` file. Keys match the long flag names, with
    /// `-` or `_`; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<RunOptions> {
        let mut o = RunOptions::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("line {}", i + 1);
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}: expected `key = value`", at());
            };
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            let num = |what: &str| format!("{}: bad {what} `{v}`", at());
            match key.as_str() {
                "scheme" => o.scheme = Some(v.parse().with_context(|| num("scheme"))?),
                "target_fs" => o.target_fs = Some(v.parse().with_context(|| num("target_fs"))?),
                "harmonics" => o.harmonics = Some(parse_harmonics(v).with_context(at)?),
                "iterations" => o.iterations = Some(v.parse().with_context(|| num("iterations"))?),
                "tau" => o.tau = Some(v.parse().with_context(|| num("tau"))?),
                "quarter_lag" => o.quarter_lag = Some(parse_quarter_lag(v).with_context(at)?),
                "edge" => o.edge = Some(parse_edge(v).with_context(at)?),
                "frame_s" => o.frame_s = Some(v.parse().with_context(|| num("frame_s"))?),
                "step_s" => o.step_s = Some(v.parse().with_context(|| num("step_s"))?),
                "resolution" => o.resolution = Some(v.parse().with_context(|| num("resolution"))?),
                "kappa" => o.kappa = Some(v.parse().with_context(|| num("kappa"))?),
                "n_rep" => o.n_rep = Some(v.parse().with_context(|| num("n_rep"))?),
                "desk" => o.desk = Some(parse_bool(v).with_context(at)?),
                "eta" => o.eta = Some(v.parse().with_context(|| num("eta"))?),
                "prefilter" => o.prefilter = Some(parse_bool(v).with_context(at)?),
                "seed" => o.seed = Some(v.parse().with_context(|| num("seed"))?),
                _ => bail!("{}: unknown key `{}`", at(), k.trim()),
            }
        }
        Ok(o)
    }

    pub fn load_file(path: &Path) -> Result<RunOptions> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        RunOptions::from_kv(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Flags, then the config file named by `--config` (if any), then
    /// defaults.
    pub fn resolve(self) -> Result<RunConfig> {
        let merged = match &self.config {
            Some(p) => {
                let file = RunOptions::load_file(p)?;
                self.or(file)
            }
            None => self,
        };
        RunConfig::from_options(&merged)
    }
}

/// Fully resolved settings; serialized into the diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scheme: SchemeId,
    pub target_fs_hz: f64,
    pub harmonics: Vec<u32>,
    pub iterations: usize,
    pub tau: usize,
    pub quarter_lag: QuarterLag,
    pub edge: EdgeMode,
    pub frame_s: f64,
    pub step_s: f64,
    pub resolution_hz: f64,
    pub kappa: f64,
    pub n_rep: usize,
    pub eta: Option<f64>,
    pub prefilter: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_options(&RunOptions::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn from_options(o: &RunOptions) -> Result<RunConfig> {
        let desk = o.desk.unwrap_or(false);
        let cfg = RunConfig {
            scheme: o.scheme.unwrap_or(SchemeId::PMle),
            target_fs_hz: o.target_fs.unwrap_or(800.0),
            harmonics: o.harmonics.clone().unwrap_or_else(|| DEFAULT_HARMONICS.to_vec()),
            iterations: o.iterations.unwrap_or(2),
            tau: o.tau.unwrap_or(3000),
            quarter_lag: o.quarter_lag.unwrap_or_default(),
            edge: o.edge.unwrap_or_default(),
            frame_s: o.frame_s.unwrap_or(16.0),
            step_s: o.step_s.unwrap_or(1.0),
            resolution_hz: o.resolution.unwrap_or(1.0 / 4000.0),
            kappa: o.kappa.unwrap_or(4.0),
            n_rep: o.n_rep.unwrap_or(if desk { 1_000 } else { 10_000 }),
            eta: o.eta,
            prefilter: o.prefilter.unwrap_or(true),
            seed: o.seed.unwrap_or(0),
        };
        cfg.params()?.validate()?;
        Ok(cfg)
    }

    pub fn frame_config(&self) -> Result<FrameConfig> {
        let len = (self.frame_s * self.target_fs_hz).round();
        let step = (self.step_s * self.target_fs_hz).round();
        if !(len >= 1.0 && step >= 1.0) {
            bail!("frame length and hop must each span at least one sample");
        }
        Ok(FrameConfig::new(len as usize, step as usize, self.resolution_hz)?)
    }

    pub fn params(&self) -> Result<PipelineParams> {
        let frame = self.frame_config()?;
        Ok(PipelineParams {
            target_fs_hz: self.target_fs_hz,
            harmonics: self.harmonics.clone(),
            frame: Some(frame),
            enhancer: EnhancerConfig {
                tau: self.tau,
                iterations: self.iterations,
                quarter_lag: self.quarter_lag,
                edge: self.edge,
                frame: Some(frame),
                ..EnhancerConfig::default()
            },
            kappa: self.kappa,
            n_rep: self.n_rep,
            eta: self.eta,
            prefilter: self.prefilter,
            seed: self.seed,
            ..PipelineParams::default()
        })
    }
}
