//! The five subcommands, callable as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use enf_core::eval::{noisy_observation, EnfModel, MonteCarloResult, TrialSignal};
use enf_core::model::{corrupt_harmonics, frame_truth, synth_multitone};
use enf_core::rng::{derive_seed, STREAM_ENF, STREAM_NOISE};
use enf_core::{
    crlb, monte_carlo, mse_nmse, HarmonicModelSpec, HarmonicTag, IfSeries, SampleBuffer, Scenario, SchemeId,
    SchemeOutput, SchemeRunner,
};

use crate::config::RunConfig;
use crate::output::{csv, omega_cell, write_atomic, write_enf_csv, write_json, Diagnostics};
use crate::reference::read_reference_enf;
use crate::wav::{encode_wav, read_wav};

/// Start-aligned comparison with truncation to the common length. A
/// positive `offset` drops leading reference values, a negative one drops
/// leading estimates.
pub fn align(estimate: &IfSeries, reference: &IfSeries, offset: i64) -> Result<(IfSeries, IfSeries)> {
    let skip_est = if offset < 0 { offset.unsigned_abs() as usize } else { 0 };
    let skip_ref = if offset > 0 { offset as usize } else { 0 };
    let e = estimate.values_hz.get(skip_est..).unwrap_or(&[]);
    let r = reference.values_hz.get(skip_ref..).unwrap_or(&[]);
    let n = e.len().min(r.len());
    if n == 0 {
        bail!("estimate and reference do not overlap at offset {offset}");
    }
    Ok((
        IfSeries::new(e[..n].to_vec(), HarmonicTag::Normalized, estimate.frame_config),
        IfSeries::new(r[..n].to_vec(), HarmonicTag::Normalized, reference.frame_config),
    ))
}

pub fn mse_against(estimate: &IfSeries, reference: &IfSeries, offset: i64) -> Result<(usize, f64)> {
    let pair = align(estimate, reference, offset)?;
    let n = pair.0.len();
    let (_, m) = mse_nmse(&[pair])?;
    Ok((n, m))
}

fn runner_for(input: &Path, cfg: &RunConfig) -> Result<SchemeRunner> {
    let raw = read_wav(input)?;
    SchemeRunner::from_raw(&raw, cfg.params()?).with_context(|| format!("preparing {}", input.display()))
}

#[derive(Debug)]
pub struct ExtractResult {
    pub output: SchemeOutput,
    /// `(frames compared, MSE)` when a reference was given.
    pub reference_mse: Option<(usize, f64)>,
}

/// Estimate the ENF of one recording and write the per-frame CSV plus a
/// JSON diagnostics file.
pub fn cmd_extract(
    input: &Path,
    output: &Path,
    diagnostics: &Path,
    cfg: &RunConfig,
    reference: Option<&Path>,
    ref_offset: i64,
) -> Result<ExtractResult> {
    let runner = runner_for(input, cfg)?;
    let out = runner.run(cfg.scheme)?;
    let reference_mse = match reference {
        Some(p) => Some(mse_against(&out.estimate, &read_reference_enf(p, runner.frame_config())?, ref_offset)?),
        None => None,
    };
    write_enf_csv(output, &out.estimate, cfg.target_fs_hz)?;
    write_json(diagnostics, &Diagnostics::new(&out, cfg))?;
    Ok(ExtractResult { output: out, reference_mse })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub duration_s: f64,
    /// Overall SNR of the harmonic mixture; `None` writes the noise-free mix.
    pub snr_db: Option<f64>,
    pub sample_rate_hz: f64,
    /// Fixed fundamental instead of the AR(1) path.
    pub constant_hz: Option<f64>,
    pub corrupt: Vec<u32>,
    pub corruption_snr_db: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            snr_db: Some(0.0),
            sample_rate_hz: 8000.0,
            constant_hz: None,
            corrupt: Vec::new(),
            corruption_snr_db: -10.0,
        }
    }
}

/// Ground truth of a synthesized recording at frame resolution.
pub fn synth_recording(opts: &SynthOptions, cfg: &RunConfig) -> Result<(SampleBuffer, IfSeries)> {
    let work_fs = cfg.target_fs_hz;
    let ratio = opts.sample_rate_hz / work_fs;
    if ratio.fract() != 0.0 || ratio < 1.0 {
        bail!("output rate {} Hz must be an integer multiple of the working rate {work_fs} Hz", opts.sample_rate_hz);
    }
    let ratio = ratio as usize;
    let n = (opts.duration_s * work_fs).round() as usize;
    let model = match opts.constant_hz {
        Some(f) => EnfModel::Constant { lo_hz: f, hi_hz: f },
        None => EnfModel::default(),
    };
    // the ENF evolves at the working rate and is held across the faster
    // output samples
    let f = model.generate(n, derive_seed(cfg.seed, STREAM_ENF))?;
    let f_out: Vec<f64> = f.iter().flat_map(|v| std::iter::repeat_n(*v, ratio)).collect();
    let spec = HarmonicModelSpec::equal_amplitude(&cfg.harmonics, 1.0, f_out);
    let clean = synth_multitone(&spec, opts.sample_rate_hz)?;
    let signal = if opts.corrupt.is_empty() {
        clean.clone()
    } else {
        synth_multitone(&corrupt_harmonics(&spec, &opts.corrupt, opts.corruption_snr_db, cfg.seed)?, opts.sample_rate_hz)?
    };
    let trial = TrialSignal { clean, signal, fundamental_if_hz: f.clone() };
    let x = match opts.snr_db {
        Some(snr) => noisy_observation(&trial, snr, derive_seed(cfg.seed, STREAM_NOISE))?,
        None => trial.signal,
    };
    // leave headroom below full scale
    let peak = x.max_abs();
    let gain = if peak > 0.0 { 0.9 / peak } else { 1.0 };
    let x = SampleBuffer::new(x.samples().iter().map(|v| v * gain).collect(), opts.sample_rate_hz)?;
    Ok((x, frame_truth(&f, &cfg.frame_config()?)))
}

/// Write a synthetic recording and its ground-truth ENF CSV.
pub fn cmd_synth(wav_out: &Path, truth_out: &Path, opts: &SynthOptions, cfg: &RunConfig) -> Result<IfSeries> {
    let (x, truth) = synth_recording(opts, cfg)?;
    write_atomic(wav_out, &encode_wav(&x)?)?;
    write_enf_csv(truth_out, &truth, cfg.target_fs_hz)?;
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub duration_s: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<SchemeId>,
    pub corrupt: Vec<u32>,
    pub corruption_snr_db: f64,
    pub omega_stats: bool,
    /// Draw one constant fundamental per trial from this range instead of
    /// an AR(1) path.
    pub constant_range_hz: Option<(f64, f64)>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            duration_s: 180.0,
            snr_db: vec![-20.0, -10.0, 0.0],
            trials: 100,
            schemes: SchemeId::ALL.to_vec(),
            corrupt: Vec::new(),
            corruption_snr_db: -10.0,
            omega_stats: false,
            constant_range_hz: None,
        }
    }
}

pub fn scenario(opts: &McOptions, cfg: &RunConfig) -> Result<Scenario> {
    Ok(Scenario {
        duration_s: opts.duration_s,
        snr_db: opts.snr_db.clone(),
        schemes: opts.schemes.clone(),
        corruption: (!opts.corrupt.is_empty())
            .then(|| enf_core::eval::Corruption { harmonics: opts.corrupt.clone(), snr_db: opts.corruption_snr_db }),
        trials: opts.trials,
        base_seed: cfg.seed,
        enf: match opts.constant_range_hz {
            Some((lo_hz, hi_hz)) => EnfModel::Constant { lo_hz, hi_hz },
            None => EnfModel::default(),
        },
        params: cfg.params()?,
        omega_stats: opts.omega_stats,
    })
}

/// Monte Carlo run. Writes `nmse.csv` (with the CRLB per SNR),
/// `trials.csv` and, with `omega_stats`, `omega.csv` into `out_dir`.
pub fn cmd_mc(out_dir: &Path, opts: &McOptions, cfg: &RunConfig) -> Result<MonteCarloResult> {
    let sc = scenario(opts, cfg)?;
    let result = monte_carlo(&sc)?;
    let frame_len = cfg.frame_config()?.frame_len;
    let rows = result
        .summary
        .iter()
        .map(|r| {
            let bound = crlb(frame_len, 10f64.powf(r.snr_db / 10.0), &cfg.harmonics, cfg.target_fs_hz)?;
            Ok(vec![
                r.scheme.to_string(),
                r.snr_db.to_string(),
                r.trials.to_string(),
                r.nmse_hz2.to_string(),
                r.std_mse_hz2.to_string(),
                r.median_mse_hz2.to_string(),
                r.mean_omega.to_string(),
                bound.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let header = ["scheme", "snr_db", "trials", "nmse_hz2", "std_mse_hz2", "median_mse_hz2", "mean_omega", "crlb_hz2"];
    write_atomic(&out_dir.join("nmse.csv"), csv(&header, rows).as_bytes())?;

    let trials = result.reports.iter().map(|r| {
        vec![
            r.scheme.to_string(),
            r.snr_db.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.mse_hz2.to_string(),
            r.omega_size.to_string(),
        ]
    });
    let header = ["scheme", "snr_db", "trial", "seed", "mse_hz2", "omega_size"];
    write_atomic(&out_dir.join("trials.csv"), csv(&header, trials).as_bytes())?;

    if opts.omega_stats {
        let rows = result.omega.iter().map(|r| {
            vec![r.snr_db.to_string(), r.trials.to_string(), r.mean_before.to_string(), r.mean_after.to_string()]
        });
        let header = ["snr_db", "trials", "mean_omega_before", "mean_omega_after"];
        write_atomic(&out_dir.join("omega.csv"), csv(&header, rows).as_bytes())?;
    }
    Ok(result)
}

/// Recordings in `dir` paired with a sibling reference of the same stem
/// (`.csv` preferred over `.txt`), sorted by name.
pub fn discover_dataset(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    let mut pairs = Vec::new();
    for w in wavs {
        let reference = ["csv", "txt"].iter().map(|ext| w.with_extension(ext)).find(|p| p.is_file());
        match reference {
            Some(r) => pairs.push((w, r)),
            None => bail!("{} has no sibling reference (.csv or .txt)", w.display()),
        }
    }
    if pairs.is_empty() {
        bail!("no .wav recordings in {}", dir.display());
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingResult {
    pub recording: String,
    pub scheme: SchemeId,
    pub frames: usize,
    pub mse_hz2: f64,
    pub omega: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub scheme: SchemeId,
    pub harmonics: usize,
    pub mean_omega: f64,
    pub nmse_hz2: f64,
    pub std_mse_hz2: f64,
    pub recordings: usize,
}

pub fn summarize_dataset(results: &[RecordingResult], schemes: &[SchemeId], harmonics: usize) -> Vec<DatasetSummary> {
    schemes
        .iter()
        .map(|&id| {
            let rows: Vec<&RecordingResult> = results.iter().filter(|r| r.scheme == id).collect();
            let n = rows.len().max(1) as f64;
            let mean = rows.iter().map(|r| r.mse_hz2).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.mse_hz2 - mean).powi(2)).sum::<f64>() / n;
            DatasetSummary {
                scheme: id,
                harmonics,
                mean_omega: rows.iter().map(|r| r.omega.len() as f64).sum::<f64>() / n,
                nmse_hz2: mean,
                std_mse_hz2: var.sqrt(),
                recordings: rows.len(),
            }
        })
        .collect()
}

/// Every scheme on every recording of a dataset directory. Writes
/// `per_recording.csv` and the Table II-style `summary.csv`.
pub fn cmd_eval_dataset(
    dir: &Path,
    out_dir: &Path,
    schemes: &[SchemeId],
    cfg: &RunConfig,
    ref_offset: i64,
) -> Result<(Vec<RecordingResult>, Vec<DatasetSummary>)> {
    let mut results = Vec::new();
    for (wav, reference) in discover_dataset(dir)? {
        let name = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let runner = runner_for(&wav, cfg)?;
        let truth = read_reference_enf(&reference, runner.frame_config())?;
        for &id in schemes {
            let out = runner.run(id).with_context(|| format!("{name}: scheme {id}"))?;
            let (frames, mse_hz2) = mse_against(&out.estimate, &truth, ref_offset)
                .with_context(|| format!("{name}: comparing against {}", reference.display()))?;
            results.push(RecordingResult { recording: name.clone(), scheme: id, frames, mse_hz2, omega: out.omega });
        }
    }
    let rows = results.iter().map(|r| {
        vec![r.recording.clone(), r.scheme.to_string(), r.frames.to_string(), r.mse_hz2.to_string(), omega_cell(&r.omega)]
    });
    let header = ["recording", "scheme", "frames", "mse_hz2", "omega"];
    write_atomic(&out_dir.join("per_recording.csv"), csv(&header, rows).as_bytes())?;

    let summary = summarize_dataset(&results, schemes, cfg.harmonics.len());
    let rows = summary.iter().map(|s| {
        vec![
            s.scheme.to_string(),
            s.harmonics.to_string(),
            s.mean_omega.to_string(),
            s.nmse_hz2.to_string(),
            s.std_mse_hz2.to_string(),
            s.recordings.to_string(),
        ]
    });
    let header = ["scheme", "harmonics", "mean_omega", "nmse_hz2", "std_mse_hz2", "recordings"];
    write_atomic(&out_dir.join("summary.csv"), csv(&header, rows).as_bytes())?;
    Ok((results, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub scheme: SchemeId,
    pub omega: Vec<u32>,
    pub eta: Option<f64>,
    pub mean_hz: f64,
    pub mse_hz2: Option<f64>,
}

/// All ten schemes on one recording: one ENF CSV per scheme plus
/// `compare.csv`.
pub fn cmd_compare(
    input: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    reference: Option<&Path>,
    ref_offset: i64,
) -> Result<Vec<CompareRow>> {
    let runner = runner_for(input, cfg)?;
    let truth = match reference {
        Some(p) => Some(read_reference_enf(p, runner.frame_config())?),
        None => None,
    };
    let mut rows = Vec::new();
    for id in SchemeId::ALL {
        let out = runner.run(id)?;
        let mse_hz2 = match &truth {
            Some(t) => Some(mse_against(&out.estimate, t, ref_offset)?.1),
            None => None,
        };
        let v = &out.estimate.values_hz;
        let mean_hz = v.iter().sum::<f64>() / v.len().max(1) as f64;
        write_enf_csv(&out_dir.join(format!("{id}.csv")), &out.estimate, cfg.target_fs_hz)?;
        rows.push(CompareRow { scheme: id, omega: out.omega, eta: out.eta, mean_hz, mse_hz2 });
    }
    let cells = rows.iter().map(|r| {
        vec![
            r.scheme.to_string(),
            omega_cell(&r.omega),
            r.eta.map(|e| e.to_string()).unwrap_or_default(),
            r.mean_hz.to_string(),
            r.mse_hz2.map(|e| e.to_string()).unwrap_or_default(),
        ]
    });
    let header = ["scheme", "omega", "eta", "mean_hz", "mse_hz2"];
    write_atomic(&out_dir.join("compare.csv"), csv(&header, cells).as_bytes())?;
    Ok(rows)
}
