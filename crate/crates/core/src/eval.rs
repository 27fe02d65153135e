//! Error metrics, the Cramér-Rao bound, a seeded Monte Carlo harness and an
//! exhaustive clique oracle for checking the selection module.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, EnfError, Result};
use crate::estimators::{PipelineParams, SchemeId, SchemeRunner};
use crate::model::{
    add_wgn_at_snr, corrupt_harmonics, frame_truth, synth_enf_ar1, synth_multitone, HarmonicModelSpec, IfSeries,
    SampleBuffer,
};
use crate::rng::{derive_seed, rng_from_seed, STREAM_CORRUPTION, STREAM_ENF, STREAM_NOISE, STREAM_TRIAL};
use crate::selection::{average_weight, better, build_graph, mask_to_vertices};

/// Bound on the variance of an unbiased multi-tone estimate with equal
/// amplitudes, at 2nd-harmonic scale:
/// `72 / (N_F³ · SNR) · (Σ m²)⁻¹ · (f_S / 2π)² · 4`.
pub fn crlb(n_f: usize, snr_linear: f64, harmonics: &[u32], sample_rate_hz: f64) -> Result<f64> {
    if harmonics.is_empty() {
        return invalid("empty harmonic set");
    }
    if !(snr_linear > 0.0) {
        return invalid(format!("SNR must be positive, got {snr_linear}"));
    }
    if n_f == 0 {
        return invalid("frame length must be positive");
    }
    let sum_m2: f64 = harmonics.iter().map(|&m| (m as f64).powi(2)).sum();
    let nf = n_f as f64;
    let scale = sample_rate_hz / (2.0 * PI);
    Ok(72.0 / (nf.powi(3) * snr_linear) / sum_m2 * scale * scale * 4.0)
}

/// Mean squared difference over the common prefix of the two tracks.
pub fn mse(estimate: &IfSeries, truth: &IfSeries) -> Result<f64> {
    let n = estimate.len().min(truth.len());
    if n == 0 {
        return invalid("no overlap between estimate and truth");
    }
    let sum: f64 = estimate.values_hz[..n]
        .iter()
        .zip(&truth.values_hz[..n])
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sum / n as f64)
}

/// Per-trial MSEs and their mean (the NMSE at 2nd-harmonic scale).
pub fn mse_nmse(pairs: &[(IfSeries, IfSeries)]) -> Result<(Vec<f64>, f64)> {
    if pairs.is_empty() {
        return invalid("no trials");
    }
    let mses = pairs.iter().map(|(e, t)| mse(e, t)).collect::<Result<Vec<_>>>()?;
    let nmse = mses.iter().sum::<f64>() / mses.len() as f64;
    Ok((mses, nmse))
}

/// How each trial's fundamental IF is drawn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EnfModel {
    /// AR(1) path with the given coefficient, variance and mean.
    Ar1 { ar_coef: f64, variance: f64, mean_hz: f64 },
    /// A constant drawn uniformly from `[lo_hz, hi_hz]` per trial.
    Constant { lo_hz: f64, hi_hz: f64 },
}

impl Default for EnfModel {
    fn default() -> Self {
        EnfModel::Ar1 { ar_coef: 0.99, variance: 4.5e-4, mean_hz: 50.0 }
    }
}

impl EnfModel {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        match *self {
            EnfModel::Ar1 { ar_coef, variance, mean_hz } => synth_enf_ar1(n, seed, ar_coef, variance, mean_hz),
            EnfModel::Constant { lo_hz, hi_hz } => {
                if !(lo_hz <= hi_hz) {
                    return invalid("empty frequency range");
                }
                let f = if lo_hz == hi_hz { lo_hz } else { rng_from_seed(seed).random_range(lo_hz..hi_hz) };
                Ok(vec![f; n])
            }
        }
    }
}

/// Band-limited noise on selected harmonics, relative to each component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corruption {
    pub harmonics: Vec<u32>,
    pub snr_db: f64,
}

/// A synthetic experiment: every trial draws a fresh ENF, corruption and
/// noise, and runs every scheme at every SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub duration_s: f64,
    pub snr_db: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub corruption: Option<Corruption>,
    pub trials: usize,
    pub base_seed: u64,
    pub enf: EnfModel,
    /// Synthesis happens at `params.target_fs_hz`.
    pub params: PipelineParams,
    /// Also record |Ω| before and after enhancement.
    pub omega_stats: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration_s: 180.0,
            snr_db: vec![-20.0, -10.0, 0.0],
            schemes: SchemeId::ALL.to_vec(),
            corruption: None,
            trials: 100,
            base_seed: 0,
            enf: EnfModel::default(),
            params: PipelineParams::default(),
            omega_stats: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub trial: usize,
    pub mse_hz2: f64,
    /// Same error at 2nd-harmonic scale; equals `mse_hz2` because every
    /// track is normalized before comparison.
    pub nmse_hz2: f64,
    pub omega_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaReport {
    pub snr_db: f64,
    pub trial: usize,
    pub before: usize,
    pub after: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub trials: usize,
    pub nmse_hz2: f64,
    pub std_mse_hz2: f64,
    pub median_mse_hz2: f64,
    pub mean_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaRow {
    pub snr_db: f64,
    pub trials: usize,
    pub mean_before: f64,
    pub mean_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub reports: Vec<TrialReport>,
    pub omega_reports: Vec<OmegaReport>,
    pub summary: Vec<SummaryRow>,
    pub omega: Vec<OmegaRow>,
}

/// One synthesized trial before noise: the signal, the clean reference for
/// the SNR, and the per-frame truth.
pub struct TrialSignal {
    pub clean: SampleBuffer,
    pub signal: SampleBuffer,
    pub fundamental_if_hz: Vec<f64>,
}

/// Synthesize the noise-free (but possibly corrupted) mixture of a trial.
pub fn synth_trial(scenario: &Scenario, trial_seed: u64) -> Result<TrialSignal> {
    let fs = scenario.params.target_fs_hz;
    let n = (scenario.duration_s * fs).round() as usize;
    let f = scenario.enf.generate(n, derive_seed(trial_seed, STREAM_ENF))?;
    let spec = HarmonicModelSpec::equal_amplitude(&scenario.params.harmonics, 1.0, f.clone());
    let clean = synth_multitone(&spec, fs)?;
    let signal = match &scenario.corruption {
        Some(c) if !c.harmonics.is_empty() => synth_multitone(
            &corrupt_harmonics(&spec, &c.harmonics, c.snr_db, derive_seed(trial_seed, STREAM_CORRUPTION))?,
            fs,
        )?,
        _ => clean.clone(),
    };
    Ok(TrialSignal { clean, signal, fundamental_if_hz: f })
}

/// White noise at `snr_db` relative to `clean`, added to `signal`.
pub fn noisy_observation(t: &TrialSignal, snr_db: f64, seed: u64) -> Result<SampleBuffer> {
    if snr_db == f64::INFINITY {
        return Ok(t.signal.clone());
    }
    let noisy_clean = add_wgn_at_snr(&t.clean, snr_db, seed)?;
    let x: Vec<f64> = t
        .signal
        .samples()
        .iter()
        .zip(noisy_clean.samples().iter().zip(t.clean.samples()))
        .map(|(s, (nc, c))| s + (nc - c))
        .collect();
    SampleBuffer::new(x, t.clean.sample_rate_hz())
}

fn run_trial(scenario: &Scenario, trial: usize) -> Result<(Vec<TrialReport>, Vec<OmegaReport>)> {
    let trial_seed = derive_seed(scenario.base_seed, STREAM_TRIAL + trial as u64);
    let t = synth_trial(scenario, trial_seed)?;
    let cfg = scenario.params.frame_config();
    let truth = frame_truth(&t.fundamental_if_hz, &cfg);
    let mut reports = Vec::new();
    let mut omegas = Vec::new();
    for (k, &snr) in scenario.snr_db.iter().enumerate() {
        let x = noisy_observation(&t, snr, derive_seed(trial_seed, STREAM_NOISE + k as u64))?;
        let params = PipelineParams { seed: trial_seed, ..scenario.params.clone() };
        let runner = SchemeRunner::from_raw(&x, params)?;
        for &id in &scenario.schemes {
            let out = runner.run(id)?;
            let e = mse(&out.estimate, &truth)?;
            reports.push(TrialReport {
                scheme: id,
                snr_db: snr,
                trial,
                mse_hz2: e,
                nmse_hz2: e,
                omega_size: out.omega.len(),
                seed: trial_seed,
            });
        }
        if scenario.omega_stats {
            omegas.push(OmegaReport {
                snr_db: snr,
                trial,
                before: runner.selection_raw()?.omega.len(),
                after: runner.selection_enhanced()?.omega.len(),
                seed: trial_seed,
            });
        }
    }
    Ok((reports, omegas))
}

fn snr_key(snr: f64) -> i64 {
    (snr * 1e6).round() as i64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// NMSE / spread / mean |Ω| per (scheme, SNR). Independent of report order.
pub fn summarize(reports: &[TrialReport]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&TrialReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.scheme, snr_key(r.snr_db), r.trial));
    let mut groups: BTreeMap<(SchemeId, i64), Vec<&TrialReport>> = BTreeMap::new();
    for r in sorted {
        groups.entry((r.scheme, snr_key(r.snr_db))).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let mses: Vec<f64> = g.iter().map(|r| r.mse_hz2).collect();
            let (nmse, std) = mean_std(&mses);
            let omegas: Vec<f64> = g.iter().map(|r| r.omega_size as f64).collect();
            SummaryRow {
                scheme: g[0].scheme,
                snr_db: g[0].snr_db,
                trials: g.len(),
                nmse_hz2: nmse,
                std_mse_hz2: std,
                median_mse_hz2: median(&mses),
                mean_omega: mean_std(&omegas).0,
            }
        })
        .collect()
}

/// Mean |Ω| before and after enhancement per SNR.
pub fn summarize_omega(reports: &[OmegaReport]) -> Vec<OmegaRow> {
    let mut sorted: Vec<&OmegaReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (snr_key(r.snr_db), r.trial));
    let mut groups: BTreeMap<i64, Vec<&OmegaReport>> = BTreeMap::new();
    for r in sorted {
        groups.entry(snr_key(r.snr_db)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let n = g.len() as f64;
            OmegaRow {
                snr_db: g[0].snr_db,
                trials: g.len(),
                mean_before: g.iter().map(|r| r.before as f64).sum::<f64>() / n,
                mean_after: g.iter().map(|r| r.after as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Run every trial of `scenario` (in parallel) and aggregate.
pub fn monte_carlo(scenario: &Scenario) -> Result<MonteCarloResult> {
    if scenario.trials == 0 || scenario.snr_db.is_empty() || scenario.schemes.is_empty() {
        return invalid("scenario needs at least one trial, SNR and scheme");
    }
    if !(scenario.duration_s > 0.0) {
        return invalid("duration must be positive");
    }
    let per_trial = (0..scenario.trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, t))
        .collect::<Result<Vec<_>>>()?;
    let (mut reports, mut omega_reports) = (Vec::new(), Vec::new());
    for (r, o) in per_trial {
        reports.extend(r);
        omega_reports.extend(o);
    }
    let summary = summarize(&reports);
    let omega = summarize_omega(&omega_reports);
    Ok(MonteCarloResult { reports, omega_reports, summary, omega })
}

/// Largest matrix the oracle accepts.
pub const ORACLE_MAX_DIM: usize = 12;

/// Exhaustive maximum-average-weight selection: every vertex subset of size
/// ≥ 2 whose pairs all reach `eta` and that no further vertex can extend,
/// ranked with the same tie-breaking as the selection module. Returns vertex
/// positions; empty when no pair reaches `eta`.
pub fn oracle_mwc(r: &[Vec<f64>], eta: f64) -> Result<Vec<usize>> {
    let k = r.len();
    if k > ORACLE_MAX_DIM {
        return Err(EnfError::InvalidArgument(format!(
            "oracle refuses {k} vertices (limit {ORACLE_MAX_DIM})"
        )));
    }
    let vertices: Vec<u32> = (0..k as u32).collect();
    let g = build_graph(&vertices, r, eta)?;
    let edge = |i: usize, j: usize| g.adjacency[i][j] > 0.0;
    let feasible = |mask: u32| {
        let v = mask_to_vertices(mask as u64);
        v.iter().enumerate().all(|(a, &i)| v[a + 1..].iter().all(|&j| edge(i, j)))
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << k) {
        if mask.count_ones() < 2 || !feasible(mask) {
            continue;
        }
        let extensible = (0..k).any(|v| mask & (1 << v) == 0 && feasible(mask | (1 << v)));
        if extensible {
            continue;
        }
        let c = mask_to_vertices(mask as u64);
        let w = average_weight(&g.adjacency, &c);
        if best.as_ref().is_none_or(|(b, bw)| better((&c, w), (b, *bw))) {
            best = Some((c, w));
        }
    }
    Ok(best.map(|(c, _)| c).unwrap_or_default())
}
