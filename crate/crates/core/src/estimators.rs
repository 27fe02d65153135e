//! Fundamental-frequency estimators and the ten composed schemes.
//!
//! | scheme     | enhancement | selection | estimator |
//! |------------|-------------|-----------|-----------|
//! | `single`   |             |           | peak of the 2nd harmonic |
//! | `e_single` | yes         |           | peak of the 2nd harmonic |
//! | `mle`      |             |           | MLE over `M` |
//! | `wmle`     |             |           | weighted MLE over `M` |
//! | `e_mle`    | yes         |           | MLE over `M` |
//! | `e_wmle`   | yes         |           | weighted MLE over `M` |
//! | `s_mle`    |             | yes       | MLE over `Ω` |
//! | `s_wmle`   |             | yes       | weighted MLE over `Ω` |
//! | `p_mle`    | yes         | yes       | MLE over `Ω` |
//! | `p_wmle`   | yes         | yes       | weighted MLE over `Ω` |

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enhancement::{hrfa, EnhancedSignal, EnhancerConfig};
use crate::error::{invalid, EnfError, Result};
use crate::model::{num_frames, FrameConfig, HarmonicTag, IfSeries, SampleBuffer};
use crate::preprocess::{apply_fir, decimate, design_comb, frame};
use crate::rng::{derive_seed, STREAM_ETA};
use crate::selection::{ghsa, ghsa_mixture, threshold_eta, CliqueSelection};
use crate::spectral::{argmax_first, normalize_to_2nd, track_if, BandPeriodogram, ZoomDft};
use crate::{DEFAULT_HARMONICS, LOOSE_BAND_HZ, SEARCH_BAND_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Single,
    ESingle,
    Mle,
    Wmle,
    EMle,
    EWmle,
    SMle,
    SWmle,
    PMle,
    PWmle,
}

impl SchemeId {
    pub const ALL: [SchemeId; 10] = [
        SchemeId::Single,
        SchemeId::ESingle,
        SchemeId::Mle,
        SchemeId::Wmle,
        SchemeId::EMle,
        SchemeId::EWmle,
        SchemeId::SMle,
        SchemeId::SWmle,
        SchemeId::PMle,
        SchemeId::PWmle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Single => "single",
            SchemeId::ESingle => "e_single",
            SchemeId::Mle => "mle",
            SchemeId::Wmle => "wmle",
            SchemeId::EMle => "e_mle",
            SchemeId::EWmle => "e_wmle",
            SchemeId::SMle => "s_mle",
            SchemeId::SWmle => "s_wmle",
            SchemeId::PMle => "p_mle",
            SchemeId::PWmle => "p_wmle",
        }
    }

    pub fn enhanced(self) -> bool {
        matches!(self, SchemeId::ESingle | SchemeId::EMle | SchemeId::EWmle | SchemeId::PMle | SchemeId::PWmle)
    }

    pub fn selected(self) -> bool {
        matches!(self, SchemeId::SMle | SchemeId::SWmle | SchemeId::PMle | SchemeId::PWmle)
    }

    pub fn weighted(self) -> bool {
        matches!(self, SchemeId::Wmle | SchemeId::EWmle | SchemeId::SWmle | SchemeId::PWmle)
    }

    pub fn single_tone(self) -> bool {
        matches!(self, SchemeId::Single | SchemeId::ESingle)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = EnfError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == key)
            .ok_or_else(|| EnfError::InvalidArgument(format!("unknown scheme `{s}`")))
    }
}

/// Local SNR estimates `w[m][l]`, rows in `harmonics` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightMatrix {
    pub harmonics: Vec<u32>,
    pub weights: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn row(&self, m: u32) -> Option<&[f64]> {
        self.harmonics.iter().position(|&h| h == m).map(|i| self.weights[i].as_slice())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            harmonics: self.harmonics.clone(),
            weights: self.weights.iter().map(|r| r.iter().map(|w| w * factor).collect()).collect(),
        }
    }
}

fn harmonic_set(harmonics: &[u32]) -> Result<Vec<u32>> {
    let mut set = harmonics.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() {
        return invalid("empty harmonic set");
    }
    if set.contains(&0) {
        return invalid("harmonic indices must be positive");
    }
    Ok(set)
}

/// Harmonic periodograms sampled on a common fundamental grid.
struct FundamentalGrid {
    grid_hz: Vec<f64>,
    dfts: Vec<(u32, ZoomDft)>,
}

impl FundamentalGrid {
    /// Grid step `resolution / max(Ω)` over the search band, so that for a
    /// single harmonic the grid coincides with its periodogram bins.
    fn new(harmonics: &[u32], sample_rate_hz: f64, cfg: &FrameConfig) -> Result<Self> {
        cfg.transform_len(sample_rate_hz)?;
        let max_m = *harmonics.iter().max().unwrap();
        if max_m as f64 * SEARCH_BAND_HZ.1 >= sample_rate_hz / 2.0 {
            return invalid(format!("harmonic {max_m} search band exceeds the Nyquist frequency"));
        }
        let step = cfg.fft_resolution_hz / max_m as f64;
        let k_lo = (SEARCH_BAND_HZ.0 / step - 1e-7).ceil() as i64;
        let k_hi = (SEARCH_BAND_HZ.1 / step + 1e-7).floor() as i64;
        let grid_hz: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * step).collect();
        let dfts = harmonics
            .iter()
            .map(|&m| {
                let mf = m as f64;
                let dft = ZoomDft::new(
                    cfg.frame_len,
                    mf * grid_hz[0] / sample_rate_hz,
                    mf * step / sample_rate_hz,
                    grid_hz.len(),
                );
                (m, dft)
            })
            .collect();
        Ok(Self { grid_hz, dfts })
    }

    /// Argmax of `Σ_m w_m · P(m·f)`, reported at 2nd-harmonic scale.
    fn estimate(&self, frame: &[f64], weight: impl Fn(u32) -> f64) -> f64 {
        let mut total = vec![0.0; self.grid_hz.len()];
        for (m, dft) in &self.dfts {
            let w = weight(*m);
            if w == 0.0 {
                continue;
            }
            for (t, p) in total.iter_mut().zip(dft.power(frame)) {
                *t += w * p;
            }
        }
        2.0 * self.grid_hz[argmax_first(&total).expect("non-empty grid")]
    }
}

fn run_grid(
    signal: &SampleBuffer,
    harmonics: &[u32],
    cfg: &FrameConfig,
    weights: Option<&WeightMatrix>,
) -> Result<IfSeries> {
    cfg.validate()?;
    let set = harmonic_set(harmonics)?;
    let grid = FundamentalGrid::new(&set, signal.sample_rate_hz(), cfg)?;
    let frames = frame(signal.samples(), cfg);
    let rows: Vec<(u32, &[f64])> = match weights {
        None => Vec::new(),
        Some(w) => set
            .iter()
            .map(|&m| {
                let row = w.row(m).ok_or_else(|| EnfError::InvalidArgument(format!("no weights for harmonic {m}")))?;
                if row.len() != frames.len() {
                    return Err(EnfError::LengthMismatch { expected: frames.len(), actual: row.len() });
                }
                Ok((m, row))
            })
            .collect::<Result<_>>()?,
    };
    let values = (0..frames.len())
        .into_par_iter()
        .map(|l| {
            let f = frames.get(l);
            if rows.is_empty() {
                grid.estimate(f, |_| 1.0)
            } else {
                grid.estimate(f, |m| rows.iter().find(|(h, _)| *h == m).map_or(0.0, |(_, r)| r[l]))
            }
        })
        .collect();
    Ok(IfSeries::new(values, HarmonicTag::Normalized, *cfg))
}

/// Harmonic-summation maximum-likelihood estimate per frame, normalized to
/// the 2nd harmonic.
pub fn mle(signal: &SampleBuffer, harmonics: &[u32], cfg: &FrameConfig) -> Result<IfSeries> {
    run_grid(signal, harmonics, cfg, None)
}

/// Weighted harmonic summation with per-frame weights.
pub fn wmle(signal: &SampleBuffer, harmonics: &[u32], cfg: &FrameConfig, weights: &WeightMatrix) -> Result<IfSeries> {
    if weights.weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return invalid("weights must be finite and non-negative");
    }
    run_grid(signal, harmonics, cfg, Some(weights))
}

/// Inner signal subband, at fundamental scale.
pub const SIGNAL_SUBBAND_HZ: (f64, f64) = (49.98, 50.02);

/// Per-frame local SNR: periodogram energy inside `m × [49.98, 50.02]`
/// over the energy in the rest of `m × [49, 51]`.
pub fn estimate_weights(signal: &SampleBuffer, harmonics: &[u32], cfg: &FrameConfig) -> Result<WeightMatrix> {
    cfg.validate()?;
    let set = harmonic_set(harmonics)?;
    let fs = signal.sample_rate_hz();
    let frames = frame(signal.samples(), cfg);
    let weights = set
        .iter()
        .map(|&m| {
            let mf = m as f64;
            let band = BandPeriodogram::new(cfg.frame_len, fs, cfg.fft_resolution_hz, (mf * LOOSE_BAND_HZ.0, mf * LOOSE_BAND_HZ.1))?;
            let (s_lo, s_hi) = (mf * SIGNAL_SUBBAND_HZ.0, mf * SIGNAL_SUBBAND_HZ.1);
            let tol = 1e-7 * cfg.fft_resolution_hz;
            let inner: Vec<bool> =
                band.grid_hz().iter().map(|f| *f >= s_lo - tol && *f <= s_hi + tol).collect();
            Ok((0..frames.len())
                .into_par_iter()
                .map(|l| {
                    let f = frames.get(l);
                    let eps = 1e-12 * f.iter().map(|v| v * v).sum::<f64>();
                    let (mut sig, mut noise) = (0.0, 0.0);
                    for (p, is_sig) in band.power(f).iter().zip(&inner) {
                        if *is_sig {
                            sig += p;
                        } else {
                            noise += p;
                        }
                    }
                    if sig == 0.0 {
                        0.0
                    } else {
                        sig / (noise + eps)
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(WeightMatrix { harmonics: set, weights })
}

/// Everything a scheme needs besides the recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub target_fs_hz: f64,
    pub harmonics: Vec<u32>,
    /// `None` derives `N_F = 16 f_S`, `Δ = f_S`, resolution 1/4000 Hz.
    pub frame: Option<FrameConfig>,
    pub enhancer: EnhancerConfig,
    pub kappa: f64,
    pub n_rep: usize,
    /// Fixed threshold instead of the simulated one.
    pub eta: Option<f64>,
    /// Apply the multi-band comb before estimation.
    pub prefilter: bool,
    pub comb_length: usize,
    pub comb_halfwidth_hz: f64,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            target_fs_hz: 800.0,
            harmonics: DEFAULT_HARMONICS.to_vec(),
            frame: None,
            enhancer: EnhancerConfig::default(),
            kappa: 4.0,
            n_rep: 10_000,
            eta: None,
            prefilter: true,
            comb_length: 256,
            comb_halfwidth_hz: 1.0,
            seed: 0,
        }
    }
}

impl PipelineParams {
    pub fn frame_config(&self) -> FrameConfig {
        self.frame.unwrap_or_else(|| FrameConfig::for_sample_rate(self.target_fs_hz))
    }

    pub fn validate(&self) -> Result<()> {
        harmonic_set(&self.harmonics)?;
        if !self.harmonics.contains(&2) {
            return invalid("the harmonic set must contain the 2nd harmonic");
        }
        if !(self.kappa > 1.0) {
            return invalid(format!("kappa must exceed 1, got {}", self.kappa));
        }
        if self.n_rep < 1 {
            return invalid("n_rep must be at least 1");
        }
        if let Some(e) = self.eta {
            if !(0.0..=1.0).contains(&e) {
                return invalid(format!("eta must lie in [0, 1], got {e}"));
            }
        }
        self.frame_config().validate()?;
        self.enhancer.validate()
    }
}

/// Decimate to the target rate, then (optionally) comb-filter around every
/// harmonic of the set.
pub fn preprocess_recording(raw: &SampleBuffer, params: &PipelineParams) -> Result<SampleBuffer> {
    let x = decimate(raw, params.target_fs_hz)?;
    if !params.prefilter {
        return Ok(x);
    }
    let comb = design_comb(&params.harmonics, x.sample_rate_hz(), params.comb_length, params.comb_halfwidth_hz)?;
    apply_fir(&x, &comb)
}

/// Result of one scheme with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutput {
    pub scheme: SchemeId,
    /// Per-frame ENF at 2nd-harmonic scale.
    pub estimate: IfSeries,
    pub omega: Vec<u32>,
    pub eta: Option<f64>,
    pub selection: Option<CliqueSelection>,
    pub weights: Option<WeightMatrix>,
}

/// Runs schemes on one preprocessed recording, sharing the expensive
/// intermediate results (enhancement, threshold, selections) between them.
#[derive(Debug)]
pub struct SchemeRunner {
    params: PipelineParams,
    signal: SampleBuffer,
    enhanced: OnceLock<EnhancedSignal>,
    eta: OnceLock<f64>,
    selection_raw: OnceLock<CliqueSelection>,
    selection_enhanced: OnceLock<CliqueSelection>,
}

fn cached<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

impl SchemeRunner {
    /// `signal` must already be preprocessed (see [`Self::from_raw`]).
    pub fn new(signal: SampleBuffer, params: PipelineParams) -> Result<Self> {
        params.validate()?;
        if (signal.sample_rate_hz() - params.target_fs_hz).abs() > 1e-9 {
            return invalid(format!(
                "signal is at {} Hz, expected {} Hz",
                signal.sample_rate_hz(),
                params.target_fs_hz
            ));
        }
        Ok(Self {
            params,
            signal,
            enhanced: OnceLock::new(),
            eta: OnceLock::new(),
            selection_raw: OnceLock::new(),
            selection_enhanced: OnceLock::new(),
        })
    }

    pub fn from_raw(raw: &SampleBuffer, params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let x = preprocess_recording(raw, &params)?;
        Self::new(x, params)
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn signal(&self) -> &SampleBuffer {
        &self.signal
    }

    pub fn frame_config(&self) -> FrameConfig {
        self.params.frame_config()
    }

    pub fn n_frames(&self) -> usize {
        num_frames(self.signal.len(), &self.frame_config())
    }

    pub fn enhanced(&self) -> Result<&EnhancedSignal> {
        cached(&self.enhanced, || {
            let mut cfg = self.params.enhancer.clone();
            cfg.frame.get_or_insert(self.frame_config());
            hrfa(&self.signal, &self.params.harmonics, &cfg)
        })
    }

    pub fn eta(&self) -> Result<f64> {
        cached(&self.eta, || match self.params.eta {
            Some(e) => Ok(e),
            None => threshold_eta(
                self.n_frames(),
                self.params.kappa,
                self.params.n_rep,
                derive_seed(self.params.seed, STREAM_ETA),
            ),
        })
        .copied()
    }

    /// Selection on the unenhanced mixture.
    pub fn selection_raw(&self) -> Result<&CliqueSelection> {
        cached(&self.selection_raw, || {
            ghsa_mixture(&self.signal, self.eta()?, &self.params.harmonics, &self.frame_config())
        })
    }

    /// Selection on the enhanced components.
    pub fn selection_enhanced(&self) -> Result<&CliqueSelection> {
        cached(&self.selection_enhanced, || {
            ghsa(self.enhanced()?, self.eta()?, &self.params.harmonics, &self.frame_config())
        })
    }

    pub fn run(&self, id: SchemeId) -> Result<SchemeOutput> {
        let cfg = self.frame_config();
        if id.single_tone() {
            let source = if id.enhanced() { self.enhanced()?.component(2).expect("2nd harmonic is always enhanced") } else { &self.signal };
            let estimate = normalize_to_2nd(&track_if(source, 2, &cfg, SEARCH_BAND_HZ)?)?;
            return Ok(SchemeOutput { scheme: id, estimate, omega: vec![2], eta: None, selection: None, weights: None });
        }
        let source = if id.enhanced() { &self.enhanced()?.sum } else { &self.signal };
        let (omega, eta, selection) = if id.selected() {
            let sel = if id.enhanced() { self.selection_enhanced()? } else { self.selection_raw()? };
            (sel.omega.clone(), Some(self.eta()?), Some(sel.clone()))
        } else {
            (harmonic_set(&self.params.harmonics)?, None, None)
        };
        let (estimate, weights) = if id.weighted() {
            let w = estimate_weights(source, &omega, &cfg)?;
            (wmle(source, &omega, &cfg, &w)?, Some(w))
        } else {
            (mle(source, &omega, &cfg)?, None)
        };
        Ok(SchemeOutput { scheme: id, estimate, omega, eta, selection, weights })
    }
}

/// Preprocess `raw` and run a single scheme.
pub fn run_scheme(id: SchemeId, raw: &SampleBuffer, params: &PipelineParams) -> Result<SchemeOutput> {
    SchemeRunner::from_raw(raw, params.clone())?.run(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{add_wgn_at_snr, synth_enf_ar1, synth_multitone, HarmonicModelSpec};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const FS: f64 = 800.0;

    fn cfg() -> FrameConfig {
        FrameConfig::for_sample_rate(FS)
    }

    fn constant_tone(harmonics: &[u32], f: f64, seconds: usize) -> SampleBuffer {
        let spec = HarmonicModelSpec::equal_amplitude(harmonics, 1.0, vec![f; seconds * 800]);
        synth_multitone(&spec, FS).unwrap()
    }

    #[test]
    fn scheme_ids_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.to_string().parse::<SchemeId>().unwrap(), id);
        }
        assert_eq!("P-MLE".parse::<SchemeId>().unwrap(), SchemeId::PMle);
        assert!("nope".parse::<SchemeId>().is_err());
        let triples: std::collections::BTreeSet<_> =
            SchemeId::ALL.iter().map(|i| (i.enhanced(), i.selected(), i.weighted(), i.single_tone())).collect();
        assert_eq!(triples.len(), 10);
    }

    #[test]
    fn noiseless_mle_hits_the_tone() {
        let x = constant_tone(&DEFAULT_HARMONICS, 50.05, 20);
        let est = mle(&x, &DEFAULT_HARMONICS, &cfg()).unwrap();
        assert!(est.values_hz.iter().all(|v| (v - 100.1).abs() <= 1.0 / 4000.0), "{:?}", est.values_hz);
        assert!(mle(&x, &[], &cfg()).is_err());
    }

    #[test]
    fn noise_only_stays_in_band() {
        let silent = SampleBuffer::new(vec![0.0; 20 * 800], FS).unwrap();
        let x = add_wgn_at_snr(&constant_tone(&[2], 50.0, 20), 0.0, 1).unwrap();
        let noise = SampleBuffer::new(
            x.samples().iter().zip(constant_tone(&[2], 50.0, 20).samples()).map(|(a, b)| a - b).collect(),
            FS,
        )
        .unwrap();
        for s in [&silent, &noise] {
            let est = mle(s, &DEFAULT_HARMONICS, &cfg()).unwrap();
            assert!(est.values_hz.iter().all(|v| (99.8..=100.2).contains(v)));
        }
    }

    #[test]
    fn single_harmonic_mle_equals_peak_tracking() {
        let f = synth_enf_ar1(30 * 800, 5, 0.99, 4.5e-4, 50.0).unwrap();
        let spec = HarmonicModelSpec::equal_amplitude(&DEFAULT_HARMONICS, 1.0, f);
        let x = add_wgn_at_snr(&synth_multitone(&spec, FS).unwrap(), -5.0, 3).unwrap();
        for m in [2, 3, 7] {
            let a = mle(&x, &[m], &cfg()).unwrap();
            let b = normalize_to_2nd(&track_if(&x, m, &cfg(), SEARCH_BAND_HZ).unwrap()).unwrap();
            for (u, v) in a.values_hz.iter().zip(&b.values_hz) {
                assert!((u - v).abs() < 1e-9, "m={m}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn weights_behave() {
        let tone = constant_tone(&[2], 50.0, 20);
        let w = estimate_weights(&tone, &[2, 3], &cfg()).unwrap();
        let (w2, w3) = (w.row(2).unwrap(), w.row(3).unwrap());
        assert!(w2.iter().zip(w3).all(|(a, b)| *a > 100.0 * b));

        let zero = SampleBuffer::new(vec![0.0; 20 * 800], FS).unwrap();
        let w = estimate_weights(&zero, &[2, 5], &cfg()).unwrap();
        assert!(w.weights.iter().flatten().all(|v| *v == 0.0));

        // white noise: ratio of band widths 0.04 / 1.96
        let noise = add_wgn_at_snr(&constant_tone(&[2], 50.0, 200), 0.0, 4).unwrap();
        let pure: Vec<f64> = noise.samples().iter().zip(constant_tone(&[2], 50.0, 200).samples()).map(|(a, b)| a - b).collect();
        let w = estimate_weights(&SampleBuffer::new(pure, FS).unwrap(), &[3, 5], &cfg()).unwrap();
        let mean = w.weights.iter().flatten().sum::<f64>() / w.weights.iter().flatten().count() as f64;
        assert!((mean / (0.04 / 1.96) - 1.0).abs() < 0.3, "mean weight {mean}");
    }

    #[test]
    fn degenerate_weights_reduce_to_single_harmonic() {
        let f = synth_enf_ar1(20 * 800, 8, 0.99, 4.5e-4, 50.0).unwrap();
        let spec = HarmonicModelSpec::equal_amplitude(&DEFAULT_HARMONICS, 1.0, f);
        let x = add_wgn_at_snr(&synth_multitone(&spec, FS).unwrap(), -10.0, 6).unwrap();
        let n = num_frames(x.len(), &cfg());
        let mut w = WeightMatrix { harmonics: DEFAULT_HARMONICS.to_vec(), weights: vec![vec![0.0; n]; 6] };
        w.weights[5] = vec![1.0; n];
        let a = wmle(&x, &DEFAULT_HARMONICS, &cfg(), &w).unwrap();
        // the grid step res/7 makes the 7th-harmonic terms exact bins
        let b = mle(&x, &[7], &cfg()).unwrap();
        assert_eq!(a.values_hz, b.values_hz);
        let eq = WeightMatrix { harmonics: DEFAULT_HARMONICS.to_vec(), weights: vec![vec![0.3; n]; 6] };
        assert_eq!(wmle(&x, &DEFAULT_HARMONICS, &cfg(), &eq).unwrap().values_hz, mle(&x, &DEFAULT_HARMONICS, &cfg()).unwrap().values_hz);
    }

    #[test]
    fn preprocessing_rates() {
        let raw = SampleBuffer::new((0..8000 * 20).map(|i| (TAU * 100.0 * i as f64 / 8000.0).cos()).collect(), 8000.0).unwrap();
        let x = preprocess_recording(&raw, &PipelineParams::default()).unwrap();
        assert_eq!(x.sample_rate_hz(), 800.0);
        assert_eq!(x.len(), 16_000);
        assert!(preprocess_recording(&SampleBuffer::new(vec![0.0; 1000], 500.0).unwrap(), &PipelineParams::default()).is_err());
    }

    #[test]
    fn runner_shares_intermediates_and_single_matches_mle() {
        let f = synth_enf_ar1(30 * 800, 9, 0.99, 4.5e-4, 50.0).unwrap();
        let spec = HarmonicModelSpec::equal_amplitude(&DEFAULT_HARMONICS, 1.0, f);
        let x = add_wgn_at_snr(&synth_multitone(&spec, FS).unwrap(), -10.0, 2).unwrap();
        let params = PipelineParams {
            n_rep: 200,
            enhancer: EnhancerConfig { tau: 300, ..Default::default() },
            seed: 4,
            ..Default::default()
        };
        let runner = SchemeRunner::from_raw(&x, params.clone()).unwrap();
        let single = runner.run(SchemeId::Single).unwrap();
        let m2 = mle(runner.signal(), &[2], &runner.frame_config()).unwrap();
        for (a, b) in single.estimate.values_hz.iter().zip(&m2.values_hz) {
            assert!((a - b).abs() < 1e-9);
        }
        let es = runner.run(SchemeId::ESingle).unwrap();
        let c2 = runner.enhanced().unwrap().component(2).unwrap();
        assert_eq!(es.estimate, normalize_to_2nd(&track_if(c2, 2, &runner.frame_config(), SEARCH_BAND_HZ).unwrap()).unwrap());
        for id in SchemeId::ALL {
            let out = runner.run(id).unwrap();
            assert_eq!(out.estimate.len(), runner.n_frames());
            assert!(out.estimate.values_hz.iter().all(|v| (99.8 - 1e-9..=100.2 + 1e-9).contains(v)));
            assert!(!out.omega.is_empty());
            assert_eq!(out.selection.is_some(), id.selected());
        }
        // a second runner reproduces everything bit for bit
        let again = SchemeRunner::from_raw(&x, params).unwrap();
        assert_eq!(again.run(SchemeId::PWmle).unwrap(), runner.run(SchemeId::PWmle).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn wmle_argmax_is_scale_invariant(seed in 0u64..1000, scale in 1e-6f64..1e6) {
            let f = synth_enf_ar1(20 * 800, seed, 0.99, 4.5e-4, 50.0).unwrap();
            let spec = HarmonicModelSpec::equal_amplitude(&[2, 3, 4], 1.0, f);
            let x = add_wgn_at_snr(&synth_multitone(&spec, FS).unwrap(), -15.0, seed).unwrap();
            let w = estimate_weights(&x, &[2, 3, 4], &cfg()).unwrap();
            // powers of two scale exactly; others are compared within one bin
            let a = wmle(&x, &[2, 3, 4], &cfg(), &w).unwrap();
            let b = wmle(&x, &[2, 3, 4], &cfg(), &w.scaled(scale.log2().round().exp2())).unwrap();
            prop_assert_eq!(&a.values_hz, &b.values_hz);
            let c = wmle(&x, &[2, 3, 4], &cfg(), &w.scaled(scale)).unwrap();
            for (u, v) in a.values_hz.iter().zip(&c.values_hz) {
                prop_assert!((u - v).abs() <= 2.0 / 4000.0 / 4.0 + 1e-12);
            }
        }
    }
}
