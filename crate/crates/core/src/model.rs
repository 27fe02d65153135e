//! Signal containers, synthetic ENF generation and frame geometry.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{derive_seed, rng_from_seed, STREAM_CORRUPTION};

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return invalid(format!("sample rate must be positive, got {sample_rate_hz}"));
        }
        if samples.is_empty() {
            return invalid("sample buffer must hold at least one sample");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return invalid(format!("sample {i} is not finite"));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Same sample rate, new samples. Samples are not re-validated.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { samples, sample_rate_hz: self.sample_rate_hz }
    }
}

/// Frame geometry for frame-based IF estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Frame length in samples.
    pub frame_len: usize,
    /// Hop between consecutive frame starts, in samples.
    pub step: usize,
    /// Spacing of the zero-padded periodogram grid in Hz.
    pub fft_resolution_hz: f64,
}

impl FrameConfig {
    pub fn new(frame_len: usize, step: usize, fft_resolution_hz: f64) -> Result<Self> {
        let cfg = Self { frame_len, step, fft_resolution_hz };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 16 s frames with a 1 s hop and a 1/4000 Hz grid.
    pub fn for_sample_rate(sample_rate_hz: f64) -> Self {
        let fs = sample_rate_hz.round() as usize;
        Self { frame_len: 16 * fs, step: fs, fft_resolution_hz: 1.0 / 4000.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step == 0 || self.frame_len == 0 {
            return invalid("frame length and step must be positive");
        }
        if self.frame_len < self.step {
            return invalid(format!(
                "frame length {} shorter than step {}",
                self.frame_len, self.step
            ));
        }
        if !(self.fft_resolution_hz > 0.0 && self.fft_resolution_hz.is_finite()) {
            return invalid("FFT resolution must be positive");
        }
        Ok(())
    }

    /// Length of the zero-padded transform, `f_S / resolution`, which has to
    /// be an integer no shorter than the frame.
    pub fn transform_len(&self, sample_rate_hz: f64) -> Result<usize> {
        let ratio = sample_rate_hz / self.fft_resolution_hz;
        let len = ratio.round();
        if (ratio - len).abs() > 1e-6 * ratio.max(1.0) {
            return invalid(format!(
                "resolution {} Hz does not divide sample rate {} Hz",
                self.fft_resolution_hz, sample_rate_hz
            ));
        }
        let len = len as usize;
        if len < self.frame_len {
            return invalid(format!(
                "transform length {len} shorter than frame length {}",
                self.frame_len
            ));
        }
        Ok(len)
    }

    /// Signal length after tail zero-padding: the smallest length that is at
    /// least one frame and leaves `(N - N_F)` divisible by the step.
    pub fn padded_len(&self, n_samples: usize) -> usize {
        let n = n_samples.max(self.frame_len);
        let rem = (n - self.frame_len) % self.step;
        if rem == 0 {
            n
        } else {
            n + self.step - rem
        }
    }

    pub fn frame_start(&self, l: usize) -> usize {
        l * self.step
    }

    /// Frame centre in (fractional) samples.
    pub fn frame_center(&self, l: usize) -> f64 {
        (l * self.step) as f64 + self.frame_len as f64 / 2.0
    }
}

/// Number of frames `N_ENF = (N - N_F) / Δ + 1` on the padded length.
pub fn num_frames(n_samples: usize, cfg: &FrameConfig) -> usize {
    (cfg.padded_len(n_samples) - cfg.frame_len) / cfg.step + 1
}

/// Which harmonic band an IF track lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HarmonicTag {
    /// Raw track of harmonic `m`, values near `m * 50` Hz.
    Harmonic(u32),
    /// Rescaled to the 2nd-harmonic band, values near 100 Hz.
    Normalized,
}

/// Per-frame instantaneous frequency estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfSeries {
    pub values_hz: Vec<f64>,
    pub harmonic: HarmonicTag,
    pub frame_config: FrameConfig,
}

impl IfSeries {
    pub fn new(values_hz: Vec<f64>, harmonic: HarmonicTag, frame_config: FrameConfig) -> Self {
        Self { values_hz, harmonic, frame_config }
    }

    pub fn len(&self) -> usize {
        self.values_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_hz.is_empty()
    }
}

/// Amplitude trajectory of one harmonic.
#[derive(Debug, Clone, PartialEq)]
pub enum Amplitude {
    Constant(f64),
    PerSample(Vec<f64>),
}

impl Amplitude {
    fn at(&self, n: usize) -> f64 {
        match self {
            Amplitude::Constant(a) => *a,
            Amplitude::PerSample(v) => v[n],
        }
    }
}

/// Additive band-limited white noise on one harmonic component.
///
/// The band is given at fundamental scale and multiplied by the harmonic
/// index; the noise energy is set relative to the energy of the clean
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct BandNoise {
    pub harmonic: u32,
    pub snr_db: f64,
    pub seed: u64,
    pub band_hz: (f64, f64),
}

/// Multi-tone harmonic ENF model.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicModelSpec {
    pub harmonic_indices: Vec<u32>,
    pub amplitudes: Vec<Amplitude>,
    pub phases: Vec<f64>,
    /// Per-sample fundamental IF in Hz.
    pub fundamental_if_hz: Vec<f64>,
    pub perturbations: Vec<BandNoise>,
}

impl HarmonicModelSpec {
    /// All harmonics at the same constant amplitude and zero phase.
    pub fn equal_amplitude(harmonics: &[u32], amplitude: f64, fundamental_if_hz: Vec<f64>) -> Self {
        Self {
            harmonic_indices: harmonics.to_vec(),
            amplitudes: vec![Amplitude::Constant(amplitude); harmonics.len()],
            phases: vec![0.0; harmonics.len()],
            fundamental_if_hz,
            perturbations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.fundamental_if_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fundamental_if_hz.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.harmonic_indices.len();
        if k == 0 {
            return invalid("harmonic set is empty");
        }
        if self.amplitudes.len() != k || self.phases.len() != k {
            return invalid("one amplitude and one phase per harmonic required");
        }
        let mut sorted = self.harmonic_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k || sorted[0] == 0 {
            return invalid("harmonic indices must be distinct positive integers");
        }
        let n = self.fundamental_if_hz.len();
        if n == 0 {
            return invalid("fundamental IF sequence is empty");
        }
        if self.fundamental_if_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return invalid("fundamental IF must be finite and positive");
        }
        for a in &self.amplitudes {
            let ok = match a {
                Amplitude::Constant(a) => a.is_finite() && *a >= 0.0,
                Amplitude::PerSample(v) => v.len() == n && v.iter().all(|a| a.is_finite() && *a >= 0.0),
            };
            if !ok {
                return invalid("amplitudes must be finite, non-negative and one per sample");
            }
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return invalid("phases must be finite");
        }
        for p in &self.perturbations {
            if !self.harmonic_indices.contains(&p.harmonic) {
                return invalid(format!("perturbed harmonic {} not in the model", p.harmonic));
            }
        }
        Ok(())
    }
}

/// Zero-mean AR(1) path `f[n] = a f[n-1] + e[n]` with unit Gaussian
/// innovations, rescaled to the target (population) variance and then
/// shifted to `mean_hz`.
pub fn synth_enf_ar1(
    n_samples: usize,
    seed: u64,
    ar_coef: f64,
    target_variance: f64,
    mean_hz: f64,
) -> Result<Vec<f64>> {
    if n_samples < 2 {
        return invalid("AR(1) path needs at least two samples");
    }
    if !(ar_coef > 0.0 && ar_coef < 1.0) {
        return invalid(format!("AR coefficient must lie in (0, 1), got {ar_coef}"));
    }
    if !(target_variance > 0.0 && target_variance.is_finite()) {
        return invalid(format!("target variance must be positive, got {target_variance}"));
    }
    if !mean_hz.is_finite() {
        return invalid("mean must be finite");
    }
    let mut rng = rng_from_seed(seed);
    let mut path = Vec::with_capacity(n_samples);
    // Start in the stationary distribution so there is no warm-up transient.
    let mut prev: f64 = StandardNormal.sample(&mut rng);
    prev /= (1.0 - ar_coef * ar_coef).sqrt();
    path.push(prev);
    for _ in 1..n_samples {
        let e: f64 = StandardNormal.sample(&mut rng);
        prev = ar_coef * prev + e;
        path.push(prev);
    }
    let n = n_samples as f64;
    let mean = path.iter().sum::<f64>() / n;
    let var = path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { (target_variance / var).sqrt() } else { 0.0 };
    Ok(path.into_iter().map(|v| (v - mean) * scale + mean_hz).collect())
}

/// Synthesise the harmonic model, including any band-noise perturbations.
///
/// The phase of harmonic `m` at sample `n` is `2πT·m·Σ_{i<n} f[i] + φ_m`,
/// accumulated in cycles and reduced modulo one so long recordings keep full
/// precision.
pub fn synth_multitone(spec: &HarmonicModelSpec, sample_rate_hz: f64) -> Result<SampleBuffer> {
    spec.validate()?;
    let max_m = *spec.harmonic_indices.iter().max().expect("validated non-empty");
    if sample_rate_hz <= 2.0 * max_m as f64 * crate::LOOSE_BAND_HZ.1 {
        return invalid(format!(
            "sample rate {sample_rate_hz} Hz below Nyquist for harmonic {max_m}"
        ));
    }
    let n = spec.len();
    let t = 1.0 / sample_rate_hz;
    // Fundamental phase in cycles, wrapped to [0, 1) after each step.
    let mut cycles = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for &f in &spec.fundamental_if_hz {
        cycles.push(acc);
        acc = (acc + f * t).fract();
    }

    let mut out = vec![0.0; n];
    for (k, &m) in spec.harmonic_indices.iter().enumerate() {
        let component = harmonic_component(&cycles, m, &spec.amplitudes[k], spec.phases[k]);
        let mut component = component;
        for p in spec.perturbations.iter().filter(|p| p.harmonic == m) {
            let noise = band_noise(&component, sample_rate_hz, m, p)?;
            for (c, v) in component.iter_mut().zip(noise) {
                *c += v;
            }
        }
        for (o, c) in out.iter_mut().zip(component) {
            *o += c;
        }
    }
    SampleBuffer::new(out, sample_rate_hz)
}

fn harmonic_component(cycles: &[f64], m: u32, amp: &Amplitude, phase: f64) -> Vec<f64> {
    let two_pi = std::f64::consts::TAU;
    cycles
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let frac = (c * m as f64).fract();
            amp.at(n) * (two_pi * frac + phase).cos()
        })
        .collect()
}

/// White Gaussian noise restricted to `m × band` by zeroing DFT bins, scaled
/// so that `Σ component² / Σ noise² = 10^(snr/10)`.
fn band_noise(component: &[f64], fs: f64, m: u32, p: &BandNoise) -> Result<Vec<f64>> {
    let n = component.len();
    let (lo, hi) = (p.band_hz.0 * m as f64, p.band_hz.1 * m as f64);
    if !(lo < hi && lo >= 0.0 && hi <= fs / 2.0) {
        return invalid(format!("perturbation band [{lo}, {hi}] Hz is invalid"));
    }
    let mut rng = rng_from_seed(p.seed);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        // Frequency of bin k folded to [0, fs/2].
        let kk = k.min(n - k);
        let f = kk as f64 * fs / n as f64;
        if f < lo || f > hi {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let noise: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let e_noise: f64 = noise.iter().map(|v| v * v).sum();
    let e_sig: f64 = component.iter().map(|v| v * v).sum();
    if e_noise == 0.0 {
        return invalid("perturbation band contains no DFT bins");
    }
    let scale = (e_sig / (db_to_linear(p.snr_db) * e_noise)).sqrt();
    Ok(noise.into_iter().map(|v| v * scale).collect())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Add white Gaussian noise scaled so that `Σ s² / Σ v² = 10^(snr_db/10)`.
/// `f64::INFINITY` returns the input unchanged.
pub fn add_wgn_at_snr(clean: &SampleBuffer, snr_db: f64, seed: u64) -> Result<SampleBuffer> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    if !snr_db.is_finite() {
        return invalid(format!("SNR {snr_db} dB is not usable"));
    }
    let e_sig = clean.energy();
    if e_sig <= 0.0 {
        return invalid("clean signal has zero energy");
    }
    let mut rng = rng_from_seed(seed);
    let noise: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let e_noise: f64 = noise.iter().map(|v| v * v).sum();
    let scale = (e_sig / (db_to_linear(snr_db) * e_noise)).sqrt();
    let samples = clean
        .samples()
        .iter()
        .zip(noise)
        .map(|(s, v)| s + scale * v)
        .collect();
    Ok(clean.with_samples(samples))
}

/// Measured SNR in dB of `noisy` against its clean part.
pub fn measure_snr_db(clean: &[f64], noisy: &[f64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(crate::EnfError::LengthMismatch { expected: clean.len(), actual: noisy.len() });
    }
    let e_sig: f64 = clean.iter().map(|s| s * s).sum();
    let e_noise: f64 = clean.iter().zip(noisy).map(|(s, x)| (x - s) * (x - s)).sum();
    Ok(10.0 * (e_sig / e_noise).log10())
}

/// Return a copy of `spec` with band-limited noise added to each harmonic in
/// `corrupt_set`. The noise occupies the tight search band of the harmonic and
/// its energy is `corruption_snr_db` below the clean component.
pub fn corrupt_harmonics(
    spec: &HarmonicModelSpec,
    corrupt_set: &[u32],
    corruption_snr_db: f64,
    seed: u64,
) -> Result<HarmonicModelSpec> {
    if let Some(m) = corrupt_set.iter().find(|m| !spec.harmonic_indices.contains(m)) {
        return invalid(format!("harmonic {m} is not part of the model"));
    }
    if !corruption_snr_db.is_finite() {
        return invalid("corruption SNR must be finite");
    }
    let mut out = spec.clone();
    for &m in corrupt_set {
        out.perturbations.push(BandNoise {
            harmonic: m,
            snr_db: corruption_snr_db,
            seed: derive_seed(seed, STREAM_CORRUPTION + m as u64),
            band_hz: crate::SEARCH_BAND_HZ,
        });
    }
    Ok(out)
}

/// Ground-truth track at frame resolution: the mean fundamental IF over each
/// frame, scaled to the 2nd-harmonic band. Padded tail samples are ignored.
pub fn frame_truth(fundamental_if_hz: &[f64], cfg: &FrameConfig) -> IfSeries {
    let n = fundamental_if_hz.len();
    let frames = num_frames(n, cfg);
    let values = (0..frames)
        .map(|l| {
            let start = cfg.frame_start(l).min(n);
            let end = (start + cfg.frame_len).min(n);
            let slice = &fundamental_if_hz[start..end];
            if slice.is_empty() {
                2.0 * fundamental_if_hz[n - 1]
            } else {
                2.0 * slice.iter().sum::<f64>() / slice.len() as f64
            }
        })
        .collect();
    IfSeries::new(values, HarmonicTag::Normalized, *cfg)
}
