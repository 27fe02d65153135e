//! Harmonic robust filtering (HRFA).
//!
//! The noisy signal is encoded as the instantaneous frequency of a
//! unit-modulus SFM carrier `z[n] = exp(jΦ[n])`. For each harmonic `m` the
//! phases of the instantaneous autocorrelation `z[n+i]·z*[n−i]` at lag `i`
//! and at a quarter-period offset lag are combined with weights
//! `θ sin 2θ` / `θ cos 2θ` (`θ = πT·m·f[n]·i`); averaging over
//! `i = 0..=τ` cancels the carrier and leaves a scaled copy of the component
//! at `m·f[n]`, while broadband noise averages out.
//!
//! Because `Φ` is known, `Arg(z[a]·z*[b])` is computed as the wrapped phase
//! difference `Φ[a] − Φ[b]`, which avoids `atan2` and vectorises. The
//! complex-valued [`kernel_phase`] is kept as the reference definition.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{FrameConfig, SampleBuffer};
use crate::spectral::{interpolate_if, track_if};
use crate::{LOOSE_BAND_HZ, NOMINAL_HZ, SEARCH_BAND_HZ};

/// Which frequency sets the quarter-period offset of the second kernel lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarterLag {
    /// `round(f_S / (4·m·f[n]))`: quarter period of the enhanced harmonic.
    #[default]
    Component,
    /// `round(f_S / (4·f[n]))`: quarter period of the fundamental.
    Fundamental,
}

/// How the kernel treats lags that would reach past either end of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Use only lags whose indices stay inside the signal and rescale the
    /// sum to the shortened window.
    #[default]
    Truncate,
    /// Clamp out-of-range indices to the first/last sample.
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancerConfig {
    /// Spectral placement gain; `None` means `f_S / (4·max|x|)`.
    pub alpha: Option<f64>,
    pub tau: usize,
    pub iterations: usize,
    /// Initial per-sample fundamental probe; `None` means a constant 50 Hz.
    pub probe_if_hz: Option<Vec<f64>>,
    pub quarter_lag: QuarterLag,
    pub edge: EdgeMode,
    /// Framing for the per-iteration probe refresh; `None` derives the
    /// default from the sample rate.
    pub frame: Option<FrameConfig>,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            tau: 3000,
            iterations: 2,
            probe_if_hz: None,
            quarter_lag: QuarterLag::Component,
            edge: EdgeMode::Truncate,
            frame: None,
        }
    }
}

impl EnhancerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return invalid("tau must be at least 1");
        }
        if self.iterations < 1 {
            return invalid("iterations must be at least 1");
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return invalid(format!("alpha must be positive, got {a}"));
            }
        }
        if let Some(p) = &self.probe_if_hz {
            let (lo, hi) = LOOSE_BAND_HZ;
            if let Some(bad) = p.iter().find(|v| !(lo..=hi).contains(*v)) {
                return invalid(format!("probe value {bad} Hz outside [{lo}, {hi}] Hz"));
            }
        }
        if let Some(f) = &self.frame {
            f.validate()?;
        }
        Ok(())
    }

    fn frame_for(&self, sample_rate_hz: f64) -> FrameConfig {
        self.frame.unwrap_or_else(|| FrameConfig::for_sample_rate(sample_rate_hz))
    }
}

/// Per-harmonic enhanced components and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedSignal {
    pub components: BTreeMap<u32, SampleBuffer>,
    pub sum: SampleBuffer,
    /// Final fundamental probe of the 2nd-harmonic bootstrap.
    pub probe_if_hz: Vec<f64>,
}

impl EnhancedSignal {
    pub fn component(&self, m: u32) -> Option<&SampleBuffer> {
        self.components.get(&m)
    }
}

/// SFM carrier kept in phase form: `z[n] = exp(jΦ[n])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmCarrier {
    phase: Vec<f64>,
    alpha: f64,
    sample_rate_hz: f64,
}

impl SfmCarrier {
    /// Trapezoidal phase `Φ[n] = 2πTα(Σ_{i≤n} x[i] − x[n]/2)`, which makes
    /// `Φ[n+i] − Φ[n−i]` an integral centred on `n`.
    pub fn encode(x: &SampleBuffer, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {alpha}"));
        }
        let k = TAU * alpha / x.sample_rate_hz();
        let mut acc = 0.0;
        let phase = x
            .samples()
            .iter()
            .map(|&v| {
                acc += v;
                k * (acc - 0.5 * v)
            })
            .collect();
        Ok(Self { phase, alpha, sample_rate_hz: x.sample_rate_hz() })
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.phase.iter().map(|p| Complex64::from_polar(1.0, *p)).collect()
    }
}

/// `z[n] = exp(j·2πTα·Σ_{i=0..n} x[i])`.
pub fn sfm_encode(x: &SampleBuffer, alpha: f64) -> Result<Vec<Complex64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    let k = TAU * alpha / x.sample_rate_hz();
    let mut acc = 0.0;
    Ok(x.samples()
        .iter()
        .map(|&v| {
            acc += v;
            Complex64::from_polar(1.0, k * acc)
        })
        .collect())
}

/// Default `α = f_S / (4·max|x|)`; 1 for an all-zero input.
pub fn default_alpha(x: &SampleBuffer) -> f64 {
    let peak = x.max_abs();
    if peak > 0.0 {
        x.sample_rate_hz() / (4.0 * peak)
    } else {
        1.0
    }
}

fn quarter_lag(sample_rate_hz: f64, m: u32, probe_hz: f64, mode: QuarterLag) -> usize {
    let f = match mode {
        QuarterLag::Component => m as f64 * probe_hz,
        QuarterLag::Fundamental => probe_hz,
    };
    (sample_rate_hz / (4.0 * f)).round() as usize
}

fn instantaneous_autocorr(z: &[Complex64], n: usize, lag: usize) -> Complex64 {
    let last = z.len() - 1;
    let a = (n + lag).min(last);
    let b = n.saturating_sub(lag);
    z[a] * z[b].conj()
}

/// Phase of the component-dependent kernel at sample `n` and lag `lag`
/// (reference implementation on the complex carrier).
pub fn kernel_phase(
    z: &[Complex64],
    n: usize,
    lag: usize,
    m: u32,
    probe_hz: f64,
    sample_rate_hz: f64,
    mode: QuarterLag,
) -> f64 {
    let theta = PI * m as f64 * probe_hz * lag as f64 / sample_rate_hz;
    if theta == 0.0 {
        return 0.0;
    }
    let lag2 = lag + quarter_lag(sample_rate_hz, m, probe_hz, mode);
    let d1 = instantaneous_autocorr(z, n, lag).arg();
    let d2 = instantaneous_autocorr(z, n, lag2).arg();
    let two = 2.0 * theta;
    theta * two.sin() * d1 + theta * two.cos() * d2
}

const LANES: usize = 32;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5·2^52

/// Wraps a phase measured in turns into `[−½, ½]`.
#[inline(always)]
fn wrap_turns(x: f64) -> f64 {
    x - ((x + ROUND_MAGIC) - ROUND_MAGIC)
}

/// Kernel sums for `LANES` consecutive outputs sharing one quarter lag, in
/// units of `ω/2` turns. `phi` holds the edge-padded phase in turns and
/// `base` indexes lane 0 inside it.
#[inline(always)]
fn block_sums(phi: &[f64], base: usize, tau: usize, d: usize, omega: &[f64; LANES]) -> [f64; LANES] {
    let mut acc = [0.0; LANES];
    let mut c = [1.0; LANES];
    let mut s = [0.0; LANES];
    let mut rc = [0.0; LANES];
    let mut rs = [0.0; LANES];
    for k in 0..LANES {
        rc[k] = omega[k].cos();
        rs[k] = omega[k].sin();
    }
    for i in 1..=tau {
        let ap: &[f64; LANES] = phi[base + i..base + i + LANES].try_into().unwrap();
        let am: &[f64; LANES] = phi[base - i..base - i + LANES].try_into().unwrap();
        let bp: &[f64; LANES] = phi[base + i + d..base + i + d + LANES].try_into().unwrap();
        let bm: &[f64; LANES] = phi[base - i - d..base - i - d + LANES].try_into().unwrap();
        let fi = i as f64;
        for k in 0..LANES {
            // advance (cos ωi, sin ωi)
            let cn = c[k] * rc[k] - s[k] * rs[k];
            s[k] = s[k] * rc[k] + c[k] * rs[k];
            c[k] = cn;
            let da = wrap_turns(ap[k] - am[k]);
            let db = wrap_turns(bp[k] - bm[k]);
            acc[k] += fi * (s[k] * da + c[k] * db);
        }
    }
    acc
}

#[inline(always)]
fn lane_sum(phi: &[f64], pos: usize, tau: usize, d: usize, omega: f64) -> f64 {
    let (rc, rs) = (omega.cos(), omega.sin());
    let (mut c, mut s, mut acc) = (1.0, 0.0, 0.0);
    for i in 1..=tau {
        let cn = c * rc - s * rs;
        s = s * rc + c * rs;
        c = cn;
        let da = wrap_turns(phi[pos + i] - phi[pos - i]);
        let db = wrap_turns(phi[pos + i + d] - phi[pos - i - d]);
        acc += i as f64 * (s * da + c * db);
    }
    acc
}

struct KernelJob<'a> {
    phi: &'a [f64],
    pad: usize,
    tau: usize,
    omega: &'a [f64],
    lag: &'a [usize],
}

#[inline(always)]
fn process_chunk_body(job: &KernelJob<'_>, start: usize, out: &mut [f64]) {
    let n_total = job.omega.len();
    for (b, dst) in out.chunks_mut(LANES).enumerate() {
        let n0 = start + b * LANES;
        let live = dst.len();
        let d0 = job.lag[n0];
        let uniform = job.lag[n0..n0 + live].iter().all(|&d| d == d0);
        if uniform {
            let mut om = [0.0; LANES];
            for k in 0..LANES {
                om[k] = job.omega[(n0 + k).min(n_total - 1)];
            }
            let sums = block_sums(job.phi, job.pad + n0, job.tau, d0, &om);
            dst.copy_from_slice(&sums[..live]);
        } else {
            for (k, v) in dst.iter_mut().enumerate() {
                let n = n0 + k;
                *v = lane_sum(job.phi, job.pad + n, job.tau, job.lag[n], job.omega[n]);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq,avx512vl,avx2,fma")]
unsafe fn process_chunk_avx512(job: &KernelJob<'_>, start: usize, out: &mut [f64]) {
    process_chunk_body(job, start, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn process_chunk_avx2(job: &KernelJob<'_>, start: usize, out: &mut [f64]) {
    process_chunk_body(job, start, out)
}

fn process_chunk(job: &KernelJob<'_>, start: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512f")
        && std::arch::is_x86_feature_detected!("avx512dq")
        && std::arch::is_x86_feature_detected!("avx512vl")
    {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { process_chunk_avx512(job, start, out) };
    }
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { process_chunk_avx2(job, start, out) };
    }
    process_chunk_body(job, start, out)
}

/// `Σ_{i=0..τ} Θ{K[n,i,m]}` for every `n`.
fn kernel_sums(
    carrier: &SfmCarrier,
    m: u32,
    probe_hz: &[f64],
    tau: usize,
    mode: QuarterLag,
    edge: EdgeMode,
) -> Vec<f64> {
    let n = carrier.len();
    let fs = carrier.sample_rate_hz;
    let omega: Vec<f64> = probe_hz.iter().map(|f| TAU * m as f64 * f / fs).collect();
    let lag: Vec<usize> = probe_hz.iter().map(|f| quarter_lag(fs, m, *f, mode)).collect();
    let d_max = lag.iter().copied().max().unwrap_or(0);
    let pad = tau + d_max + 1;

    let turns: Vec<f64> = carrier.phase().iter().map(|p| p * (1.0 / TAU)).collect();
    let mut phi = Vec::with_capacity(n + 2 * pad + LANES);
    phi.resize(pad, turns[0]);
    phi.extend_from_slice(&turns);
    phi.resize(n + 2 * pad + LANES, turns[n - 1]);

    let job = KernelJob { phi: &phi, pad, tau, omega: &omega, lag: &lag };
    let mut out = vec![0.0; n];
    const CHUNK: usize = LANES * 256;
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, dst)| process_chunk(&job, c * CHUNK, dst));
    if edge == EdgeMode::Truncate {
        let full = (tau * (tau + 1)) as f64;
        let mut fix = |i: usize| {
            let d = lag[i];
            let span = tau.min(i.saturating_sub(d)).min((n - 1 - i).saturating_sub(d));
            out[i] = if span == 0 {
                0.0
            } else {
                lane_sum(&phi, pad + i, span, d, omega[i]) * full / (span * (span + 1)) as f64
            };
        };
        let reach = (tau + d_max).min(n);
        for i in 0..reach {
            fix(i);
        }
        for i in n.saturating_sub(reach).max(reach)..n {
            fix(i);
        }
    }
    // back to radians, times the per-sample weight ω/2
    for (v, w) in out.iter_mut().zip(&omega) {
        *v *= TAU * 0.5 * w;
    }
    out
}

fn check_harmonic(m: u32, sample_rate_hz: f64) -> Result<()> {
    if m == 0 {
        return invalid("harmonic index must be positive");
    }
    if m >= 26 {
        return invalid(format!("harmonic {m}: bands of the 26th and higher harmonics may overlap"));
    }
    if m as f64 * LOOSE_BAND_HZ.1 >= sample_rate_hz / 2.0 {
        return invalid(format!(
            "harmonic {m} band exceeds the Nyquist frequency {} Hz",
            sample_rate_hz / 2.0
        ));
    }
    Ok(())
}

/// Enhanced harmonic-`m` component for a fixed per-sample probe.
pub fn enhance_once(carrier: &SfmCarrier, m: u32, probe_hz: &[f64], cfg: &EnhancerConfig) -> Result<Vec<f64>> {
    check_harmonic(m, carrier.sample_rate_hz)?;
    if probe_hz.len() != carrier.len() {
        return Err(crate::EnfError::LengthMismatch { expected: carrier.len(), actual: probe_hz.len() });
    }
    if carrier.is_empty() {
        return Ok(Vec::new());
    }
    let tau = cfg.tau as f64;
    let scale = carrier.sample_rate_hz / ((tau + 1.0) * tau * PI * carrier.alpha);
    let mut out = kernel_sums(carrier, m, probe_hz, cfg.tau, cfg.quarter_lag, cfg.edge);
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

/// Iterated single-harmonic enhancement (the RFA generalised to harmonic
/// `m`). Returns the component and the refreshed per-sample fundamental
/// probe.
pub fn rfa_component(
    carrier: &SfmCarrier,
    m: u32,
    initial_probe_hz: &[f64],
    cfg: &EnhancerConfig,
) -> Result<(SampleBuffer, Vec<f64>)> {
    cfg.validate()?;
    let fs = carrier.sample_rate_hz;
    let frame_cfg = cfg.frame_for(fs);
    let mut probe = initial_probe_hz.to_vec();
    let mut component = Vec::new();
    for _ in 0..cfg.iterations {
        component = enhance_once(carrier, m, &probe, cfg)?;
        let buf = SampleBuffer::new(component, fs)?;
        let track = track_if(&buf, m, &frame_cfg, SEARCH_BAND_HZ)?;
        let mut fundamental = interpolate_if(&track, carrier.len())?;
        let inv_m = 1.0 / m as f64;
        for v in &mut fundamental {
            *v *= inv_m;
        }
        probe = fundamental;
        component = buf.into_samples();
    }
    Ok((SampleBuffer::new(component, fs)?, probe))
}

/// Enhance every harmonic in `harmonics`, bootstrapping from the 2nd.
pub fn hrfa(x: &SampleBuffer, harmonics: &[u32], cfg: &EnhancerConfig) -> Result<EnhancedSignal> {
    cfg.validate()?;
    if !harmonics.contains(&2) {
        return invalid("the harmonic set must contain the 2nd harmonic");
    }
    let fs = x.sample_rate_hz();
    let mut set: Vec<u32> = harmonics.to_vec();
    set.sort_unstable();
    set.dedup();
    for &m in &set {
        check_harmonic(m, fs)?;
    }
    if let Some(p) = &cfg.probe_if_hz {
        if p.len() != x.len() {
            return Err(crate::EnfError::LengthMismatch { expected: x.len(), actual: p.len() });
        }
    }
    let alpha = cfg.alpha.unwrap_or_else(|| default_alpha(x));
    let carrier = SfmCarrier::encode(x, alpha)?;
    let initial = cfg.probe_if_hz.clone().unwrap_or_else(|| vec![NOMINAL_HZ; x.len()]);

    let (c2, probe2) = rfa_component(&carrier, 2, &initial, cfg)?;
    let others: Vec<(u32, SampleBuffer)> = set
        .par_iter()
        .filter(|&&m| m != 2)
        .map(|&m| rfa_component(&carrier, m, &probe2, cfg).map(|(c, _)| (m, c)))
        .collect::<Result<_>>()?;

    let mut components = BTreeMap::new();
    components.insert(2, c2);
    components.extend(others);
    let mut sum = vec![0.0; x.len()];
    for c in components.values() {
        for (s, v) in sum.iter_mut().zip(c.samples()) {
            *s += v;
        }
    }
    Ok(EnhancedSignal { components, sum: SampleBuffer::new(sum, fs)?, probe_if_hz: probe2 })
}
