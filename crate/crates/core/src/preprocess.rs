//! Decimation, multi-band comb filtering and frame segmentation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::model::{num_frames, FrameConfig, SampleBuffer};

/// Linear-phase FIR with one passband per harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct CombFilterSpec {
    pub taps: Vec<f64>,
    pub length: usize,
    /// Passbands `m × [50 - w, 50 + w]` in Hz, one per harmonic.
    pub bands: Vec<(f64, f64)>,
    pub sample_rate_hz: f64,
}

impl CombFilterSpec {
    /// Complex frequency response of a single pass at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        fir_response(&self.taps, freq_hz / self.sample_rate_hz)
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }
}

fn fir_response(taps: &[f64], normalized_freq: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(n, h)| Complex64::from_polar(*h, -2.0 * PI * normalized_freq * n as f64))
        .sum()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    if len == 1 {
        return 1.0;
    }
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

/// Windowed-sinc low-pass with cutoff `cutoff` in cycles/sample.
fn lowpass_taps(cutoff: f64, len: usize) -> Vec<f64> {
    let c = (len - 1) as f64 / 2.0;
    (0..len)
        .map(|n| 2.0 * cutoff * sinc(2.0 * cutoff * (n as f64 - c)) * hamming(n, len))
        .collect()
}

/// Design the comb as a sum of Hamming-windowed band-pass prototypes, one per
/// harmonic. Each prototype's cutoffs sit a guard of `2 f_S / length` outside
/// the passband so the passband is flat, and the taps are scaled so the peak
/// passband gain is exactly one.
pub fn design_comb(
    harmonics: &[u32],
    sample_rate_hz: f64,
    length: usize,
    band_halfwidth_hz: f64,
) -> Result<CombFilterSpec> {
    if harmonics.is_empty() {
        return invalid("comb filter needs at least one harmonic");
    }
    if length < 2 {
        return invalid("comb filter length must be at least 2");
    }
    if !(band_halfwidth_hz > 0.0 && band_halfwidth_hz < crate::NOMINAL_HZ / 2.0) {
        return invalid(format!("band half-width {band_halfwidth_hz} Hz out of range"));
    }
    let mut ms = harmonics.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let guard = 2.0 * sample_rate_hz / length as f64;
    let nyq = sample_rate_hz / 2.0;

    let bands: Vec<(f64, f64)> = ms
        .iter()
        .map(|&m| {
            let m = m as f64;
            (m * (crate::NOMINAL_HZ - band_halfwidth_hz), m * (crate::NOMINAL_HZ + band_halfwidth_hz))
        })
        .collect();
    let edges: Vec<(f64, f64)> = bands.iter().map(|(lo, hi)| (lo - guard, hi + guard)).collect();
    if let Some((_, hi)) = edges.last() {
        if *hi >= nyq {
            return invalid(format!("passband edge {hi} Hz exceeds Nyquist {nyq} Hz"));
        }
    }
    if edges.first().is_some_and(|(lo, _)| *lo <= 0.0) {
        return invalid("lowest passband reaches DC");
    }
    if edges.windows(2).any(|w| w[0].1 >= w[1].0) {
        return invalid("harmonic passbands overlap at this filter length");
    }

    let mut taps = vec![0.0; length];
    for (lo, hi) in &edges {
        let upper = lowpass_taps(hi / sample_rate_hz, length);
        let lower = lowpass_taps(lo / sample_rate_hz, length);
        for (t, (u, l)) in taps.iter_mut().zip(upper.iter().zip(&lower)) {
            *t += u - l;
        }
    }

    let peak = bands
        .iter()
        .flat_map(|(lo, hi)| {
            let n = 200;
            (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64)
        })
        .map(|f| fir_response(&taps, f / sample_rate_hz).norm())
        .fold(0.0, f64::max);
    for t in &mut taps {
        *t /= peak;
    }

    Ok(CombFilterSpec { taps, length, bands, sample_rate_hz })
}

/// "Same"-length convolution with a kernel whose centre tap is `center`.
fn convolve_same(x: &[f64], kernel: &[f64], center: usize) -> Vec<f64> {
    let n = x.len();
    let k = kernel.len();
    (0..n)
        .map(|i| {
            // y[i] = Σ_j kernel[j] · x[i + center - j]
            let j_lo = (i + center + 1).saturating_sub(n);
            let j_hi = (i + center).min(k - 1);
            let mut acc = 0.0;
            for j in j_lo..=j_hi {
                acc += kernel[j] * x[i + center - j];
            }
            acc
        })
        .collect()
}

/// Zero-phase filtering: forward-backward application, computed as one
/// convolution with the (symmetric) autocorrelation of the taps. The
/// effective response is `|H|²` with no delay.
pub fn apply_fir(buffer: &SampleBuffer, filt: &CombFilterSpec) -> Result<SampleBuffer> {
    if buffer.len() <= filt.taps.len() {
        return invalid(format!(
            "signal of {} samples is not longer than the {}-tap filter",
            buffer.len(),
            filt.taps.len()
        ));
    }
    if (buffer.sample_rate_hz() - filt.sample_rate_hz).abs() > 1e-9 {
        return invalid(format!(
            "filter designed for {} Hz applied to a {} Hz signal",
            filt.sample_rate_hz,
            buffer.sample_rate_hz()
        ));
    }
    let l = filt.taps.len();
    let mut kernel = vec![0.0; 2 * l - 1];
    for (i, a) in filt.taps.iter().enumerate() {
        for (j, b) in filt.taps.iter().enumerate() {
            kernel[i + l - 1 - j] += a * b;
        }
    }
    let out = convolve_same(buffer.samples(), &kernel, l - 1);
    Ok(buffer.with_samples(out))
}

/// Integer-factor decimation behind a delay-compensated low-pass whose
/// passband reaches `0.45 · target` Hz and whose stopband starts at
/// `0.55 · target` Hz. The output has `ceil(N / factor)` samples.
pub fn decimate(buffer: &SampleBuffer, target_fs_hz: f64) -> Result<SampleBuffer> {
    let fs = buffer.sample_rate_hz();
    if !(target_fs_hz > 0.0) || target_fs_hz > fs {
        return invalid(format!("cannot decimate {fs} Hz to {target_fs_hz} Hz"));
    }
    let ratio = fs / target_fs_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 * ratio {
        return invalid(format!("{fs} Hz is not an integer multiple of {target_fs_hz} Hz"));
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(buffer.clone());
    }
    // Hamming transition width ≈ 3.3 / len cycles/sample.
    let transition = 0.1 * target_fs_hz / fs;
    let mut len = (3.3 / transition).ceil() as usize;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let taps = lowpass_taps(0.5 * target_fs_hz / fs, len);
    let center = len / 2;
    let x = buffer.samples();
    let n = x.len();
    let out_len = n.div_ceil(factor);
    let out = (0..out_len)
        .map(|k| {
            let i = k * factor;
            let j_lo = (i + center + 1).saturating_sub(n);
            let j_hi = (i + center).min(len - 1);
            (j_lo..=j_hi).map(|j| taps[j] * x[i + center - j]).sum()
        })
        .collect();
    SampleBuffer::new(out, target_fs_hz)
}

/// Overlapping frames of a tail-zero-padded signal.
#[derive(Debug, Clone)]
pub struct Frames {
    padded: Vec<f64>,
    cfg: FrameConfig,
    count: usize,
}

impl Frames {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn get(&self, l: usize) -> &[f64] {
        let start = self.cfg.frame_start(l);
        &self.padded[start..start + self.cfg.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.count).map(move |l| self.get(l))
    }

    pub fn padded(&self) -> &[f64] {
        &self.padded
    }
}

/// Split `samples` into frames `[lΔ, lΔ + N_F)` after zero-padding the tail.
pub fn frame(samples: &[f64], cfg: &FrameConfig) -> Frames {
    let mut padded = samples.to_vec();
    padded.resize(cfg.padded_len(samples.len()), 0.0);
    Frames { count: num_frames(samples.len(), cfg), padded, cfg: *cfg }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, fs: f64, n: usize, amp: f64) -> SampleBuffer {
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / fs).cos()).collect();
        SampleBuffer::new(s, fs).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn comb_meets_band_mask() {
        let ms = [2, 3, 4, 5, 6, 7];
        let f = design_comb(&ms, 800.0, 256, 1.0).unwrap();
        assert_eq!(f.taps.len(), 256);
        for (lo, hi) in &f.bands {
            for k in 0..=40 {
                let freq = lo + (hi - lo) * k as f64 / 40.0;
                assert!(f.magnitude_db(freq) >= -3.0, "{freq} Hz: {}", f.magnitude_db(freq));
            }
        }
        for m in 2..7 {
            let gap_mid = 50.0 * m as f64 + 25.0;
            assert!(f.magnitude_db(gap_mid) <= -40.0, "{gap_mid}: {}", f.magnitude_db(gap_mid));
        }
        // linear phase
        for i in 0..128 {
            assert!((f.taps[i] - f.taps[255 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_band_stopband() {
        let f = design_comb(&[2], 800.0, 256, 1.0).unwrap();
        assert!(f.magnitude_db(150.0) <= -40.0);
        assert!(f.magnitude_db(0.0) <= -40.0);
    }

    #[test]
    fn comb_rejects_bad_input() {
        assert!(design_comb(&[], 800.0, 256, 1.0).is_err());
        assert!(design_comb(&[2, 8], 800.0, 256, 1.0).is_err());
        assert!(design_comb(&[2], 800.0, 1, 1.0).is_err());
    }

    #[test]
    fn in_band_tone_passes_and_dc_is_removed() {
        let f = design_comb(&[2, 3, 4, 5, 6, 7], 800.0, 256, 1.0).unwrap();
        let n = 16_000;
        for freq in [99.0, 100.0, 150.6, 351.0] {
            let x = tone(freq, 800.0, n, 1.0);
            let y = apply_fir(&x, &f).unwrap();
            assert_eq!(y.len(), n);
            let inner = 1000..n - 1000;
            let ratio = rms(&y.samples()[inner.clone()]) / rms(&x.samples()[inner.clone()]);
            assert!((ratio - 1.0).abs() < 0.03, "{freq}: {ratio}");
            // zero phase: output stays in step with the input
            let corr: f64 = inner.clone().map(|i| x.samples()[i] * y.samples()[i]).sum::<f64>()
                / inner.clone().map(|i| x.samples()[i].powi(2)).sum::<f64>();
            assert!(corr > 0.97);
        }
        let dc = SampleBuffer::new(vec![1.0; n], 800.0).unwrap();
        let y = apply_fir(&dc, &f).unwrap();
        assert!(y.samples()[1000..n - 1000].iter().all(|v| v.abs() < 1e-3));
        let zero = SampleBuffer::new(vec![0.0; n], 800.0).unwrap();
        assert!(apply_fir(&zero, &f).unwrap().samples().iter().all(|v| *v == 0.0));
        let short = SampleBuffer::new(vec![0.0; 100], 800.0).unwrap();
        assert!(apply_fir(&short, &f).is_err());
    }

    #[test]
    fn decimation_preserves_in_band_tone() {
        let x = tone(100.0, 8000.0, 80_005, 0.8);
        let y = decimate(&x, 800.0).unwrap();
        assert_eq!(y.len(), 8001);
        assert_eq!(y.sample_rate_hz(), 800.0);
        let want = tone(100.0, 800.0, 8001, 0.8);
        let inner = 100..7900;
        let ratio = rms(&y.samples()[inner.clone()]) / rms(&want.samples()[inner.clone()]);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
        for i in inner {
            assert!((y.samples()[i] - want.samples()[i]).abs() < 0.01);
        }
        assert_eq!(decimate(&x, 8000.0).unwrap(), x);
        assert!(decimate(&x, 3000.0).is_err());
    }

    #[test]
    fn frames_follow_step() {
        let x: Vec<f64> = (0..3200).map(|i| i as f64).collect();
        let c = FrameConfig::new(1600, 1600, 0.5).unwrap();
        let fr = frame(&x, &c);
        assert_eq!(fr.len(), 2);
        assert_eq!(fr.get(1)[0], 1600.0);

        let c = FrameConfig::new(12_800, 800, 1.0 / 4000.0).unwrap();
        let x: Vec<f64> = (0..20_000).map(|i| i as f64).collect();
        let fr = frame(&x, &c);
        assert_eq!(fr.get(1)[..12_000], fr.get(0)[800..]);

        let fr = frame(&x[..100], &c);
        assert_eq!(fr.len(), 1);
        assert_eq!(fr.get(0).len(), 12_800);
        assert!(fr.get(0)[100..].iter().all(|v| *v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn filtering_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = crate::rng::rng_from_seed(seed);
            let n = 2000;
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let f = design_comb(&[2, 3], 800.0, 256, 1.0).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let fx = apply_fir(&SampleBuffer::new(x, 800.0).unwrap(), &f).unwrap();
            let fy = apply_fir(&SampleBuffer::new(y, 800.0).unwrap(), &f).unwrap();
            let fm = apply_fir(&SampleBuffer::new(mix, 800.0).unwrap(), &f).unwrap();
            for i in 0..n {
                let lin = a * fx.samples()[i] + b * fy.samples()[i];
                prop_assert!((fm.samples()[i] - lin).abs() < 1e-9);
            }
        }

        #[test]
        fn frame_starts_are_multiples_of_step(n in 1usize..5000, step in 1usize..300) {
            let c = FrameConfig::new(step * 4, step, 0.5).unwrap();
            let x: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
            let fr = frame(&x, &c);
            for l in 0..fr.len() {
                let s = l * step;
                let expect = if s < n { s as f64 + 1.0 } else { 0.0 };
                prop_assert_eq!(fr.get(l)[0], expect);
            }
            prop_assert_eq!(fr.padded().len(), c.padded_len(n));
        }
    }
}
