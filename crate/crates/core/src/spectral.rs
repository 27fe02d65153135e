//! Band-limited periodograms, per-harmonic peak tracking and IF utilities.
//!
//! The periodogram of a frame zero-padded to `f_S / resolution` points is
//! only ever needed inside narrow harmonic bands, so those bins are computed
//! directly with a chirp-z (Bluestein) zoom transform: two FFTs of roughly
//! `frame + bins` points instead of one multi-million point FFT.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::model::{FrameConfig, HarmonicTag, IfSeries, SampleBuffer};
use crate::preprocess::frame;

/// Power on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub grid_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Periodogram {
    /// Index of the largest bin; the lowest frequency wins ties.
    pub fn argmax(&self) -> Option<usize> {
        argmax_first(&self.power)
    }

    pub fn peak_hz(&self) -> Option<f64> {
        self.argmax().map(|k| self.grid_hz[k])
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in v.iter().enumerate() {
        match best {
            Some((_, b)) if p <= b => {}
            _ => best = Some((i, p)),
        }
    }
    best.map(|(i, _)| i)
}

/// Smallest `2^a 3^b 5^c` not below `n`.
fn good_fft_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut p = p35;
            while p < n {
                p *= 2;
            }
            best = best.min(p);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// DTFT of a length-`n_in` real sequence at `k_out` uniformly spaced
/// frequencies `f0 + k·df` (both in cycles per sample).
pub struct ZoomDft {
    n_in: usize,
    k_out: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel_fft: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ZoomDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZoomDft")
            .field("n_in", &self.n_in)
            .field("k_out", &self.k_out)
            .field("fft_len", &self.kernel_fft.len())
            .finish()
    }
}

fn cis_cycles(cycles: f64) -> Complex64 {
    let c = cycles - cycles.floor();
    Complex64::from_polar(1.0, std::f64::consts::TAU * c)
}

impl ZoomDft {
    pub fn new(n_in: usize, f0_cycles: f64, df_cycles: f64, k_out: usize) -> Self {
        assert!(n_in > 0 && k_out > 0);
        let len = good_fft_len(n_in + k_out - 1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);

        // y_n = x_n · e^{-j2π f0 n} · e^{-jπ df n²}
        let pre = (0..n_in)
            .map(|n| {
                let nf = n as f64;
                cis_cycles(-(f0_cycles * nf).fract() - (0.5 * df_cycles * nf * nf).fract())
            })
            .collect();
        let post = (0..k_out)
            .map(|k| {
                let kf = k as f64;
                cis_cycles(-(0.5 * df_cycles * kf * kf).fract())
            })
            .collect();
        // v_m = e^{+jπ df m²} for m in -(n_in-1)..k_out, stored circularly.
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        for m in 0..k_out {
            let mf = m as f64;
            kernel[m] = cis_cycles((0.5 * df_cycles * mf * mf).fract());
        }
        for m in 1..n_in {
            let mf = m as f64;
            kernel[len - m] = cis_cycles((0.5 * df_cycles * mf * mf).fract());
        }
        fwd.process(&mut kernel);
        let scale = 1.0 / len as f64;
        for v in &mut kernel {
            *v *= scale;
        }
        Self { n_in, k_out, pre, post, kernel_fft: kernel, fwd, inv }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn k_out(&self) -> usize {
        self.k_out
    }

    /// Complex DTFT values; `x` may be shorter than `n_in` (implicit zeros).
    pub fn transform(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.n_in, "input longer than the planned transform");
        let len = self.kernel_fft.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for ((b, &v), p) in buf.iter_mut().zip(x).zip(&self.pre) {
            *b = p * v;
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_fft) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        buf.truncate(self.k_out);
        for (b, p) in buf.iter_mut().zip(&self.post) {
            *b *= p;
        }
        buf
    }

    /// `|X(f_k)|²`.
    pub fn power(&self, x: &[f64]) -> Vec<f64> {
        self.transform(x).into_iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Indices `k` of the resolution grid `k · resolution` inside `[lo, hi]`.
fn grid_span(lo: f64, hi: f64, resolution: f64) -> (i64, i64) {
    let k_lo = (lo / resolution - 1e-7).ceil() as i64;
    let k_hi = (hi / resolution + 1e-7).floor() as i64;
    (k_lo, k_hi)
}

/// Evaluates the zero-padded periodogram of equal-length frames on the
/// resolution grid inside one band.
#[derive(Debug)]
pub struct BandPeriodogram {
    grid_hz: Vec<f64>,
    dft: ZoomDft,
}

impl BandPeriodogram {
    pub fn new(frame_len: usize, sample_rate_hz: f64, resolution_hz: f64, band: (f64, f64)) -> Result<Self> {
        let (lo, hi) = band;
        if !(lo >= 0.0 && hi <= sample_rate_hz / 2.0 && lo <= hi) {
            return invalid(format!(
                "band [{lo}, {hi}] Hz outside [0, {}] Hz",
                sample_rate_hz / 2.0
            ));
        }
        let cfg = FrameConfig { frame_len, step: frame_len, fft_resolution_hz: resolution_hz };
        cfg.transform_len(sample_rate_hz)?;
        let (k_lo, k_hi) = grid_span(lo, hi, resolution_hz);
        if k_hi < k_lo {
            return invalid(format!("band [{lo}, {hi}] Hz contains no grid point"));
        }
        let k_out = (k_hi - k_lo + 1) as usize;
        let grid_hz: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * resolution_hz).collect();
        let dft = ZoomDft::new(
            frame_len,
            grid_hz[0] / sample_rate_hz,
            resolution_hz / sample_rate_hz,
            k_out,
        );
        Ok(Self { grid_hz, dft })
    }

    pub fn grid_hz(&self) -> &[f64] {
        &self.grid_hz
    }

    pub fn power(&self, frame: &[f64]) -> Vec<f64> {
        self.dft.power(frame)
    }

    pub fn evaluate(&self, frame: &[f64]) -> Periodogram {
        Periodogram { grid_hz: self.grid_hz.clone(), power: self.power(frame) }
    }

    pub fn peak_hz(&self, frame: &[f64]) -> f64 {
        let p = self.power(frame);
        self.grid_hz[argmax_first(&p).expect("non-empty grid")]
    }
}

/// Periodogram of one frame restricted to `band`, on the grid
/// `k · resolution_hz`.
pub fn periodogram(frame: &[f64], sample_rate_hz: f64, resolution_hz: f64, band: (f64, f64)) -> Result<Periodogram> {
    if frame.is_empty() {
        return invalid("empty frame");
    }
    Ok(BandPeriodogram::new(frame.len(), sample_rate_hz, resolution_hz, band)?.evaluate(frame))
}

/// Per-frame periodogram peak of harmonic `m` inside `m × search_band`.
pub fn track_if(signal: &SampleBuffer, m: u32, cfg: &FrameConfig, search_band: (f64, f64)) -> Result<IfSeries> {
    if m == 0 {
        return invalid("harmonic index must be positive");
    }
    cfg.validate()?;
    let mf = m as f64;
    let band = (mf * search_band.0, mf * search_band.1);
    let bp = BandPeriodogram::new(cfg.frame_len, signal.sample_rate_hz(), cfg.fft_resolution_hz, band)?;
    let frames = frame(signal.samples(), cfg);
    let values = (0..frames.len())
        .into_par_iter()
        .map(|l| bp.peak_hz(frames.get(l)))
        .collect();
    Ok(IfSeries::new(values, HarmonicTag::Harmonic(m), *cfg))
}

/// Per-sample IF by linear interpolation between frame centres
/// `lΔ + N_F/2`, held constant outside the first and last centre.
pub fn interpolate_if(series: &IfSeries, n_samples: usize) -> Result<Vec<f64>> {
    let v = &series.values_hz;
    if v.is_empty() {
        return invalid("cannot interpolate an empty IF series");
    }
    let cfg = &series.frame_config;
    let first = cfg.frame_center(0);
    let step = cfg.step as f64;
    let last_l = v.len() - 1;
    Ok((0..n_samples)
        .map(|n| {
            let pos = (n as f64 - first) / step;
            if pos <= 0.0 {
                v[0]
            } else if pos >= last_l as f64 {
                v[last_l]
            } else {
                let l = pos.floor() as usize;
                let w = pos - l as f64;
                if w == 0.0 {
                    v[l]
                } else {
                    v[l] * (1.0 - w) + v[l + 1] * w
                }
            }
        })
        .collect())
}

/// Scale a harmonic-`m` track by `2/m` into the 2nd-harmonic band.
pub fn normalize_to_2nd(series: &IfSeries) -> Result<IfSeries> {
    let m = match series.harmonic {
        HarmonicTag::Harmonic(m) if m > 0 => m,
        _ => return invalid("series carries no harmonic index"),
    };
    let scale = 2.0 / m as f64;
    Ok(IfSeries::new(
        series.values_hz.iter().map(|v| v * scale).collect(),
        HarmonicTag::Normalized,
        series.frame_config,
    ))
}

/// Inverse of [`normalize_to_2nd`].
pub fn denormalize(series: &IfSeries, m: u32) -> Result<IfSeries> {
    if series.harmonic != HarmonicTag::Normalized || m == 0 {
        return invalid("series is not normalized");
    }
    let scale = m as f64 / 2.0;
    Ok(IfSeries::new(
        series.values_hz.iter().map(|v| v * scale).collect(),
        HarmonicTag::Harmonic(m),
        series.frame_config,
    ))
}
