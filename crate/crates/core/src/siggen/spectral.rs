use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Segment, SpectrogramFeature};
use crate::scalar::Real;
use crate::{Error, Result};

/// Offset inside the log so silent frames stay finite.
pub const LOG_EPSILON: f64 = 1e-8;

/// Remove the least-squares line over the sample index.
pub fn detrend_linear<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "detrend needs at least 2 samples, got {n}"
        )));
    }
    let nf = T::from_usize_lossy(n);
    let t_mean = T::from_usize_lossy(n - 1) / T::lit(2.0);
    let x_mean = x.iter().copied().sum::<T>() / nf;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (i, &v) in x.iter().enumerate() {
        let dt = T::from_usize_lossy(i) - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| v - x_mean - slope * (T::from_usize_lossy(i) - t_mean))
        .collect())
}

/// Magnitude STFT with a periodic Hann window, compressed as `ln(m + ε)`.
///
/// Window and hop are given in seconds and rounded to whole samples. Frames
/// are not padded: `frames = ⌊(L − win) / hop⌋ + 1`.
pub fn log_spectrogram<T: Real>(
    samples: &[T],
    sample_rate: f64,
    win_s: f64,
    hop_s: f64,
) -> Result<SpectrogramFeature<T>> {
    let win = (win_s * sample_rate).round() as usize;
    let hop = (hop_s * sample_rate).round() as usize;
    if win == 0 || hop == 0 {
        return Err(Error::Argument(format!(
            "window {win} / hop {hop} samples must be positive"
        )));
    }
    if win > samples.len() {
        return Err(Error::Argument(format!(
            "window of {win} samples exceeds segment length {}",
            samples.len()
        )));
    }
    let frames = (samples.len() - win) / hop + 1;
    let bins = win / 2 + 1;
    let two_pi = T::lit(2.0) * T::PI();
    let window: Vec<T> = (0..win)
        .map(|i| {
            let phase = two_pi * T::from_usize_lossy(i) / T::from_usize_lossy(win);
            T::lit(0.5) - T::lit(0.5) * phase.cos()
        })
        .collect();
    let fft = FftPlanner::<T>::new().plan_fft_forward(win);
    let eps = T::lit(LOG_EPSILON);
    let mut values = vec![T::zero(); bins * frames];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); win];
    for f in 0..frames {
        let start = f * hop;
        for (b, (&x, &w)) in buf.iter_mut().zip(samples[start..start + win].iter().zip(&window)) {
            *b = Complex::new(x * w, T::zero());
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(bins).enumerate() {
            values[k * frames + f] = (c.norm() + eps).ln();
        }
    }
    Ok(SpectrogramFeature { bins, frames, values })
}

/// [`log_spectrogram`] over a segment's raw samples as stored.
pub fn segment_spectrogram<T: Real>(
    seg: &Segment,
    win_s: f64,
    hop_s: f64,
) -> Result<SpectrogramFeature<T>> {
    let x: Vec<T> = seg.samples.iter().map(|&v| T::lit(v as f64)).collect();
    log_spectrogram(&x, seg.sample_rate, win_s, hop_s)
}

/// Featurization settings: spectrogram geometry plus optional average pooling.
///
/// Without pooling the feature vector is the flattened `bins × frames`
/// spectrogram. With `freq_bands`/`time_frames` set, contiguous bins/frames
/// are averaged into that many groups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub win_s: f64,
    pub hop_s: f64,
    pub freq_bands: Option<usize>,
    pub time_frames: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            win_s: 2.56,
            hop_s: 0.08,
            freq_bands: None,
            time_frames: None,
        }
    }
}

impl FeatureConfig {
    /// Feature length for a segment of `n_samples` samples.
    pub fn feature_len(&self, n_samples: usize, sample_rate: f64) -> usize {
        let win = (self.win_s * sample_rate).round() as usize;
        let hop = ((self.hop_s * sample_rate).round() as usize).max(1);
        if win == 0 || win > n_samples {
            return 0;
        }
        let bins = win / 2 + 1;
        let frames = (n_samples - win) / hop + 1;
        self.freq_bands.map_or(bins, |b| b.min(bins)) * self.time_frames.map_or(frames, |f| f.min(frames))
    }
}

fn group_bounds(n: usize, groups: usize) -> Vec<(usize, usize)> {
    (0..groups)
        .map(|g| (g * n / groups, (g + 1) * n / groups))
        .collect()
}

/// Detrend, log-spectrogram, optional pooling, flatten (bin-major).
pub fn featurize<T: Real>(seg: &Segment, cfg: &FeatureConfig) -> Result<Vec<T>> {
    let x: Vec<T> = seg.samples.iter().map(|&v| T::lit(v as f64)).collect();
    let x = detrend_linear(&x)?;
    let spec = log_spectrogram(&x, seg.sample_rate, cfg.win_s, cfg.hop_s)?;
    let fb = group_bounds(spec.bins, cfg.freq_bands.unwrap_or(spec.bins).clamp(1, spec.bins));
    let tb = group_bounds(spec.frames, cfg.time_frames.unwrap_or(spec.frames).clamp(1, spec.frames));
    let mut out = Vec::with_capacity(fb.len() * tb.len());
    for &(b0, b1) in &fb {
        for &(f0, f1) in &tb {
            let mut acc = T::zero();
            for b in b0..b1 {
                for f in f0..f1 {
                    acc += spec.at(b, f);
                }
            }
            out.push(acc / T::from_usize_lossy((b1 - b0) * (f1 - f0)));
        }
    }
    Ok(out)
}
