//! Synthetic multi-station seismic data: stream generation, segmentation and
//! spectrogram featurization.
//!
//! Every event of the catalog is recorded by every (station, channel) stream
//! at the same wall-clock interval, distorted by that station's transfer
//! characteristics. Segments cut from different streams at overlapping times
//! are therefore different views of the same physical event.

mod io;
mod segment;
mod spectral;
mod synth;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset, MANIFEST_FILE};
pub use segment::{assign_label, segment_dataset, segment_stream, SegIdAllocator};
pub use spectral::{
    detrend_linear, featurize, log_spectrogram, segment_spectrogram, FeatureConfig,
    LOG_EPSILON,
};
pub use synth::{synth_dataset, StationTransfer, SynthConfig};

/// One continuous sensor stream: a (station, channel) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId {
    pub station: usize,
    pub channel: usize,
}

impl StreamId {
    pub fn new(station: usize, channel: usize) -> Self {
        Self { station, channel }
    }
}

/// Catalog entry. Identical across all streams of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: usize,
    pub start: f64,
    pub end: f64,
    pub class: usize,
}

impl EventRecord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Length of the intersection with `[a, b)`, zero when disjoint.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.end.min(b) - self.start.max(a)).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawStream {
    pub id: StreamId,
    pub sample_rate: f64,
    pub samples: Vec<f32>,
    pub event_log: Vec<EventRecord>,
}

impl RawStream {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// A generated (or loaded) dataset: the config that produced it and its streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: SynthConfig,
    pub streams: Vec<RawStream>,
}

impl Dataset {
    /// The shared event catalog.
    pub fn events(&self) -> &[EventRecord] {
        self.streams.first().map_or(&[], |s| s.event_log.as_slice())
    }

    pub fn noise_class(&self) -> usize {
        self.config.noise_class()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// Window length in seconds.
    pub window_s: f64,
    /// Stride in seconds.
    pub stride_s: f64,
}

impl SegmenterConfig {
    pub fn new(window_s: f64, stride_s: f64) -> crate::Result<Self> {
        let cfg = Self { window_s, stride_s };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.window_s > 0.0 && self.stride_s > 0.0) {
            return Err(crate::Error::Config(format!(
                "segmenter needs positive window and stride, got {} / {}",
                self.window_s, self.stride_s
            )));
        }
        Ok(())
    }
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            stride_s: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub seg_id: u64,
    pub stream: StreamId,
    pub t_start: f64,
    pub t_end: f64,
    pub sample_rate: f64,
    pub samples: Vec<f32>,
    pub label: Option<usize>,
}

/// Log-magnitude spectrogram, `bins × frames`, row-major by bin.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrogramFeature<T> {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<T>,
}

impl<T: Copy> SpectrogramFeature<T> {
    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> T {
        self.values[bin * self.frames + frame]
    }
}
