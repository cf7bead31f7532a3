use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EventRecord, RawStream, StreamId};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Per-station distortion applied to everything the station records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationTransfer {
    /// Broadband gain in dB.
    pub gain_db: f64,
    /// Spectral tilt in [-1, 1]: negative is low-pass, positive emphasises highs.
    pub tilt: f64,
    /// Propagation delay in milliseconds.
    pub delay_ms: f64,
    /// Standard deviation of the additive instrument noise.
    pub noise_floor: f64,
}

/// Generator configuration. Read from TOML; every field has a default.
///
/// ```toml
/// n_stations = 8
/// n_channels = 3
/// n_classes = 3            # last class is the noise class
/// events_per_class = 40    # the noise class gets quiet catalog intervals
/// event_duration = [8.0, 20.0]
/// slot_s = 30.0
/// sample_rate = 100.0
/// divergence = [1.0]       # one value per station, or a single value for all
/// seed = 7
/// # optional explicit transfers, one per station:
/// # [[stations]]
/// # gain_db = 0.0
/// # tilt = 0.0
/// # delay_ms = 0.0
/// # noise_floor = 0.05
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub n_channels: usize,
    pub n_classes: usize,
    pub events_per_class: usize,
    /// Min/max event duration in seconds.
    pub event_duration: (f64, f64),
    /// Each catalog entry occupies one slot of this length.
    pub slot_s: f64,
    pub sample_rate: f64,
    /// Mean event peak amplitude before station gain.
    pub event_amplitude: f64,
    /// Ambient ground-noise standard deviation before station filtering.
    pub ambient_noise: f64,
    /// Baseline instrument noise before divergence scaling.
    pub base_noise_floor: f64,
    /// Max gain excursion in dB at divergence 1.
    pub max_gain_db: f64,
    pub divergence: Vec<f64>,
    /// Explicit transfers; derived from the seed when absent.
    pub stations: Option<Vec<StationTransfer>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stations: 8,
            n_channels: 3,
            n_classes: 3,
            events_per_class: 40,
            event_duration: (8.0, 20.0),
            slot_s: 30.0,
            sample_rate: 100.0,
            event_amplitude: 2.0,
            ambient_noise: 0.02,
            base_noise_floor: 0.05,
            max_gain_db: 12.0,
            divergence: vec![1.0],
            stations: None,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn noise_class(&self) -> usize {
        self.n_classes - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_stations == 0 || self.n_channels == 0 {
            return bad("need at least one station and one channel".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        let (lo, hi) = self.event_duration;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("invalid event duration range ({lo}, {hi})"));
        }
        if !(self.slot_s > 0.0) || hi > self.slot_s - 1.0 {
            return bad(format!(
                "slot of {} s cannot hold events up to {hi} s",
                self.slot_s
            ));
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample rate must be positive".into());
        }
        match self.divergence.len() {
            1 => {}
            n if n == self.n_stations => {}
            n => {
                return bad(format!(
                    "divergence has {n} entries for {} stations",
                    self.n_stations
                ))
            }
        }
        if self.divergence.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad("divergence levels must be finite and non-negative".into());
        }
        if let Some(st) = &self.stations {
            if st.len() != self.n_stations {
                return bad(format!(
                    "{} station transfers for {} stations",
                    st.len(),
                    self.n_stations
                ));
            }
            if st.iter().any(|s| !(-1.0..=1.0).contains(&s.tilt) || s.noise_floor < 0.0) {
                return bad("station tilt must lie in [-1, 1] and noise floor be >= 0".into());
            }
        }
        Ok(())
    }

    fn divergence_of(&self, station: usize) -> f64 {
        if self.divergence.len() == 1 {
            self.divergence[0]
        } else {
            self.divergence[station]
        }
    }

    /// Station transfers, explicit or derived from the seed.
    ///
    /// Derived gains and tilts are spread over a shuffled even grid so that
    /// stations always differ from each other by a margin set by divergence.
    pub fn transfers(&self) -> Vec<StationTransfer> {
        if let Some(st) = &self.stations {
            return st.clone();
        }
        let n = self.n_stations;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[0x5747]));
        let grid = |i: usize| {
            if n == 1 {
                0.0
            } else {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            }
        };
        let mut gains: Vec<f64> = (0..n).map(grid).collect();
        let mut tilts: Vec<f64> = (0..n).map(grid).collect();
        gains.shuffle(&mut rng);
        tilts.shuffle(&mut rng);
        (0..n)
            .map(|s| {
                let div = self.divergence_of(s);
                let noise_scale: f64 = rng.random_range(-1.0..1.0);
                let delay: f64 = rng.random_range(0.0..30.0);
                StationTransfer {
                    gain_db: div * self.max_gain_db * gains[s],
                    tilt: (div * 0.9 * tilts[s]).clamp(-1.0, 1.0),
                    delay_ms: delay,
                    noise_floor: self.base_noise_floor * 10f64.powf(0.5 * div * noise_scale),
                }
            })
            .collect()
    }

    fn n_slots(&self) -> usize {
        self.events_per_class * self.n_classes
    }

    pub fn duration_s(&self) -> f64 {
        self.n_slots().max(1) as f64 * self.slot_s
    }

    pub fn samples_per_stream(&self) -> usize {
        (self.duration_s() * self.sample_rate).round() as usize
    }
}

/// Shared catalog: slot classes shuffled, events placed inside their slots.
fn build_catalog(cfg: &SynthConfig) -> Vec<EventRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xCA7A]));
    let mut classes: Vec<usize> = (0..cfg.n_classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.events_per_class))
        .collect();
    classes.shuffle(&mut rng);
    let noise = cfg.noise_class();
    let (lo, hi) = cfg.event_duration;
    classes
        .into_iter()
        .enumerate()
        .map(|(id, class)| {
            let slot_start = id as f64 * cfg.slot_s;
            if class == noise {
                return EventRecord {
                    id,
                    start: slot_start,
                    end: slot_start + cfg.slot_s,
                    class,
                };
            }
            let dur = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let room = cfg.slot_s - dur - 1.0;
            let off = 0.5 + if room > 0.0 { rng.random_range(0.0..room) } else { 0.0 };
            // Quantise to the sample grid so logs and waveforms agree exactly.
            let q = |t: f64| (t * cfg.sample_rate).round() / cfg.sample_rate;
            let start = q(slot_start + off);
            EventRecord {
                id,
                start,
                end: q(start + dur),
                class,
            }
        })
        .collect()
}

/// Class signature: band-limited oscillation under a class-specific envelope.
///
/// Signal classes get log-spaced frequency bands between 3 and 25 Hz; even
/// classes are impulsive (fast onset, exponential decay), odd classes are
/// emergent (spindle-shaped).
fn source_waveform(cfg: &SynthConfig, ev: &EventRecord) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xE7E7, ev.id as u64]));
    let fs = cfg.sample_rate;
    let n = ((ev.end - ev.start) * fs).round() as usize;
    let n_sig = cfg.n_classes - 1;
    let center = if n_sig == 1 {
        8.0
    } else {
        3.0 * (25.0f64 / 3.0).powf(ev.class as f64 / (n_sig - 1) as f64)
    };
    let nyq = 0.45 * fs;
    let (f_lo, f_hi) = ((center * 0.6).min(nyq), (center * 1.4).min(nyq));
    const K: usize = 24;
    let comps: Vec<(f64, f64)> = (0..K)
        .map(|_| {
            let f = f_lo + (f_hi - f_lo) * rng.random::<f64>();
            (f, 2.0 * PI * rng.random::<f64>())
        })
        .collect();
    let amp = cfg.event_amplitude * rng.random_range(0.5..1.5) / (K as f64).sqrt();
    let dur = n as f64 / fs;
    let impulsive = ev.class % 2 == 0;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let env = if impulsive {
                let rise = (t / 0.3).min(1.0);
                rise * (-t / (dur / 4.0)).exp()
            } else {
                (PI * t / dur).sin().powi(2)
            };
            let osc: f64 = comps.iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            amp * env * osc
        })
        .collect()
}

/// First-order tilt filter; `tilt` in [-1, 1].
fn apply_tilt(x: &mut [f64], tilt: f64) {
    if tilt >= 0.0 {
        let beta = 2.0 * tilt;
        let mut prev = 0.0;
        for v in x.iter_mut() {
            let cur = *v;
            *v = cur + beta * (cur - prev);
            prev = cur;
        }
    } else {
        let a = 0.9 * (-tilt);
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = (1.0 - a) * *v + a * y;
            *v = y;
        }
    }
}

fn channel_gain(channel: usize) -> f64 {
    if channel == 0 {
        1.0
    } else {
        0.6
    }
}

fn render_stream(
    cfg: &SynthConfig,
    id: StreamId,
    transfer: &StationTransfer,
    catalog: &[EventRecord],
    sources: &[Vec<f64>],
) -> RawStream {
    let fs = cfg.sample_rate;
    let n = cfg.samples_per_stream();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        &[0x57EA, id.station as u64, id.channel as u64],
    ));

    // Ambient ground motion: one-pole coloured noise.
    let mut ground = vec![0.0f64; n];
    let mut state = 0.0;
    for v in ground.iter_mut() {
        let w: f64 = rng.sample(StandardNormal);
        state = 0.8 * state + 0.6 * w;
        *v = cfg.ambient_noise * state;
    }

    let delay = (transfer.delay_ms / 1000.0 * fs).round() as usize + id.channel.min(1);
    let cg = channel_gain(id.channel);
    for (ev, src) in catalog.iter().zip(sources) {
        let start = (ev.start * fs).round() as usize + delay;
        for (k, &s) in src.iter().enumerate() {
            if let Some(g) = ground.get_mut(start + k) {
                *g += cg * s;
            }
        }
    }

    apply_tilt(&mut ground, transfer.tilt);
    let gain = 10f64.powf(transfer.gain_db / 20.0);
    let samples = ground
        .into_iter()
        .map(|g| {
            let w: f64 = rng.sample(StandardNormal);
            (gain * g + transfer.noise_floor * w) as f32
        })
        .collect();

    RawStream {
        id,
        sample_rate: fs,
        samples,
        event_log: catalog.to_vec(),
    }
}

/// Generate one stream per (station, channel), station-major order.
///
/// Output is a pure function of `cfg`: every random draw comes from a
/// generator seeded by `(seed, role, index)`, so parallel rendering does not
/// change results.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<RawStream>> {
    cfg.validate()?;
    let catalog = build_catalog(cfg);
    let sources: Vec<Vec<f64>> = catalog
        .par_iter()
        .map(|ev| {
            if ev.class == cfg.noise_class() {
                Vec::new()
            } else {
                source_waveform(cfg, ev)
            }
        })
        .collect();
    let transfers = cfg.transfers();
    let ids: Vec<StreamId> = (0..cfg.n_stations)
        .flat_map(|s| (0..cfg.n_channels).map(move |c| StreamId::new(s, c)))
        .collect();
    Ok(ids
        .par_iter()
        .map(|&id| render_stream(cfg, id, &transfers[id.station], &catalog, &sources))
        .collect())
}
