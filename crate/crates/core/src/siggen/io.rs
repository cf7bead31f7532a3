//! On-disk dataset layout: `manifest.json` plus one little-endian `f32` file
//! per stream. Segments are always re-derived, never stored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, EventRecord, RawStream, StreamId, SynthConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StreamEntry {
    station: usize,
    channel: usize,
    file: String,
    n_samples: usize,
    sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: SynthConfig,
    streams: Vec<StreamEntry>,
    event_log: Vec<EventRecord>,
}

fn stream_file(id: StreamId) -> String {
    format!("stream_s{:02}_c{:02}.f32le", id.station, id.channel)
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(dataset.streams.len());
    for s in &dataset.streams {
        let file = stream_file(s.id);
        let mut bytes = Vec::with_capacity(s.samples.len() * 4);
        for v in &s.samples {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        entries.push(StreamEntry {
            station: s.id.station,
            channel: s.id.channel,
            file,
            n_samples: s.samples.len(),
            sample_rate: s.sample_rate,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: dataset.config.clone(),
        streams: entries,
        event_log: dataset.events().to_vec(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format version {}",
            manifest.format_version
        )));
    }
    let mut streams = Vec::with_capacity(manifest.streams.len());
    for e in manifest.streams {
        let bytes = fs::read(dir.join(&e.file))?;
        if bytes.len() != e.n_samples * 4 {
            return Err(Error::Format(format!(
                "{}: expected {} samples, found {} bytes",
                e.file,
                e.n_samples,
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        streams.push(RawStream {
            id: StreamId::new(e.station, e.channel),
            sample_rate: e.sample_rate,
            samples,
            event_log: manifest.event_log.clone(),
        });
    }
    Ok(Dataset {
        config: manifest.config,
        streams,
    })
}
