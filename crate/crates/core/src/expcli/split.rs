use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::siggen::{EventRecord, Segment};
use crate::{Error, Result};

/// Minimum catalog size [`split_dataset`] accepts.
pub const MIN_EVENTS: usize = 10;

/// Event-level train/validation/test split settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Share of the non-test events held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("test_fraction", self.test_fraction), ("val_fraction", self.val_fraction)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Event ids per partition, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl EventSplit {
    pub fn partition_of(&self, event: usize) -> Option<Partition> {
        if self.train.binary_search(&event).is_ok() {
            Some(Partition::Train)
        } else if self.val.binary_search(&event).is_ok() {
            Some(Partition::Val)
        } else if self.test.binary_search(&event).is_ok() {
            Some(Partition::Test)
        } else {
            None
        }
    }
}

/// Shuffle the catalog under `spec.seed` and cut it into test, validation
/// and training events (`round(n·test)` test, `round(rest·val)` validation).
pub fn split_dataset(events: &[EventRecord], spec: &SplitSpec) -> Result<EventSplit> {
    spec.validate()?;
    if events.len() < MIN_EVENTS {
        return Err(Error::Config(format!(
            "need at least {MIN_EVENTS} events to split, catalog has {}",
            events.len()
        )));
    }
    let mut ids: Vec<usize> = events.iter().map(|e| e.id).collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng_for(spec.seed, &[0x5B11]));
    let n = ids.len();
    let n_test = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 2);
    let n_val = (((n - n_test) as f64 * spec.val_fraction).round() as usize).clamp(1, n - n_test - 1);
    let mut test = ids[..n_test].to_vec();
    let mut val = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    for p in [&mut train, &mut val, &mut test] {
        p.sort_unstable();
    }
    Ok(EventSplit { train, val, test })
}

/// The event a segment belongs to: largest time overlap, lowest id on ties,
/// nearest midpoint when nothing overlaps.
pub fn owning_event(events: &[EventRecord], t_start: f64, t_end: f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for e in events {
        let ov = e.overlap(t_start, t_end);
        if ov > 0.0 && best.is_none_or(|(b, id)| ov > b || (ov == b && e.id < id)) {
            best = Some((ov, e.id));
        }
    }
    if let Some((_, id)) = best {
        return Some(id);
    }
    let mid = 0.5 * (t_start + t_end);
    events
        .iter()
        .min_by(|a, b| {
            let da = (0.5 * (a.start + a.end) - mid).abs();
            let db = (0.5 * (b.start + b.end) - mid).abs();
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        })
        .map(|e| e.id)
}

/// Split segments by the partition of their owning event.
pub fn partition_segments(
    segments: Vec<Segment>,
    events: &[EventRecord],
    split: &EventSplit,
) -> Result<[Vec<Segment>; 3]> {
    let mut out: [Vec<Segment>; 3] = Default::default();
    for s in segments {
        let ev = owning_event(events, s.t_start, s.t_end)
            .ok_or_else(|| Error::Config("empty event catalog".into()))?;
        let slot = match split.partition_of(ev) {
            Some(Partition::Train) => 0,
            Some(Partition::Val) => 1,
            Some(Partition::Test) => 2,
            None => return Err(Error::Config(format!("event {ev} missing from the split"))),
        };
        out[slot].push(s);
    }
    Ok(out)
}
