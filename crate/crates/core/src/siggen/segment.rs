use super::{EventRecord, RawStream, Segment, SegmenterConfig};

/// Dataset-global, monotonically increasing segment id source.
#[derive(Debug, Default, Clone)]
pub struct SegIdAllocator {
    next: u64,
}

impl SegIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

/// Label of the window `[t_start, t_end)` under the majority-overlap rule.
///
/// An event qualifies when the window covers at least half of the event or
/// the event covers at least half of the window. Among qualifying events of
/// non-noise classes, the one with the largest overlap wins (earliest on
/// ties). Otherwise the window is noise.
pub fn assign_label(events: &[EventRecord], t_start: f64, t_end: f64, noise_class: usize) -> usize {
    let window = t_end - t_start;
    let mut best: Option<(f64, usize)> = None;
    for ev in events.iter().filter(|e| e.class != noise_class) {
        let ov = ev.overlap(t_start, t_end);
        if ov <= 0.0 {
            continue;
        }
        let qualifies = ov >= 0.5 * ev.duration() || ov >= 0.5 * window;
        if qualifies && best.is_none_or(|(b, _)| ov > b) {
            best = Some((ov, ev.class));
        }
    }
    best.map_or(noise_class, |(_, c)| c)
}

/// Cut one stream into windows starting at `k · stride` while the window fits.
///
/// A stream shorter than the window yields no segments.
pub fn segment_stream(
    stream: &RawStream,
    cfg: &SegmenterConfig,
    noise_class: usize,
    ids: &mut SegIdAllocator,
) -> Vec<Segment> {
    let fs = stream.sample_rate;
    let win = (cfg.window_s * fs).round() as usize;
    let duration = stream.duration();
    let mut out = Vec::new();
    if win == 0 {
        return out;
    }
    let mut k = 0usize;
    loop {
        let t_start = k as f64 * cfg.stride_s;
        if t_start + cfg.window_s > duration + 1e-9 {
            break;
        }
        let first = (t_start * fs).round() as usize;
        if first + win > stream.samples.len() {
            break;
        }
        let t_end = t_start + cfg.window_s;
        out.push(Segment {
            seg_id: ids.next_id(),
            stream: stream.id,
            t_start,
            t_end,
            sample_rate: fs,
            samples: stream.samples[first..first + win].to_vec(),
            label: Some(assign_label(&stream.event_log, t_start, t_end, noise_class)),
        });
        k += 1;
    }
    out
}

/// Segment every stream in order with one shared id allocator.
pub fn segment_dataset(
    streams: &[RawStream],
    cfg: &SegmenterConfig,
    noise_class: usize,
    ids: &mut SegIdAllocator,
) -> Vec<Segment> {
    streams
        .iter()
        .flat_map(|s| segment_stream(s, cfg, noise_class, ids))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::StreamId;

    fn stream(seconds: usize, events: Vec<EventRecord>) -> RawStream {
        RawStream {
            id: StreamId::new(0, 0),
            sample_rate: 100.0,
            samples: (0..seconds * 100).map(|i| i as f32).collect(),
            event_log: events,
        }
    }

    fn count(seconds: usize, w: f64, h: f64) -> usize {
        let s = stream(seconds, vec![]);
        segment_stream(&s, &SegmenterConfig::new(w, h).unwrap(), 2, &mut SegIdAllocator::new()).len()
    }

    #[test]
    fn segment_counts() {
        assert_eq!(count(90, 30.0, 30.0), 3);
        assert_eq!(count(90, 30.0, 15.0), 5);
        assert_eq!(count(20, 30.0, 30.0), 0);
    }

    #[test]
    fn tiling_and_sample_counts() {
        let s = stream(200, vec![]);
        let segs = segment_stream(&s, &SegmenterConfig::new(30.0, 7.5).unwrap(), 2, &mut SegIdAllocator::new());
        for w in segs.windows(2) {
            assert!((w[1].t_start - w[0].t_start - 7.5).abs() < 1e-12);
            assert_eq!(w[0].samples.len(), 3000);
            assert_eq!(w[1].samples.len(), 3000);
            assert_eq!(w[1].seg_id, w[0].seg_id + 1);
        }
        // samples come from the right offset
        assert_eq!(segs[2].samples[0], 1500.0);
    }

    #[test]
    fn ids_unique_across_streams() {
        let streams = vec![stream(90, vec![]), stream(90, vec![])];
        let mut ids = SegIdAllocator::new();
        let segs = segment_dataset(&streams, &SegmenterConfig::default(), 2, &mut ids);
        let mut seen: Vec<u64> = segs.iter().map(|s| s.seg_id).collect();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert_eq!(ids.peek(), 6);
    }

    #[test]
    fn majority_overlap_rule() {
        let ev = |start, end, class| EventRecord { id: 0, start, end, class };
        // short event fully inside the window: covers 100% of the event
        assert_eq!(assign_label(&[ev(10.0, 14.0, 0)], 0.0, 30.0, 2), 0);
        // half of a 10 s event inside the window
        assert_eq!(assign_label(&[ev(25.0, 35.0, 1)], 0.0, 30.0, 2), 1);
        // 4 s of a 10 s event: neither criterion
        assert_eq!(assign_label(&[ev(26.0, 36.0, 1)], 0.0, 30.0, 2), 2);
        // long event covering more than half the window
        assert_eq!(assign_label(&[ev(10.0, 100.0, 0)], 0.0, 30.0, 2), 0);
        // two qualifying events: larger overlap wins
        assert_eq!(assign_label(&[ev(0.0, 4.0, 0), ev(10.0, 20.0, 1)], 0.0, 30.0, 2), 1);
        assert_eq!(assign_label(&[], 0.0, 30.0, 2), 2);
    }
}
