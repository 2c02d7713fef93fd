//! Workload synthesis: Zipf content choice, Poisson content-request epochs per
//! consumer group, geometric content sizes and constant-bit-rate packet
//! requests within each content retrieval.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irm::{zipf_popularity, Popularity};
use crate::model::{derive_seed, ContentId, PacketId};

/// Inverse-CDF draw of a content id from `q`.
pub fn sample_content<R: Rng + ?Sized>(q: &Popularity, rng: &mut R) -> ContentId {
    let u: f64 = rng.random();
    let cdf = q.cdf();
    let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    ContentId(i as u32 + 1)
}

/// Geometric size on {1, 2, ...} with the given mean.
pub fn sample_content_size<R: Rng + ?Sized>(mean_size: f64, rng: &mut R) -> u32 {
    assert!(mean_size >= 1.0, "mean content size must be >= 1");
    let geo = Geometric::new(1.0 / mean_size).expect("success probability in (0, 1]");
    let failures: u64 = geo.sample(rng);
    u32::try_from(failures + 1).unwrap_or(u32::MAX)
}

/// One fixed size per content, drawn once for the whole catalog.
pub fn sample_catalog_sizes(contents: usize, mean_size: f64, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5153));
    (0..contents).map(|_| sample_content_size(mean_size, &mut rng)).collect()
}

/// Requests one consumer group makes against one producer's catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub alpha: f64,
    /// Global id of the catalog's most popular content.
    pub first_content: u32,
    pub contents: u32,
    /// Content requests per second per consumer group.
    pub content_rate: f64,
    pub mean_size: f64,
    /// Packet requests per second within one content retrieval.
    pub cbr_rate: f64,
    pub seed: u64,
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.content_rate > 0.0) || !(self.cbr_rate > 0.0) || !(self.mean_size >= 1.0) {
            return Err(Error::Scenario(format!(
                "traffic profile needs content_rate > 0, cbr_rate > 0, mean_size >= 1: {self:?}"
            )));
        }
        if self.contents == 0 || self.first_content == 0 {
            return Err(Error::Scenario("traffic profile has an empty catalog".into()));
        }
        Ok(())
    }

    pub fn popularity(&self) -> Result<Popularity> {
        zipf_popularity(self.alpha, self.contents as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEvent {
    pub time: f64,
    pub group: u32,
    pub packet: PacketId,
}

struct Source {
    group: u32,
    first_content: u32,
    popularity: Popularity,
    inter_arrival: Exp<f64>,
    spacing: f64,
    rng: ChaCha8Rng,
    next_epoch: f64,
}

#[derive(Clone, Copy, Debug)]
struct Flow {
    start: f64,
    time: f64,
    group: u32,
    seq: u64,
    content: u32,
    next_index: u32,
    size: u32,
    spacing: f64,
}

impl PartialEq for Flow {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Flow {}
impl PartialOrd for Flow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Flow {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.group.cmp(&other.group)).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Epoch(f64, usize);
impl Eq for Epoch {}
impl PartialOrd for Epoch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Epoch {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Lazily merged, time-ordered packet-request stream. Ties are broken by
/// group id, then by the order in which content retrievals started.
pub struct WorkloadStream<'a> {
    sources: Vec<Source>,
    epochs: BinaryHeap<Reverse<Epoch>>,
    flows: BinaryHeap<Reverse<Flow>>,
    sizes: &'a [u32],
    duration: f64,
    next_seq: u64,
}

impl WorkloadStream<'_> {
    fn start_flow(&mut self, src: usize) {
        let s = &mut self.sources[src];
        let epoch = s.next_epoch;
        let rank = sample_content(&s.popularity, &mut s.rng);
        let content = s.first_content + rank.0 - 1;
        let size = self.sizes[content as usize - 1];
        let flow = Flow {
            start: epoch,
            time: epoch,
            group: s.group,
            seq: self.next_seq,
            content,
            next_index: 1,
            size,
            spacing: s.spacing,
        };
        self.next_seq += 1;
        self.flows.push(Reverse(flow));
        s.next_epoch = epoch + s.inter_arrival.sample(&mut s.rng);
        if s.next_epoch < self.duration {
            self.epochs.push(Reverse(Epoch(s.next_epoch, src)));
        }
    }
}

impl Iterator for WorkloadStream<'_> {
    type Item = WorkloadEvent;

    fn next(&mut self) -> Option<WorkloadEvent> {
        loop {
            let epoch = self.epochs.peek().map(|Reverse(e)| *e);
            let flow_time = self.flows.peek().map(|Reverse(f)| f.time);
            match (epoch, flow_time) {
                (Some(Epoch(t, src)), ft) if ft.is_none_or(|ft| t <= ft) => {
                    self.epochs.pop();
                    self.start_flow(src);
                }
                (_, None) => return None,
                _ => break,
            }
        }
        let Reverse(mut flow) = self.flows.pop()?;
        let event =
            WorkloadEvent { time: flow.time, group: flow.group, packet: PacketId::new(flow.content, flow.next_index) };
        if flow.next_index < flow.size {
            flow.next_index += 1;
            flow.time = flow.start + f64::from(flow.next_index - 1) * flow.spacing;
            self.flows.push(Reverse(flow));
        }
        Some(event)
    }
}

/// Packet-request stream of `groups` against every profile over `[0, duration)`.
///
/// Each (group, profile) pair is an independent Poisson process of content
/// requests; every content request emits all of its packets, one every
/// `1 / cbr_rate` seconds starting at the request epoch. `sizes[id - 1]` is the
/// packet count of global content `id`. The stream is a pure function of the
/// arguments.
pub fn generate_workload<'a>(
    profiles: &[TrafficProfile],
    sizes: &'a [u32],
    groups: &[u32],
    duration: f64,
) -> Result<WorkloadStream<'a>> {
    if !(duration > 0.0) {
        return Err(Error::Scenario(format!("duration {duration} must be positive")));
    }
    let mut sources = Vec::with_capacity(profiles.len() * groups.len());
    let mut epochs = BinaryHeap::new();
    for &group in groups {
        for (pi, profile) in profiles.iter().enumerate() {
            profile.validate()?;
            if (profile.first_content + profile.contents - 1) as usize > sizes.len() {
                return Err(Error::Scenario(format!(
                    "catalog of profile {pi} exceeds the {} sized contents",
                    sizes.len()
                )));
            }
            let seed = derive_seed(derive_seed(profile.seed, u64::from(group)), pi as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inter_arrival = Exp::new(profile.content_rate).expect("positive rate");
            let first = inter_arrival.sample(&mut rng);
            let idx = sources.len();
            sources.push(Source {
                group,
                first_content: profile.first_content,
                popularity: profile.popularity()?,
                inter_arrival,
                spacing: 1.0 / profile.cbr_rate,
                rng,
                next_epoch: first,
            });
            if first < duration {
                epochs.push(Reverse(Epoch(first, idx)));
            }
        }
    }
    Ok(WorkloadStream { sources, epochs, flows: BinaryHeap::new(), sizes, duration, next_seq: 0 })
}

/// Writes `time group content index` lines.
pub fn write_trace<W: Write>(mut out: W, events: impl IntoIterator<Item = WorkloadEvent>) -> Result<()> {
    writeln!(out, "# time group content index")?;
    for e in events {
        writeln!(out, "{} {} {} {}", e.time, e.group, e.packet.content.0, e.packet.index)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<WorkloadEvent>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Trace { line: n + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let time: f64 = fields[0].parse().map_err(|e| bad(format!("time: {e}")))?;
        let group: u32 = fields[1].parse().map_err(|e| bad(format!("group: {e}")))?;
        let content: u32 = fields[2].parse().map_err(|e| bad(format!("content: {e}")))?;
        let index: u32 = fields[3].parse().map_err(|e| bad(format!("index: {e}")))?;
        if content == 0 || index == 0 {
            return Err(bad("content and index start at 1".into()));
        }
        events.push(WorkloadEvent { time, group, packet: PacketId::new(content, index) });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(rate: f64, alpha: f64, contents: u32) -> TrafficProfile {
        TrafficProfile {
            alpha,
            first_content: 1,
            contents,
            content_rate: rate,
            mean_size: 1.0,
            cbr_rate: 100.0,
            seed: 7,
        }
    }

    #[test]
    fn degenerate_popularity_always_first() {
        let q = Popularity::new(vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_content(&q, &mut rng) == ContentId(1)));
    }

    #[test]
    fn zipf_draw_frequencies() {
        let q = zipf_popularity(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 3];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[sample_content(&q, &mut rng).0 as usize - 1] += 1;
        }
        for (count, want) in counts.iter().zip([0.5455, 0.2727, 0.1818]) {
            let freq = f64::from(*count) / f64::from(draws);
            assert!((freq - want).abs() < 0.003, "{freq} vs {want}");
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let q = zipf_popularity(0.9, 50).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample_content(&q, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn geometric_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..100).all(|_| sample_content_size(1.0, &mut rng) == 1));
        let draws: Vec<u32> = (0..100_000).map(|_| sample_content_size(100.0, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d >= 1));
        let mean = draws.iter().map(|&d| f64::from(d)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 100.0).abs() <= 2.0, "mean {mean}");
    }

    #[test]
    fn poisson_request_count() {
        let sizes = vec![1; 100];
        let n = generate_workload(&[profile(12.5, 1.0, 100)], &sizes, &[0], 1000.0).unwrap().count();
        let sigma = 12_500f64.sqrt();
        assert!((n as f64 - 12_500.0).abs() <= 3.0 * sigma, "{n} content requests");
    }

    #[test]
    fn cbr_packet_spacing() {
        let mut p = profile(0.5, 0.0, 1);
        p.cbr_rate = 100.0;
        let sizes = vec![3];
        let events: Vec<_> = generate_workload(&[p], &sizes, &[0], 1.5).unwrap().collect();
        assert!(!events.is_empty());
        let t0 = events[0].time;
        let first: Vec<_> = events.iter().take(3).collect();
        for (k, e) in first.iter().enumerate() {
            assert_eq!(e.packet, PacketId::new(1, k as u32 + 1));
            assert!((e.time - (t0 + 0.01 * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn stream_is_sorted_and_deterministic() {
        let sizes = sample_catalog_sizes(200, 5.0, 1);
        let mut a = profile(3.0, 1.0, 100);
        a.mean_size = 5.0;
        let mut b = a.clone();
        b.first_content = 101;
        b.alpha = 0.8;
        let run = || generate_workload(&[a.clone(), b.clone()], &sizes, &[0, 1, 2], 50.0).unwrap().collect::<Vec<_>>();
        let x = run();
        assert!(x.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(x.iter().any(|e| e.packet.content.0 > 100));
        assert_eq!(x, run());
    }

    #[test]
    fn trace_roundtrip() {
        let sizes = sample_catalog_sizes(20, 3.0, 2);
        let mut p = profile(5.0, 1.0, 20);
        p.mean_size = 3.0;
        let events: Vec<_> = generate_workload(&[p], &sizes, &[0, 4], 10.0).unwrap().collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, events.iter().copied()).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), events);
    }

    #[test]
    fn malformed_trace_rejected() {
        assert!(matches!(read_trace("1.0 0 3".as_bytes()), Err(Error::Trace { line: 1, .. })));
        assert!(read_trace("# c\n1.0 0 0 1".as_bytes()).is_err());
    }
}
