//! Chunked, parallel, deterministic driver for many pulses.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::chip::{Channel, ChipConfig, DetectorSpec, PerChannel};
use crate::montecarlo::pulse::{PulseOutcome, PulseSimulator};
use crate::montecarlo::rng::{substream, Stage};
use crate::montecarlo::tags::{
    sort_tags, BinaryTagWriter, StreamMeta, TagSink, TagStream, TimeTag,
};
use crate::{Error, Result};

/// Pulses per rng chunk. Fixed, so the random streams never depend on the
/// number of workers.
pub const CHUNK_PULSES: u64 = 1 << 22;
/// Chunks simulated in parallel before their tags are handed to the sink.
const BATCH_CHUNKS: u64 = 64;

/// How pulses are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Every pulse draws its pair numbers; slow reference path.
    PerPulse,
    /// Jumps straight to pulses holding at least one pair that can reach
    /// a detector. Same law as `PerPulse`.
    #[default]
    SkipAhead,
    /// Only pulses in which both sources hold a detectable pair. Exact for
    /// same-pulse four-folds and anything else that needs a photon from
    /// each source; singles and cross-pulse statistics are not reproduced.
    /// Dark clicks are drawn only within one pulse period of those pulses.
    BothSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParameter {
    RelativeDelay,
    Voltage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub parameter: ScanParameter,
    pub values: Vec<f64>,
}

impl Scan {
    /// Configuration for each scan value.
    pub fn configs(&self, base: &ChipConfig) -> Result<Vec<ChipConfig>> {
        self.values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    return Err(Error::config(format!("scan value {v} is not finite")));
                }
                let mut cfg = base.clone();
                match self.parameter {
                    ScanParameter::RelativeDelay => cfg.relative_delay_ps = v,
                    ScanParameter::Voltage => cfg.voltage_v = v,
                }
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub sampling: Sampling,
    pub dark_counts: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn new(sampling: Sampling) -> Self {
        RunOptions {
            sampling,
            dark_counts: true,
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub cfg: ChipConfig,
    pub n_pulses: u64,
    pub seed: u64,
    pub scan: Option<Scan>,
    pub options: RunOptions,
}

impl RunPlan {
    pub fn new(cfg: ChipConfig, n_pulses: u64, seed: u64) -> Self {
        RunPlan {
            cfg,
            n_pulses,
            seed,
            scan: None,
            options: RunOptions::new(Sampling::SkipAhead),
        }
    }

    pub fn configs(&self) -> Result<Vec<ChipConfig>> {
        self.cfg.validate()?;
        match &self.scan {
            None => Ok(vec![self.cfg.clone()]),
            Some(scan) => scan.configs(&self.cfg),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub pulses: u64,
    /// Pulses actually simulated (holding at least one detectable pair).
    pub events: u64,
    pub truncated: u64,
    /// Same-pulse four-folds keyed by the number of detectable pairs in
    /// the pulse.
    pub fourfold_by_pairs: BTreeMap<u32, u64>,
}

impl RunStats {
    fn absorb(&mut self, other: RunStats) {
        self.pulses += other.pulses;
        self.events += other.events;
        self.truncated += other.truncated;
        for (k, v) in other.fourfold_by_pairs {
            *self.fourfold_by_pairs.entry(k).or_default() += v;
        }
    }

    pub fn fourfold(&self) -> u64 {
        self.fourfold_by_pairs.values().sum()
    }

    /// Four-folds from pulses holding more than two detectable pairs.
    pub fn multipair_fourfold(&self) -> u64 {
        self.fourfold_by_pairs.range(3..).map(|(_, v)| v).sum()
    }
}

fn meta_for(cfg: &ChipConfig, seed: u64, pulses: u64, truncated: u64) -> StreamMeta {
    StreamMeta {
        seed,
        cfg_sha256: cfg.sha256(),
        pulses,
        truncated,
    }
}

/// Poisson dark clicks on every channel, uniform over `[start_ps, end_ps)`.
pub fn dark_tags<R: Rng + ?Sized>(
    detectors: &PerChannel<DetectorSpec>,
    start_ps: u64,
    end_ps: u64,
    resolution_ps: u64,
    rng: &mut R,
) -> Vec<TimeTag> {
    let mut tags = Vec::new();
    if end_ps <= start_ps {
        return tags;
    }
    let span = end_ps - start_ps;
    let res = resolution_ps.max(1);
    for ch in Channel::ALL {
        let mean = detectors.get(ch).dark_rate_hz * span as f64 * 1e-12;
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
        for _ in 0..n {
            let t = start_ps + rng.random_range(0..span);
            tags.push(TimeTag::new(ch, t / res * res));
        }
    }
    tags
}

/// Adds dark clicks over `duration_s` from the start of the stream.
pub fn add_dark_counts<R: Rng + ?Sized>(
    mut stream: TagStream,
    detectors: &PerChannel<DetectorSpec>,
    duration_s: f64,
    resolution_ps: u64,
    rng: &mut R,
) -> Result<TagStream> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::domain(format!(
            "duration {duration_s} s must be positive"
        )));
    }
    let mut dark = dark_tags(
        detectors,
        0,
        (duration_s * 1e12).round() as u64,
        resolution_ps,
        rng,
    );
    sort_tags(&mut dark);
    stream.merge(&dark);
    Ok(stream)
}

struct ChunkOutput {
    tags: Vec<TimeTag>,
    stats: RunStats,
}

struct Worker<'a> {
    cfg: &'a ChipConfig,
    sim: PulseSimulator,
    seed: u64,
    n_pulses: u64,
    options: RunOptions,
    /// Emitter groups that must each hold a detectable pair.
    groups: Vec<Vec<usize>>,
    /// Probability that a pulse satisfies the group condition.
    p_event: f64,
}

impl<'a> Worker<'a> {
    fn new(cfg: &'a ChipConfig, n_pulses: u64, seed: u64, options: RunOptions) -> Result<Self> {
        let sim = PulseSimulator::new(cfg)?;
        let live: Vec<usize> = (0..sim.emitters().len())
            .filter(|&e| sim.emitters()[e].visible.prob_zero() < 1.0)
            .collect();
        let groups: Vec<Vec<usize>> = match options.sampling {
            Sampling::PerPulse | Sampling::SkipAhead => vec![live],
            Sampling::BothSources => (0..2)
                .map(|s| {
                    live.iter()
                        .copied()
                        .filter(|&e| sim.emitters()[e].source == s)
                        .collect()
                })
                .collect(),
        };
        let p_event = groups
            .iter()
            .map(|g| {
                1.0 - g
                    .iter()
                    .map(|&e| sim.emitters()[e].visible.prob_zero())
                    .product::<f64>()
            })
            .product();
        Ok(Worker {
            cfg,
            sim,
            seed,
            n_pulses,
            options,
            groups,
            p_event,
        })
    }

    fn chunks(&self) -> u64 {
        self.n_pulses.div_ceil(CHUNK_PULSES)
    }

    fn chunk(&self, chunk: u64) -> ChunkOutput {
        let start = chunk * CHUNK_PULSES;
        let end = (start + CHUNK_PULSES).min(self.n_pulses);
        let mut out = ChunkOutput {
            tags: Vec::new(),
            stats: RunStats {
                pulses: end - start,
                ..RunStats::default()
            },
        };
        let record = |out: &mut ChunkOutput, outcome: PulseOutcome| {
            if outcome.visible_pairs > 0 {
                out.stats.events += 1;
            }
            if outcome.truncated {
                out.stats.truncated += 1;
            }
            if outcome.is_fourfold() {
                *out.stats
                    .fourfold_by_pairs
                    .entry(outcome.visible_pairs)
                    .or_default() += 1;
            }
            out.tags.extend(outcome.tags);
        };
        let mut event_pulses = Vec::new();
        match self.options.sampling {
            Sampling::PerPulse => {
                let mut rng = substream(self.seed, chunk, Stage::PerPulse);
                for index in start..end {
                    let outcome = self.sim.simulate_pulse(index, &mut rng);
                    record(&mut out, outcome);
                }
            }
            Sampling::SkipAhead | Sampling::BothSources => {
                if self.p_event > 0.0 {
                    let mut rng = substream(self.seed, chunk, Stage::Pairs);
                    let ln_miss = (-self.p_event).ln_1p();
                    let mut counts = vec![0u64; self.sim.emitters().len()];
                    let mut index = start;
                    loop {
                        if self.p_event < 1.0 {
                            let u: f64 = 1.0 - rng.random::<f64>();
                            let gap = (u.ln() / ln_miss).floor();
                            if gap >= (end - index) as f64 {
                                break;
                            }
                            index += gap as u64;
                        }
                        if index >= end {
                            break;
                        }
                        counts.iter_mut().for_each(|c| *c = 0);
                        for group in &self.groups {
                            self.sample_group(group, &mut counts, &mut rng);
                        }
                        let mut event_rng = substream(self.seed, index, Stage::Event);
                        let outcome = self.sim.simulate_visible(index, &counts, &mut event_rng);
                        record(&mut out, outcome);
                        event_pulses.push(index);
                        index += 1;
                    }
                }
            }
        }
        if self.options.dark_counts {
            let mut rng = substream(self.seed, chunk, Stage::Dark);
            let spans = match self.options.sampling {
                Sampling::BothSources => self.event_spans(start, end, &event_pulses),
                _ => vec![(self.sim.pulse_time_ps(start), self.sim.pulse_time_ps(end))],
            };
            for (t0, t1) in spans {
                out.tags.extend(dark_tags(
                    &self.cfg.detectors,
                    t0,
                    t1,
                    self.cfg.time_resolution_ps(),
                    &mut rng,
                ));
            }
        }
        sort_tags(&mut out.tags);
        out
    }

    /// Time spans within one period of each event pulse, merged and
    /// clipped to the chunk.
    fn event_spans(&self, start: u64, end: u64, pulses: &[u64]) -> Vec<(u64, u64)> {
        let mut spans: Vec<(u64, u64)> = Vec::new();
        for &p in pulses {
            let t0 = self.sim.pulse_time_ps(p.saturating_sub(1).max(start));
            let t1 = self.sim.pulse_time_ps((p + 1).min(end));
            match spans.last_mut() {
                Some(last) if t0 <= last.1 => last.1 = last.1.max(t1),
                _ => spans.push((t0, t1)),
            }
        }
        spans
    }

    /// Visible pair numbers for a group, conditioned on at least one.
    fn sample_group<R: Rng + ?Sized>(&self, group: &[usize], counts: &mut [u64], rng: &mut R) {
        let emitters = self.sim.emitters();
        let mut forced = true;
        for (k, &e) in group.iter().enumerate() {
            let dist = &emitters[e].visible;
            if forced {
                let rest_zero: f64 = group[k..]
                    .iter()
                    .map(|&j| emitters[j].visible.prob_zero())
                    .product();
                let p_here = (1.0 - dist.prob_zero()) / (1.0 - rest_zero);
                if k + 1 == group.len() || rng.random::<f64>() < p_here {
                    counts[e] = dist.sample_nonzero(rng);
                    forced = false;
                }
            } else {
                counts[e] = dist.sample(rng);
            }
        }
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Simulates `n_pulses` of `cfg`, feeding time-ordered tags to `sink`.
pub fn run_into<S: TagSink + Send>(
    cfg: &ChipConfig,
    n_pulses: u64,
    seed: u64,
    options: RunOptions,
    sink: &mut S,
) -> Result<RunStats> {
    if n_pulses == 0 {
        return Err(Error::domain("n_pulses must be positive"));
    }
    let worker = Worker::new(cfg, n_pulses, seed, options)?;
    with_pool(options.workers, || {
        let mut stats = RunStats::default();
        let chunks = worker.chunks();
        let mut first = 0;
        while first < chunks {
            let last = (first + BATCH_CHUNKS).min(chunks);
            let outputs: Vec<ChunkOutput> = (first..last)
                .into_par_iter()
                .map(|c| worker.chunk(c))
                .collect();
            for out in outputs {
                sink.accept(&out.tags)?;
                stats.absorb(out.stats);
            }
            first = last;
        }
        Ok(stats)
    })?
}

/// Simulates one configuration into memory.
pub fn run_single(
    cfg: &ChipConfig,
    n_pulses: u64,
    seed: u64,
    options: RunOptions,
) -> Result<(TagStream, RunStats)> {
    let mut tags = Vec::new();
    let stats = run_into(cfg, n_pulses, seed, options, &mut tags)?;
    let meta = meta_for(cfg, seed, n_pulses, stats.truncated);
    Ok((TagStream::new(meta, tags)?, stats))
}

/// One stream per scan point (or a single stream without a scan). Scan
/// points share the seed, so pair draws are common across points.
pub fn run(plan: &RunPlan) -> Result<Vec<TagStream>> {
    plan.configs()?
        .iter()
        .map(|cfg| run_single(cfg, plan.n_pulses, plan.seed, plan.options).map(|(s, _)| s))
        .collect()
}

/// Streams a run straight to a binary tag file; nothing is left behind
/// on failure.
pub fn run_to_file(
    cfg: &ChipConfig,
    n_pulses: u64,
    seed: u64,
    options: RunOptions,
    path: impl AsRef<Path>,
) -> Result<RunStats> {
    let meta = meta_for(cfg, seed, n_pulses, 0);
    let mut writer = BinaryTagWriter::create(path, &meta)?;
    let stats = run_into(cfg, n_pulses, seed, options, &mut writer)?;
    writer.finish()?;
    Ok(stats)
}
