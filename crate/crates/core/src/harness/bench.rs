//! Latency, recall and scaling benchmarks over padded banks.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bank::{BankEntry, KnowledgeBank, Origin, Source};
use crate::controller::{decide_timed, ControllerConfig, RewardShaping};
use crate::dynamics::TransitionModel;
use crate::encoder::{encode, EncoderParams};
use crate::error::{EraError, Result};
use crate::event::EventList;
use crate::seed::{derive_seed, stream_rng};
use crate::sim::{run_episode, Difficulty, EpisodeConfig, ExpertPolicy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
    pub samples: usize,
}

impl Percentiles {
    /// Nearest-rank percentiles.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            samples: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub encode: Percentiles,
    pub retrieve: Percentiles,
    pub stabilize: Percentiles,
    pub fuse: Percentiles,
    pub end_to_end: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBench {
    pub size: usize,
    pub n_list: usize,
    pub n_probe: usize,
    pub stages: StageLatency,
    /// Index search alone.
    pub ann_search: Percentiles,
    /// Full scan alone.
    pub exact_search: Percentiles,
    pub recall_at_k: f64,
    pub memory_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub k: usize,
    pub queries: usize,
    pub bytes_per_entry: usize,
    pub sizes: Vec<SizeBench>,
    /// Median index search time at the largest size over the smallest.
    pub scaling_ratio: Option<f64>,
}

/// Rough resident size of one entry: code, unit copy, index copy, id, action,
/// reliability, origin and map slot.
pub fn bytes_per_entry(d: usize) -> usize {
    3 * d * 8 + 8 + 8 + 24 + 8 + 24 + 16
}

/// Copies `bank` and pads it with jittered copies of its own codes, or keeps
/// its lowest ids, until it holds exactly `size` entries.
pub fn resize_bank(bank: &KnowledgeBank, size: usize, noise: f64, seed: u64) -> Result<KnowledgeBank> {
    if bank.is_empty() {
        return Err(EraError::EmptyBank);
    }
    let sorted = bank.sorted_entries();
    let mut out = KnowledgeBank::new(bank.dim(), bank.seed());
    for e in sorted.iter().take(size) {
        out.insert((*e).clone())?;
    }
    let mut rng = stream_rng(seed, "bench", size as u64);
    let mut next = bank.next_id();
    while out.len() < size {
        let src = sorted[rng.random_range(0..sorted.len())];
        let norm = crate::math::norm(&src.z).max(1e-12);
        let z: Vec<f64> = src
            .z
            .iter()
            .map(|v| {
                let g: f64 = StandardNormal.sample(&mut rng);
                v + noise * norm / (src.z.len() as f64).sqrt() * g
            })
            .collect();
        out.insert(BankEntry {
            id: next,
            z,
            a: src.a,
            r: src.r,
            origin: Origin { episode: u64::MAX, step: next, source: Source::Expert },
        })?;
        next += 1;
    }
    out.build_default_index()?;
    Ok(out)
}

/// Triggered event lists from seeded medium-difficulty expert episodes.
pub fn query_events(base: &EpisodeConfig, count: usize, master: u64) -> Result<Vec<EventList>> {
    let tier = base.with_preset(Difficulty::Medium);
    let mut events = Vec::with_capacity(count);
    let mut i = 0u64;
    while events.len() < count {
        if i > 10 * count as u64 + 100 {
            return Err(EraError::Config("could not collect benchmark queries".into()));
        }
        let cfg = EpisodeConfig { seed: derive_seed(master, "bench-queries", i), ..tier.clone() };
        let run = run_episode(&mut ExpertPolicy, &cfg, &RewardShaping::default())?;
        events.extend(run.statuses.into_iter().map(|s| s.event).take(count - events.len()));
        i += 1;
    }
    Ok(events)
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64() * 1e3)
}

/// Benchmarks one bank with the given query events on the calling thread.
pub fn bench_size(
    bank: &KnowledgeBank,
    encoder: &EncoderParams,
    model: &TransitionModel,
    ctrl: &ControllerConfig,
    events: &[EventList],
) -> Result<SizeBench> {
    let index = bank.index().ok_or(EraError::NoIndex)?;
    let k = ctrl.retrieval.k;
    let mut stage = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let (mut ann_t, mut exact_t) = (Vec::new(), Vec::new());
    let mut hits = 0usize;
    let mut wanted = 0usize;
    for event in events {
        let (_, _, t) = decide_timed(bank, encoder, model, ctrl, event)?;
        for (s, v) in stage.iter_mut().zip([t.encode, t.retrieve, t.stabilize, t.fuse, t.total]) {
            s.push(v);
        }
        let z = encode(encoder, event)?;
        let (ann, ta) = time_ms(|| bank.search_ann(z.as_slice(), k));
        let (exact, te) = time_ms(|| bank.search_exact(z.as_slice(), k));
        let (ann, exact) = (ann?, exact?);
        ann_t.push(ta);
        exact_t.push(te);
        wanted += exact.candidates.len();
        hits += exact
            .candidates
            .iter()
            .filter(|c| ann.candidates.iter().any(|a| a.id == c.id))
            .count();
    }
    let [encode_t, retrieve_t, stabilize_t, fuse_t, total_t] = stage;
    Ok(SizeBench {
        size: bank.len(),
        n_list: index.n_list(),
        n_probe: index.n_probe,
        stages: StageLatency {
            encode: Percentiles::of(&encode_t),
            retrieve: Percentiles::of(&retrieve_t),
            stabilize: Percentiles::of(&stabilize_t),
            fuse: Percentiles::of(&fuse_t),
            end_to_end: Percentiles::of(&total_t),
        },
        ann_search: Percentiles::of(&ann_t),
        exact_search: Percentiles::of(&exact_t),
        recall_at_k: if wanted > 0 { hits as f64 / wanted as f64 } else { 1.0 },
        memory_bytes: bank.len() * bytes_per_entry(bank.dim()),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn bench(
    bank: &KnowledgeBank,
    encoder: &EncoderParams,
    model: &TransitionModel,
    ctrl: &ControllerConfig,
    base: &EpisodeConfig,
    sizes: &[usize],
    queries: usize,
    noise: f64,
    master: u64,
) -> Result<BenchReport> {
    let events = query_events(base, queries, master)?;
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let b = resize_bank(bank, size, noise, master)?;
        out.push(bench_size(&b, encoder, model, ctrl, &events)?);
    }
    let scaling_ratio = match (out.iter().min_by_key(|s| s.size), out.iter().max_by_key(|s| s.size)) {
        (Some(lo), Some(hi)) if hi.size > lo.size && lo.ann_search.p50 > 0.0 => Some(hi.ann_search.p50 / lo.ann_search.p50),
        _ => None,
    };
    Ok(BenchReport {
        k: ctrl.retrieval.k,
        queries: events.len(),
        bytes_per_entry: bytes_per_entry(bank.dim()),
        sizes: out,
        scaling_ratio,
    })
}
