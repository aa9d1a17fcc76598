//! Expert demonstration dataset.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::RewardShaping;
use crate::error::{io_err, EraError, Result};
use crate::event::EventList;
use crate::math::Vec3;
use crate::seed::{derive_seed, stream_rng, Rng};
use crate::sim::{curriculum, run_episode, vpf_action, EpisodeConfig, Policy, Terminal, WorldState, CURRICULUM_EPISODES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub episode: u64,
    pub step: u64,
    pub event: EventList,
    /// Expert action in the event frame.
    pub a_star: Vec3,
    /// Action actually executed, in the event frame.
    pub executed: Vec3,
}

/// VPF expert whose triggered commands are perturbed by isotropic Gaussian
/// noise before execution. The clean commands are kept as labels.
pub struct NoisyExpert {
    rng: Rng,
    sigma: f64,
    pub labels: Vec<Vec3>,
}

impl NoisyExpert {
    pub fn new(sigma: f64, rng: Rng) -> Self {
        Self { rng, sigma, labels: Vec::new() }
    }
}

impl Policy for NoisyExpert {
    fn act(&mut self, events: Option<&EventList>, world: &WorldState, cfg: &EpisodeConfig) -> Result<Vec3> {
        let clean = vpf_action(world, cfg);
        if events.is_none() {
            return Ok(clean);
        }
        self.labels.push(clean);
        if self.sigma == 0.0 {
            return Ok(clean);
        }
        let mut draw = || -> f64 { StandardNormal.sample(&mut self.rng) };
        let noise = Vec3::new(draw(), draw(), draw()) * self.sigma;
        Ok((clean + noise).clamp_norm(cfg.v_max))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub episodes: usize,
    pub retained_episodes: usize,
    pub records: usize,
    pub success: usize,
    pub collision: usize,
    pub timeout: usize,
}

/// Episode configuration of demonstration episode `i`: the curriculum
/// schedule cycled over the run, with a per-episode world seed.
pub fn gen_episode_config(base: &EpisodeConfig, master: u64, i: usize) -> EpisodeConfig {
    let mut cfg = curriculum(i % CURRICULUM_EPISODES, base);
    cfg.seed = derive_seed(master, "world", i as u64);
    cfg
}

/// Runs `episodes` expert episodes with execution noise `sigma` (m/s) and
/// keeps the triggered decisions of the successful ones.
pub fn gen_dataset(
    base: &EpisodeConfig,
    episodes: usize,
    sigma: f64,
    master: u64,
) -> Result<(Vec<DatasetRecord>, GenSummary)> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(EraError::Config(format!("gen_noise = {sigma} must be finite and non-negative")));
    }
    let runs: Vec<_> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let cfg = gen_episode_config(base, master, i);
            let mut expert = NoisyExpert::new(sigma, stream_rng(master, "noise", i as u64));
            run_episode(&mut expert, &cfg, &RewardShaping::default()).map(|r| (i, r, expert.labels))
        })
        .collect::<Result<_>>()?;

    let mut summary = GenSummary { episodes, ..GenSummary::default() };
    let mut records = Vec::new();
    for (i, run, labels) in runs {
        match run.outcome.terminal {
            Terminal::Success => summary.success += 1,
            Terminal::Collision => summary.collision += 1,
            Terminal::Timeout => summary.timeout += 1,
        }
        if run.outcome.terminal != Terminal::Success {
            continue;
        }
        summary.retained_episodes += 1;
        for ((status, &step), label) in run.statuses.into_iter().zip(&run.decision_sim_steps).zip(labels) {
            let frame = status.event.frame;
            records.push(DatasetRecord {
                episode: i as u64,
                step: step as u64,
                event: status.event,
                a_star: frame.to_local(label),
                executed: frame.to_local(status.action),
            });
        }
    }
    summary.records = records.len();
    if episodes > 0 && summary.retained_episodes == 0 {
        return Err(EraError::Config(format!(
            "none of {episodes} expert episodes succeeded; lower the intruder count or speed"
        )));
    }
    Ok((records, summary))
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| EraError::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
