//! Fixed-difficulty seeded evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::KnowledgeBank;
use crate::controller::{ControllerConfig, DecisionTrace, EraPolicy};
use crate::dynamics::TransitionModel;
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::seed::derive_seed;
use crate::sim::{run_episode, Difficulty, EpisodeConfig, ExpertPolicy, Terminal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Era,
    Expert,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Era => "era",
            Self::Expert => "expert",
        }
    }
}

/// Read-only controller state shared by evaluation workers.
#[derive(Clone, Copy)]
pub struct EraArtifacts<'a> {
    pub bank: &'a KnowledgeBank,
    pub encoder: &'a EncoderParams,
    pub model: &'a TransitionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub terminal: Terminal,
    pub warning: bool,
    pub sim_steps: usize,
    pub decisions: usize,
    pub min_separation: Option<f64>,
    pub expert_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: PolicyKind,
    pub difficulty: Difficulty,
    pub seeds: usize,
    pub seed_list: Vec<u64>,
    pub success_count: usize,
    pub collision_count: usize,
    pub timeout_count: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Share of episodes that entered a warning radius at least once.
    pub warning_rate: f64,
    /// Mean triggered decisions per episode.
    pub avg_steps: f64,
    pub avg_sim_steps: f64,
    /// Mean wall-clock milliseconds per triggered decision.
    pub reaction_ms: f64,
    pub bank_size: usize,
    /// Share of decisions handed to the expert by the energy filter.
    pub expert_fallback_rate: f64,
    pub episodes: Vec<EpisodeSummary>,
}

/// Seeds shared by every policy evaluated under one master seed.
pub fn eval_seed_list(master: u64, seeds: usize) -> Vec<u64> {
    (0..seeds as u64).map(|i| derive_seed(master, "eval", i)).collect()
}

pub fn eval_policy(
    kind: PolicyKind,
    difficulty: Difficulty,
    seeds: usize,
    master: u64,
    base: &EpisodeConfig,
    ctrl: &ControllerConfig,
    era: Option<EraArtifacts<'_>>,
) -> Result<(MetricsReport, Vec<Vec<DecisionTrace>>)> {
    let seed_list = eval_seed_list(master, seeds);
    let tier = base.with_preset(difficulty);
    if kind == PolicyKind::Era && era.is_none() {
        return Err(crate::error::EraError::Config("ERA evaluation needs trained artifacts".into()));
    }
    let runs: Vec<_> = seed_list
        .par_iter()
        .map(|&seed| {
            let cfg = EpisodeConfig { seed, ..tier.clone() };
            match kind {
                PolicyKind::Expert => run_episode(&mut ExpertPolicy, &cfg, &ctrl.shaping).map(|r| (r, Vec::new())),
                PolicyKind::Era => {
                    let a = era.expect("checked above");
                    let mut policy = EraPolicy::new(a.bank, a.encoder, a.model, ctrl);
                    let run = run_episode(&mut policy, &cfg, &ctrl.shaping)?;
                    Ok((run, policy.traces))
                }
            }
        })
        .collect::<Result<_>>()?;

    let n = seeds.max(1) as f64;
    let mut episodes = Vec::with_capacity(seeds);
    let mut all_traces = Vec::with_capacity(seeds);
    let (mut success, mut collision, mut timeout, mut warned) = (0, 0, 0, 0);
    let (mut steps, mut decisions, mut fallbacks, mut latency) = (0usize, 0usize, 0usize, 0.0);
    for ((run, traces), &seed) in runs.into_iter().zip(&seed_list) {
        let o = &run.outcome;
        match o.terminal {
            Terminal::Success => success += 1,
            Terminal::Collision => collision += 1,
            Terminal::Timeout => timeout += 1,
        }
        warned += o.had_warning as usize;
        steps += o.sim_steps;
        decisions += o.decision_steps;
        latency += o.wall_reaction_ms * o.decision_steps as f64;
        let fb = traces.iter().filter(|t| t.expert_fallback()).count();
        fallbacks += fb;
        episodes.push(EpisodeSummary {
            seed,
            terminal: o.terminal,
            warning: o.had_warning,
            sim_steps: o.sim_steps,
            decisions: o.decision_steps,
            min_separation: o.min_separation,
            expert_fallbacks: fb,
        });
        all_traces.push(traces);
    }
    let report = MetricsReport {
        policy: kind,
        difficulty,
        seeds,
        seed_list,
        success_count: success,
        collision_count: collision,
        timeout_count: timeout,
        success_rate: success as f64 / n,
        collision_rate: collision as f64 / n,
        timeout_rate: timeout as f64 / n,
        warning_rate: warned as f64 / n,
        avg_steps: decisions as f64 / n,
        avg_sim_steps: steps as f64 / n,
        reaction_ms: if decisions > 0 { latency / decisions as f64 } else { 0.0 },
        bank_size: era.filter(|_| kind == PolicyKind::Era).map_or(0, |a| a.bank.len()),
        expert_fallback_rate: if decisions > 0 && kind == PolicyKind::Era {
            fallbacks as f64 / decisions as f64
        } else {
            0.0
        },
        episodes,
    };
    Ok((report, all_traces))
}

/// The report with wall-clock fields zeroed, for byte comparisons.
pub fn without_timing(report: &MetricsReport) -> MetricsReport {
    MetricsReport { reaction_ms: 0.0, ..report.clone() }
}
