//! Curriculum run with the retrieval controller and per-episode adaptation.

use serde::{Deserialize, Serialize};

use crate::bank::KnowledgeBank;
use crate::controller::{
    adapt, j_perf, r_phys, record_status, ControllerConfig, DecisionRecord, DecisionTrace, EraPolicy,
    ExperienceBuffer,
};
use crate::dynamics::TransitionModel;
use crate::encoder::EncoderParams;
use crate::error::{EraError, Result};
use crate::seed::derive_seed;
use crate::sim::{curriculum, run_episode, EpisodeConfig, Terminal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEpisodeLog {
    pub episode: usize,
    pub difficulty: f64,
    pub intruders: usize,
    pub terminal: Terminal,
    pub success: bool,
    pub collision: bool,
    pub warning: bool,
    pub decisions: usize,
    pub sim_steps: usize,
    pub expert_share: f64,
    pub j_perf: Option<f64>,
    pub r_phys: Option<f64>,
    /// `λ_p·R_phys − λ_r·J_perf`.
    pub objective: Option<f64>,
    pub bank_size: usize,
    pub pruned: usize,
    pub penalized: usize,
    pub inserted: usize,
}

/// Configuration of curriculum episode `i`.
pub fn train_episode_config(base: &EpisodeConfig, master: u64, i: usize) -> EpisodeConfig {
    let mut cfg = curriculum(i, base);
    cfg.seed = derive_seed(master, "curriculum", i as u64);
    cfg
}

/// Runs `episodes` curriculum episodes, adapting `bank` after each one and
/// rebuilding its index once stale. Traces are appended to `traces` when given.
pub fn train_curriculum(
    bank: &mut KnowledgeBank,
    encoder: &EncoderParams,
    model: &TransitionModel,
    base: &EpisodeConfig,
    ctrl: &ControllerConfig,
    episodes: usize,
    master: u64,
    mut traces: Option<&mut Vec<DecisionTrace>>,
) -> Result<Vec<TrainEpisodeLog>> {
    let mut logs = Vec::with_capacity(episodes);
    for i in 0..episodes {
        if bank.is_empty() {
            return Err(EraError::EmptyBank);
        }
        let cfg = train_episode_config(base, master, i);
        let mut policy = EraPolicy::new(bank, encoder, model, ctrl);
        let run = run_episode(&mut policy, &cfg, &ctrl.shaping)?;
        let expert_share = policy.expert_share();
        let episode_traces = std::mem::take(&mut policy.traces);

        let mut buffer = ExperienceBuffer::new();
        let mut records = Vec::with_capacity(run.statuses.len());
        let mut phys = Vec::new();
        for (((status, trace), &warned), &step) in run
            .statuses
            .into_iter()
            .zip(episode_traces)
            .zip(&run.decision_warnings)
            .zip(&run.decision_sim_steps)
        {
            record_status(
                &mut buffer,
                i as u64,
                step as u64,
                status.event.clone(),
                status.action,
                status.reward,
                status.next_event.clone(),
            );
            if let Some(r) = r_phys(&trace, bank) {
                phys.push(r);
            }
            if let Some(t) = traces.as_deref_mut() {
                t.push(trace.clone());
            }
            records.push(DecisionRecord { trace, status, warned, step: step as u64 });
        }
        buffer.close_episode(i as u64, run.outcome.terminal);
        let jp = j_perf(&buffer);
        let rp = (!phys.is_empty()).then(|| phys.iter().sum::<f64>() / phys.len() as f64);

        let report = adapt(bank, &records, run.outcome.terminal, i as u64, ctrl)?;
        if !bank.is_empty() && !bank.has_fresh_index() {
            bank.build_default_index()?;
        }

        logs.push(TrainEpisodeLog {
            episode: i,
            difficulty: cfg.difficulty,
            intruders: cfg.intruder_count,
            terminal: run.outcome.terminal,
            success: run.outcome.terminal == Terminal::Success,
            collision: run.outcome.terminal == Terminal::Collision,
            warning: run.outcome.had_warning,
            decisions: run.outcome.decision_steps,
            sim_steps: run.outcome.sim_steps,
            expert_share,
            j_perf: jp,
            r_phys: rp,
            objective: rp.zip(jp).map(|(r, j)| ctrl.lambda_p * r - ctrl.lambda_r * j),
            bank_size: bank.len(),
            pruned: report.pruned.len(),
            penalized: report.penalized,
            inserted: report.inserted,
        });
        log::info!(
            "episode {i}: {:?}, {} decisions, bank {}",
            run.outcome.terminal,
            run.outcome.decision_steps,
            bank.len()
        );
    }
    Ok(logs)
}
