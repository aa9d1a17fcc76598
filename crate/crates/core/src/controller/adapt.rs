//! Bank-level online adaptation: prune on collisions, penalize on warnings,
//! insert novel decisions from successful episodes.

use serde::{Deserialize, Serialize};

use super::{ControllerConfig, DecisionTrace, StatusCode};
use crate::bank::{BankEntry, KnowledgeBank, Origin, Source};
use crate::error::Result;
use crate::math::euclidean;
use crate::sim::Terminal;

/// Everything adaptation needs to know about one triggered decision.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub trace: DecisionTrace,
    pub status: StatusCode,
    /// The successor state violated the warning radius.
    pub warned: bool,
    /// Simulation step index.
    pub step: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub pruned: Vec<u64>,
    pub penalized: usize,
    pub inserted: usize,
    pub prune_aborted: bool,
}

fn implicated<'a>(
    trace: &'a DecisionTrace,
    bank: &'a KnowledgeBank,
    cfg: &'a ControllerConfig,
) -> impl Iterator<Item = u64> + 'a {
    trace
        .cands
        .iter()
        .filter(move |c| !trace.expert_fallback() && c.weight > cfg.implication_threshold)
        .filter(move |c| {
            bank.get(c.id)
                .is_some_and(|e| !(cfg.expert_immune && e.origin.source == Source::Expert))
        })
        .map(|c| c.id)
}

/// Applies the three adaptation rules for one closed episode.
pub fn adapt(
    bank: &mut KnowledgeBank,
    records: &[DecisionRecord],
    terminal: Terminal,
    episode: u64,
    cfg: &ControllerConfig,
) -> Result<AdaptReport> {
    let mut report = AdaptReport::default();

    if terminal == Terminal::Collision {
        if let Some(last) = records.last() {
            let ids: Vec<u64> = implicated(&last.trace, bank, cfg).collect();
            if !ids.is_empty() && ids.len() >= bank.len() {
                log::warn!("episode {episode}: pruning would empty the bank, skipped");
                report.prune_aborted = true;
            } else {
                for id in ids {
                    bank.prune(id)?;
                    report.pruned.push(id);
                }
            }
        }
    }

    for rec in records.iter().filter(|r| r.warned) {
        let ids: Vec<u64> = implicated(&rec.trace, bank, cfg).collect();
        for id in ids {
            bank.penalize(id, cfg.penalty_factor, cfg.reliability_floor)?;
            report.penalized += 1;
        }
    }

    if terminal == Terminal::Success {
        for rec in records {
            let novel = bank
                .nearest_similarity(&rec.trace.z)?
                .is_none_or(|s| s < cfg.novelty_gate);
            if novel {
                let id = bank.next_id();
                bank.insert(BankEntry {
                    id,
                    z: rec.trace.z.clone(),
                    a: rec.status.event.frame.to_local(rec.status.action),
                    r: 1.0,
                    origin: Origin { episode, step: rec.step, source: Source::Online },
                })?;
                report.inserted += 1;
            }
        }
    }
    Ok(report)
}

/// `Σ wᵢ‖z − zᵢ‖` over the filter survivors; `None` when the expert acted or
/// a survivor is no longer in the bank.
pub fn r_phys(trace: &DecisionTrace, bank: &KnowledgeBank) -> Option<f64> {
    if trace.expert_fallback() {
        return None;
    }
    let mut total = 0.0;
    for c in trace.survivors() {
        total += c.final_weight * euclidean(&trace.z, &bank.get(c.id)?.z);
    }
    Some(total)
}
