//! The retrieval controller as a simulation policy.

use super::{decide_timed, ControllerConfig, Decision, DecisionTrace, StageTimings};
use crate::bank::KnowledgeBank;
use crate::dynamics::TransitionModel;
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::event::EventList;
use crate::math::Vec3;
use crate::sim::{attraction_action, vpf_action, EpisodeConfig, Policy, WorldState};

/// Drives the ego with `decide` on triggered steps and plain goal attraction
/// otherwise. Records one trace per triggered step; trace actions stay in
/// the event frame.
pub struct EraPolicy<'a> {
    pub bank: &'a KnowledgeBank,
    pub encoder: &'a EncoderParams,
    pub model: &'a TransitionModel,
    pub cfg: &'a ControllerConfig,
    pub traces: Vec<DecisionTrace>,
    pub timings: Vec<StageTimings>,
}

impl<'a> EraPolicy<'a> {
    pub fn new(
        bank: &'a KnowledgeBank,
        encoder: &'a EncoderParams,
        model: &'a TransitionModel,
        cfg: &'a ControllerConfig,
    ) -> Self {
        Self { bank, encoder, model, cfg, traces: Vec::new(), timings: Vec::new() }
    }

    /// Share of recorded decisions handed to the expert.
    pub fn expert_share(&self) -> f64 {
        if self.traces.is_empty() {
            0.0
        } else {
            self.traces.iter().filter(|t| t.expert_fallback()).count() as f64 / self.traces.len() as f64
        }
    }
}

impl Policy for EraPolicy<'_> {
    fn act(&mut self, events: Option<&EventList>, world: &WorldState, cfg: &EpisodeConfig) -> Result<Vec3> {
        let Some(event) = events else {
            return Ok(attraction_action(world, cfg));
        };
        let (decision, mut trace, timings) = decide_timed(self.bank, self.encoder, self.model, self.cfg, event)?;
        let action = match decision {
            Decision::Action(a) => {
                trace.action = a;
                event.frame.to_world(a)
            }
            Decision::Expert => {
                let a = vpf_action(world, cfg);
                trace.action = event.frame.to_local(a);
                a
            }
        };
        self.traces.push(trace);
        self.timings.push(timings);
        Ok(action)
    }
}
