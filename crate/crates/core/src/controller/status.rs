//! Status codes, reward shaping and the per-run experience buffer.

use serde::{Deserialize, Serialize};

use crate::event::EventList;
use crate::math::Vec3;
use crate::sim::{EpisodeConfig, Terminal, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardShaping {
    pub success: f64,
    pub collision: f64,
    pub warning: f64,
    /// Reward per meter of progress toward the goal.
    pub progress: f64,
}

impl Default for RewardShaping {
    fn default() -> Self {
        Self { success: 1.0, collision: -1.0, warning: -0.1, progress: 0.01 }
    }
}

/// Reward for the transition `prev → next`. The progress term is always
/// added; the warning penalty is not applied on top of a collision.
pub fn reward(prev: &WorldState, _action: Vec3, next: &WorldState, cfg: &EpisodeConfig, shaping: &RewardShaping) -> f64 {
    let progress = prev.distance_to_goal() - next.distance_to_goal();
    let mut r = shaping.progress * progress;
    let sep = next.min_separation();
    if sep.is_some_and(|s| s < cfg.collision_radius) {
        r += shaping.collision;
    } else {
        if sep.is_some_and(|s| s < cfg.warning_radius) {
            r += shaping.warning;
        }
        if next.distance_to_goal() < cfg.goal_radius {
            r += shaping.success;
        }
    }
    r
}

/// One interaction `(E_t, a_t, r_t, E_{t+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCode {
    pub event: EventList,
    pub action: Vec3,
    pub reward: f64,
    /// `None` after a terminal step.
    pub next_event: Option<EventList>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedStatus {
    pub episode: u64,
    pub step: u64,
    pub status: StatusCode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBuffer {
    pub records: Vec<TaggedStatus>,
    pub outcomes: Vec<(u64, Terminal)>,
}

impl ExperienceBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn episode(&self, episode: u64) -> impl Iterator<Item = &TaggedStatus> {
        self.records.iter().filter(move |r| r.episode == episode)
    }

    pub fn close_episode(&mut self, episode: u64, terminal: Terminal) {
        self.outcomes.push((episode, terminal));
    }

    pub fn reward_sum(&self) -> f64 {
        self.records.iter().map(|r| r.status.reward).sum()
    }
}

pub fn record_status(
    buffer: &mut ExperienceBuffer,
    episode: u64,
    step: u64,
    event: EventList,
    action: Vec3,
    reward: f64,
    next_event: Option<EventList>,
) {
    buffer.records.push(TaggedStatus {
        episode,
        step,
        status: StatusCode { event, action, reward, next_event },
    });
}

/// Mean reward over the buffer; `None` when empty.
pub fn j_perf(buffer: &ExperienceBuffer) -> Option<f64> {
    if buffer.is_empty() {
        None
    } else {
        Some(buffer.reward_sum() / buffer.len() as f64)
    }
}
