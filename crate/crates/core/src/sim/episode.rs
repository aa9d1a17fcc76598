use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::EpisodeConfig;
use super::sense::sense_events;
use super::world::{spawn_world, step, IntruderKind, WorldState};
use crate::controller::status::{reward, RewardShaping, StatusCode};
use crate::error::{EraError, Result};
use crate::event::EventList;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub terminal: Terminal,
    pub had_warning: bool,
    /// Triggered decisions only.
    pub decision_steps: usize,
    pub sim_steps: usize,
    /// Closest ego-intruder approach over the episode; `None` without intruders.
    pub min_separation: Option<f64>,
    /// Mean wall-clock time per triggered policy call.
    pub wall_reaction_ms: f64,
}

/// Latches warnings and tracks the closest approach while an episode runs.
#[derive(Debug, Clone, Default)]
pub struct EpisodeMonitor {
    pub had_warning: bool,
    pub min_separation: Option<f64>,
}

impl EpisodeMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Updates the latches with `world` and returns the terminal condition,
    /// if one holds. Collision takes precedence over success.
    pub fn classify(
        &mut self,
        world: &WorldState,
        cfg: &EpisodeConfig,
        steps: usize,
    ) -> Option<Terminal> {
        let sep = world.min_separation();
        if let Some(s) = sep {
            self.min_separation = Some(self.min_separation.map_or(s, |m| m.min(s)));
            if s < cfg.warning_radius {
                self.had_warning = true;
            }
        }
        if sep.is_some_and(|s| s < cfg.collision_radius) {
            Some(Terminal::Collision)
        } else if world.distance_to_goal() < cfg.goal_radius {
            Some(Terminal::Success)
        } else if steps >= cfg.max_sim_steps {
            Some(Terminal::Timeout)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntruderRecord {
    pub id: u64,
    pub kind: IntruderKind,
    pub p: Vec3,
    pub v: Vec3,
}

/// One simulation step as written to trajectory logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub ego: Vec3,
    pub vel: Vec3,
    pub intruders: Vec<IntruderRecord>,
    pub action: Vec3,
    pub triggered: bool,
}

impl TrajectoryRecord {
    fn capture(world: &WorldState, action: Vec3, triggered: bool) -> Self {
        Self {
            t: world.time,
            ego: world.ego.position,
            vel: world.ego.velocity,
            intruders: world
                .intruders
                .iter()
                .map(|i| IntruderRecord {
                    id: i.id,
                    kind: i.kind,
                    p: i.position,
                    v: i.velocity,
                })
                .collect(),
            action,
            triggered,
        }
    }
}

/// Serializes a trajectory as JSON Lines.
pub fn trajectory_jsonl(records: &[TrajectoryRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// A controller driving the ego. `events` is `None` when nothing triggered.
pub trait Policy {
    fn act(
        &mut self,
        events: Option<&EventList>,
        world: &WorldState,
        cfg: &EpisodeConfig,
    ) -> Result<Vec3>;
}

impl<F> Policy for F
where
    F: FnMut(Option<&EventList>, &WorldState, &EpisodeConfig) -> Result<Vec3>,
{
    fn act(
        &mut self,
        events: Option<&EventList>,
        world: &WorldState,
        cfg: &EpisodeConfig,
    ) -> Result<Vec3> {
        self(events, world, cfg)
    }
}

/// The potential-field expert as a policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn act(&mut self, _: Option<&EventList>, world: &WorldState, cfg: &EpisodeConfig) -> Result<Vec3> {
        Ok(super::vpf::vpf_action(world, cfg))
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub outcome: EpisodeOutcome,
    /// One status code per triggered decision, in order.
    pub statuses: Vec<StatusCode>,
    /// Simulation step index of each status code.
    pub decision_sim_steps: Vec<usize>,
    /// Whether each decision's successor state violated the warning radius.
    pub decision_warnings: Vec<bool>,
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Runs one episode to its terminal condition.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &mut P,
    cfg: &EpisodeConfig,
    shaping: &RewardShaping,
) -> Result<EpisodeRun> {
    run_episode_from(policy, spawn_world(cfg)?, cfg, shaping)
}

/// Runs one episode from a caller-built start state.
pub fn run_episode_from<P: Policy + ?Sized>(
    policy: &mut P,
    mut world: WorldState,
    cfg: &EpisodeConfig,
    shaping: &RewardShaping,
) -> Result<EpisodeRun> {
    let mut monitor = EpisodeMonitor::new();
    // The start state can already sit inside a warning zone in custom setups.
    if let Some(t) = monitor.classify(&world, cfg, 0) {
        if t != Terminal::Timeout {
            return Err(EraError::Config(format!("episode starts in terminal state {t:?}")));
        }
    }

    let mut statuses = Vec::new();
    let mut decision_sim_steps = Vec::new();
    let mut decision_warnings = Vec::new();
    let mut trajectory = Vec::new();
    let mut latency_ms = 0.0;
    let mut steps = 0usize;
    let mut events = sense_events(&world, cfg);

    let terminal = loop {
        let triggered = events.is_some();
        let started = Instant::now();
        let action = policy.act(events.as_ref(), &world, cfg).map_err(|e| match e {
            EraError::Policy(m) => EraError::Policy(m),
            other => EraError::Policy(other.to_string()),
        })?;
        if triggered {
            latency_ms += started.elapsed().as_secs_f64() * 1e3;
        }
        if !action.is_finite() {
            return Err(EraError::Policy(format!("non-finite action at t={}", world.time)));
        }
        let next = step(&world, action, cfg)?;
        steps += 1;
        let terminal = monitor.classify(&next, cfg, steps);
        let next_events = sense_events(&next, cfg);
        trajectory.push(TrajectoryRecord::capture(&world, action.clamp_norm(cfg.v_max), triggered));

        if let Some(e) = events.take() {
            let r = reward(&world, action, &next, cfg, shaping);
            let warned = next
                .min_separation()
                .is_some_and(|s| s < cfg.warning_radius);
            statuses.push(StatusCode {
                event: e,
                action: action.clamp_norm(cfg.v_max),
                reward: r,
                next_event: if terminal.is_some() { None } else { next_events.clone() },
            });
            decision_sim_steps.push(steps - 1);
            decision_warnings.push(warned);
        }

        world = next;
        events = next_events;
        if let Some(t) = terminal {
            break t;
        }
    };

    let decisions = statuses.len();
    Ok(EpisodeRun {
        outcome: EpisodeOutcome {
            terminal,
            had_warning: monitor.had_warning,
            decision_steps: decisions,
            sim_steps: steps,
            min_separation: monitor.min_separation,
            wall_reaction_ms: if decisions > 0 { latency_ms / decisions as f64 } else { 0.0 },
        },
        statuses,
        decision_sim_steps,
        decision_warnings,
        trajectory,
    })
}
