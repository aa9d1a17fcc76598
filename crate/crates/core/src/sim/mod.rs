//! Deterministic kinematic world with adversarial intruders and the
//! potential-field expert.

pub mod config;
pub mod episode;
pub mod sense;
pub mod vpf;
pub mod world;

pub use config::{curriculum, curriculum_difficulty, Difficulty, EpisodeConfig, CURRICULUM_EPISODES};
pub use episode::{
    run_episode, run_episode_from, trajectory_jsonl, EpisodeMonitor, EpisodeOutcome, EpisodeRun, ExpertPolicy,
    Policy, Terminal, TrajectoryRecord,
};
pub use sense::sense_events;
pub use vpf::{attraction_action, potential, vpf_action, vpf_force};
pub use world::{intruder_policy, spawn_world, step, EgoState, Intruder, IntruderKind, WorldState};
