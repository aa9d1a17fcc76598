use serde::{Deserialize, Serialize};

use crate::error::{EraError, Result};
use crate::kv::{parse_value, KvConfig};

/// Episodes over which the curriculum ramps difficulty from 0 to 1.
pub const CURRICULUM_EPISODES: usize = 100;

/// Fixed-difficulty benchmark tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extreme,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Medium,
        Difficulty::Hard,
        Difficulty::Extreme,
    ];

    /// `(difficulty ξ, intruder count)` for the tier.
    pub fn preset(self) -> (f64, usize) {
        match self {
            Difficulty::Easy => (0.0, 5),
            Difficulty::Medium => (0.35, 10),
            Difficulty::Hard => (0.7, 17),
            Difficulty::Extreme => (1.0, 25),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extreme => "extreme",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = EraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            "extreme" => Ok(Difficulty::Extreme),
            other => Err(EraError::Config(format!("unknown difficulty {other:?}"))),
        }
    }
}

/// Everything needed to spawn and run one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Curriculum difficulty ξ in [0, 1].
    pub difficulty: f64,
    pub intruder_count: usize,
    /// Integration step (s).
    pub dt: f64,
    pub max_sim_steps: usize,
    /// Event trigger distance (m); strict inequality.
    pub trigger_radius: f64,
    pub warning_radius: f64,
    pub collision_radius: f64,
    pub goal_radius: f64,
    /// Ego speed limit (m/s).
    pub v_max: f64,
    /// Intruder speed limit at ξ = 0 (m/s); scaled up by the curriculum.
    pub intruder_v_max: f64,
    pub seed: u64,

    pub goal_min_distance: f64,
    pub goal_max_distance: f64,
    pub goal_altitude_spread: f64,
    /// Lateral half-width of the spawn corridor for moving intruders (m).
    pub spawn_lateral: f64,
    /// Lateral jitter of static obstacles around the ego-goal segment (m).
    pub static_lateral: f64,
    pub spawn_retries: usize,

    pub k_att: f64,
    pub k_rep: f64,
    /// Per-intruder cap on repulsion magnitude (m/s), reached at overlap.
    pub repulsion_cap: f64,

    /// Per-step velocity noise of TypeA intruders (m/s).
    pub type_a_sigma: f64,
    /// Ego lead-prediction horizon used by TypeB interceptors (s).
    pub lead_time: f64,
    /// Probability that a spawned intruder is TypeB at ξ = 0 and ξ = 1.
    pub type_b_share_min: f64,
    pub type_b_share_max: f64,
    /// Probability that a spawned intruder is TypeC.
    pub type_c_share: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            difficulty: 0.0,
            intruder_count: 5,
            dt: 0.05,
            max_sim_steps: 600,
            trigger_radius: 10.0,
            warning_radius: 2.0,
            collision_radius: 0.5,
            goal_radius: 1.0,
            v_max: 5.0,
            intruder_v_max: 2.0,
            seed: 0,
            goal_min_distance: 30.0,
            goal_max_distance: 45.0,
            goal_altitude_spread: 2.0,
            spawn_lateral: 6.0,
            static_lateral: 1.0,
            spawn_retries: 200,
            k_att: 1.0,
            k_rep: 100.0,
            repulsion_cap: 1000.0,
            type_a_sigma: 0.3,
            lead_time: 1.0,
            type_b_share_min: 0.1,
            type_b_share_max: 0.5,
            type_c_share: 0.3,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EraError::Config(m.to_string()));
        if !(self.difficulty >= 0.0 && self.difficulty <= 1.0) {
            return bad("difficulty must lie in [0, 1]");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.collision_radius > 0.0
            && self.collision_radius < self.warning_radius
            && self.warning_radius < self.trigger_radius)
        {
            return bad("radii must satisfy 0 < collision < warning < trigger");
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal_radius must be positive");
        }
        if !(self.v_max > 0.0 && self.intruder_v_max >= 0.0) {
            return bad("speed limits must be positive");
        }
        if !(self.goal_min_distance > self.goal_radius
            && self.goal_max_distance >= self.goal_min_distance)
        {
            return bad("goal annulus must satisfy goal_radius < min <= max");
        }
        let shares = [self.type_b_share_min, self.type_b_share_max, self.type_c_share];
        if shares.iter().any(|s| !(0.0..=1.0).contains(s))
            || self.type_b_share_max + self.type_c_share > 1.0
            || self.type_b_share_min + self.type_c_share > 1.0
        {
            return bad("intruder kind shares must be probabilities summing to at most 1");
        }
        if self.k_att < 0.0 || self.k_rep < 0.0 || self.repulsion_cap <= 0.0 {
            return bad("potential gains must be non-negative");
        }
        if self.type_a_sigma < 0.0 || self.lead_time < 0.0 {
            return bad("type_a_sigma and lead_time must be non-negative");
        }
        Ok(())
    }

    /// Speed of TypeB interceptors at this difficulty.
    pub fn interceptor_speed(&self) -> f64 {
        self.intruder_v_max * (0.5 + 0.5 * self.difficulty)
    }

    /// Share of TypeB intruders at this difficulty.
    pub fn type_b_share(&self) -> f64 {
        self.type_b_share_min + (self.type_b_share_max - self.type_b_share_min) * self.difficulty
    }

    /// Fixed-difficulty benchmark config derived from `self`.
    pub fn with_preset(&self, tier: Difficulty) -> Self {
        let (xi, count) = tier.preset();
        let mut cfg = self.clone();
        cfg.difficulty = xi;
        cfg.intruder_count = count;
        cfg.intruder_v_max = self.intruder_v_max * speed_scale(xi);
        cfg
    }
}

fn speed_scale(xi: f64) -> f64 {
    1.0 + 0.5 * xi
}

/// Curriculum difficulty for an episode index.
pub fn curriculum_difficulty(episode_idx: usize) -> f64 {
    (episode_idx as f64 / (CURRICULUM_EPISODES - 1) as f64).min(1.0)
}

/// Config for curriculum episode `episode_idx`: density 5 → 25 and faster
/// intruders as ξ grows.
pub fn curriculum(episode_idx: usize, base: &EpisodeConfig) -> EpisodeConfig {
    let xi = curriculum_difficulty(episode_idx);
    let mut cfg = base.clone();
    cfg.difficulty = xi;
    cfg.intruder_count = (5.0 + 20.0 * xi).round() as usize;
    cfg.intruder_v_max = base.intruder_v_max * speed_scale(xi);
    cfg
}

macro_rules! kv_fields {
    ($self:ident, $key:ident, $value:ident; $($name:ident),* $(,)?) => {
        match $key {
            $(stringify!($name) => { $self.$name = parse_value($key, $value)?; Ok(true) })*
            _ => Ok(false),
        }
    };
}

macro_rules! kv_entries {
    ($self:ident; $($name:ident),* $(,)?) => {
        vec![$((stringify!($name).to_string(), $self.$name.to_string())),*]
    };
}


impl KvConfig for EpisodeConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        kv_fields!(self, key, value;
            difficulty, intruder_count, dt, max_sim_steps, trigger_radius, warning_radius,
            collision_radius, goal_radius, v_max, intruder_v_max, seed, goal_min_distance,
            goal_max_distance, goal_altitude_spread, spawn_lateral, static_lateral,
            spawn_retries, k_att, k_rep, repulsion_cap, type_a_sigma, lead_time,
            type_b_share_min, type_b_share_max, type_c_share)
    }

    fn entries(&self) -> Vec<(String, String)> {
        kv_entries!(self;
            difficulty, intruder_count, dt, max_sim_steps, trigger_radius, warning_radius,
            collision_radius, goal_radius, v_max, intruder_v_max, seed, goal_min_distance,
            goal_max_distance, goal_altitude_spread, spawn_lateral, static_lateral,
            spawn_retries, k_att, k_rep, repulsion_cap, type_a_sigma, lead_time,
            type_b_share_min, type_b_share_max, type_c_share)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kv::KeyValues;

    #[test]
    fn curriculum_endpoints() {
        let base = EpisodeConfig::default();
        let c0 = curriculum(0, &base);
        assert_eq!(c0.difficulty, 0.0);
        assert_eq!(c0.intruder_count, 5);
        let c99 = curriculum(99, &base);
        assert_eq!(c99.difficulty, 1.0);
        assert_eq!(c99.intruder_count, 25);
        let c50 = curriculum(50, &base);
        assert!((c50.difficulty - 50.0 / 99.0).abs() < 1e-15);
        assert!((c50.difficulty - 0.505).abs() < 1e-3);
        assert_eq!(c50.intruder_count, 15);
        assert!(c99.intruder_v_max > c0.intruder_v_max);
        assert_eq!(curriculum(250, &base).difficulty, 1.0);
    }

    #[test]
    fn kv_round_trip_covers_every_field() {
        let mut cfg = EpisodeConfig::default();
        cfg.seed = 99;
        cfg.trigger_radius = 12.5;
        let text = cfg.to_kv_string();
        let mut back = EpisodeConfig::default();
        crate::kv::apply_all(&KeyValues::parse(&text, "t").unwrap(), &mut [&mut back]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(text.lines().count(), 25);
    }

    #[test]
    fn rejects_inverted_radii() {
        let cfg = EpisodeConfig {
            warning_radius: 0.4,
            ..EpisodeConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
