use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::EpisodeConfig;
use crate::error::{EraError, Result};
use crate::math::Vec3;
use crate::seed::{stream_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntruderKind {
    /// Bird-like wanderer with stochastic velocity perturbations.
    #[serde(rename = "A")]
    TypeA,
    /// Drone-like interceptor steering at the ego's predicted position.
    #[serde(rename = "B")]
    TypeB,
    /// Static obstacle placed near the ego's path.
    #[serde(rename = "C")]
    TypeC,
}

impl IntruderKind {
    pub fn onehot(self) -> [f64; 3] {
        match self {
            IntruderKind::TypeA => [1.0, 0.0, 0.0],
            IntruderKind::TypeB => [0.0, 1.0, 0.0],
            IntruderKind::TypeC => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intruder {
    pub id: u64,
    pub kind: IntruderKind,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Proximity risk in [0, 1]: 1 inside the collision radius, 0 at or beyond
    /// the warning radius.
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub goal: Vec3,
}

/// Complete simulator state including the PRNG that drives intruder noise.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub ego: EgoState,
    pub intruders: Vec<Intruder>,
    pub rng: Rng,
}

impl WorldState {
    /// Smallest ego-intruder center distance, or `None` without intruders.
    pub fn min_separation(&self) -> Option<f64> {
        self.intruders
            .iter()
            .map(|i| i.position.distance(self.ego.position))
            .min_by(f64::total_cmp)
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.ego.position.distance(self.ego.goal)
    }
}

fn proximity_risk(distance: f64, cfg: &EpisodeConfig) -> f64 {
    ((cfg.warning_radius - distance) / (cfg.warning_radius - cfg.collision_radius)).clamp(0.0, 1.0)
}

/// Orthonormal pair spanning the plane perpendicular to `u` (unit).
fn perpendicular_basis(u: Vec3) -> (Vec3, Vec3) {
    let helper = if u.z.abs() < 0.9 {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    let e1 = helper.cross(u).normalized_or_zero();
    let e2 = u.cross(e1);
    (e1, e2)
}

fn sample_kind(rng: &mut Rng, cfg: &EpisodeConfig) -> IntruderKind {
    let u: f64 = rng.random();
    let c = cfg.type_c_share;
    let b = cfg.type_b_share();
    if u < c {
        IntruderKind::TypeC
    } else if u < c + b {
        IntruderKind::TypeB
    } else {
        IntruderKind::TypeA
    }
}

/// Spawns a world: ego at the origin, goal in an annulus, intruders scattered
/// along the route but outside the warning radius of the start.
pub fn spawn_world(cfg: &EpisodeConfig) -> Result<WorldState> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, "world", 0);

    let start = Vec3::ZERO;
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let dist = if cfg.goal_max_distance > cfg.goal_min_distance {
        rng.random_range(cfg.goal_min_distance..cfg.goal_max_distance)
    } else {
        cfg.goal_min_distance
    };
    let alt = if cfg.goal_altitude_spread > 0.0 {
        rng.random_range(-cfg.goal_altitude_spread..cfg.goal_altitude_spread)
    } else {
        0.0
    };
    let goal = Vec3::new(dist * theta.cos(), dist * theta.sin(), alt);
    let route = goal - start;
    let length = route.norm();
    let along = route * (1.0 / length);
    let (e1, e2) = perpendicular_basis(along);

    let mut intruders = Vec::with_capacity(cfg.intruder_count);
    for n in 0..cfg.intruder_count {
        let kind = sample_kind(&mut rng, cfg);
        let mut placed = None;
        for _ in 0..cfg.spawn_retries.max(1) {
            let (s, lateral) = match kind {
                IntruderKind::TypeC => (rng.random_range(0.2..0.85), cfg.static_lateral),
                _ => (rng.random_range(0.15..1.0), cfg.spawn_lateral),
            };
            let r = lateral * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let p = start + along * (s * length) + e1 * (r * phi.cos()) + e2 * (r * phi.sin());
            let clear_of_start = p.distance(start) > cfg.warning_radius;
            let clear_of_goal = p.distance(goal) > cfg.goal_radius + cfg.collision_radius;
            if clear_of_start && clear_of_goal {
                placed = Some(p);
                break;
            }
        }
        let Some(position) = placed else {
            return Err(EraError::Config(format!(
                "could not place intruder {n} after {} retries",
                cfg.spawn_retries
            )));
        };
        let velocity = match kind {
            IntruderKind::TypeA => {
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.3..0.3),
                )
                .normalized_or_zero();
                dir * (cfg.intruder_v_max * rng.random_range(0.3..1.0))
            }
            IntruderKind::TypeB | IntruderKind::TypeC => Vec3::ZERO,
        };
        intruders.push(Intruder {
            id: n as u64 + 1,
            kind,
            position,
            velocity,
            risk: proximity_risk(position.distance(start), cfg),
        });
    }

    Ok(WorldState {
        time: 0.0,
        ego: EgoState {
            position: start,
            velocity: Vec3::ZERO,
            goal,
        },
        intruders,
        rng,
    })
}

/// Velocity command for one intruder given the current world.
pub fn intruder_policy(
    intruder: &Intruder,
    world: &WorldState,
    cfg: &EpisodeConfig,
    rng: &mut Rng,
) -> Vec3 {
    match intruder.kind {
        IntruderKind::TypeC => Vec3::ZERO,
        IntruderKind::TypeA => {
            let sigma = cfg.type_a_sigma;
            if sigma <= 0.0 {
                return intruder.velocity.clamp_norm(cfg.intruder_v_max);
            }
            let normal = Normal::new(0.0, sigma).expect("sigma is positive");
            let bound = 3.0 * sigma;
            let mut draw = || normal.sample(rng).clamp(-bound, bound);
            let noise = Vec3::new(draw(), draw(), draw());
            (intruder.velocity + noise).clamp_norm(cfg.intruder_v_max)
        }
        IntruderKind::TypeB => {
            let lead = world.ego.position + world.ego.velocity * cfg.lead_time;
            (lead - intruder.position).normalized_or_zero() * cfg.interceptor_speed()
        }
    }
}

/// Advances the world by one Euler step under a commanded ego velocity.
pub fn step(world: &WorldState, ego_action: Vec3, cfg: &EpisodeConfig) -> Result<WorldState> {
    if !ego_action.is_finite() {
        return Err(EraError::NonFinite("ego action"));
    }
    let command = ego_action.clamp_norm(cfg.v_max);
    let mut next = world.clone();
    let mut rng = world.rng.clone();
    let velocities: Vec<Vec3> = world
        .intruders
        .iter()
        .map(|i| intruder_policy(i, world, cfg, &mut rng))
        .collect();

    next.ego.velocity = command;
    next.ego.position = world.ego.position + command * cfg.dt;
    for (intruder, v) in next.intruders.iter_mut().zip(velocities) {
        intruder.velocity = v;
        intruder.position = intruder.position + v * cfg.dt;
        intruder.risk = proximity_risk(intruder.position.distance(next.ego.position), cfg);
    }
    next.time = world.time + cfg.dt;
    next.rng = rng;
    Ok(next)
}
