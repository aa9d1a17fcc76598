//! Virtual potential field expert: quadratic goal attraction plus inverse
//! distance repulsion from every intruder inside the warning radius.

use super::config::EpisodeConfig;
use super::world::WorldState;
use crate::math::Vec3;

/// Scalar potential at ego position `p`.
pub fn potential(p: Vec3, world: &WorldState, cfg: &EpisodeConfig) -> f64 {
    let mut u = 0.5 * cfg.k_att * (p - world.ego.goal).norm_sq();
    let rho0 = cfg.warning_radius;
    for i in &world.intruders {
        let rho = p.distance(i.position);
        if rho < rho0 && rho > 0.0 {
            let g = 1.0 / rho - 1.0 / rho0;
            u += 0.5 * cfg.k_rep * g * g;
        }
    }
    u
}

/// Pure goal attraction, unclamped.
pub fn attraction_force(p: Vec3, goal: Vec3, cfg: &EpisodeConfig) -> Vec3 {
    (goal - p) * cfg.k_att
}

/// Negative potential gradient at the ego position, before speed clamping.
///
/// Each repulsion term is capped at `repulsion_cap`; at exact overlap the
/// capped push points away from the goal.
pub fn vpf_force(world: &WorldState, cfg: &EpisodeConfig) -> Vec3 {
    let p = world.ego.position;
    let mut f = attraction_force(p, world.ego.goal, cfg);
    let rho0 = cfg.warning_radius;
    for i in &world.intruders {
        let offset = p - i.position;
        let rho = offset.norm();
        if rho >= rho0 {
            continue;
        }
        if rho == 0.0 {
            let away = (p - world.ego.goal).normalized_or_zero();
            let away = if away == Vec3::ZERO {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                away
            };
            f += away * cfg.repulsion_cap;
            continue;
        }
        let magnitude = cfg.k_rep * (1.0 / rho - 1.0 / rho0) / (rho * rho);
        f += offset * (magnitude.min(cfg.repulsion_cap) / rho);
    }
    f
}

/// Expert velocity command: the potential-field force clamped to `v_max`.
pub fn vpf_action(world: &WorldState, cfg: &EpisodeConfig) -> Vec3 {
    vpf_force(world, cfg).clamp_norm(cfg.v_max)
}

/// Goal-seeking command used when no event is triggered.
pub fn attraction_action(world: &WorldState, cfg: &EpisodeConfig) -> Vec3 {
    attraction_force(world.ego.position, world.ego.goal, cfg).clamp_norm(cfg.v_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::EpisodeConfig;
    use crate::sim::world::{spawn_world, Intruder, IntruderKind};
    use rand::{Rng as _, SeedableRng};

    fn world_with(goal: Vec3, ego: Vec3, obstacles: &[Vec3]) -> (WorldState, EpisodeConfig) {
        let cfg = EpisodeConfig {
            intruder_count: 0,
            k_rep: 8.0,
            ..EpisodeConfig::default()
        };
        let mut w = spawn_world(&cfg).unwrap();
        w.ego.goal = goal;
        w.ego.position = ego;
        w.intruders = obstacles
            .iter()
            .enumerate()
            .map(|(n, &p)| Intruder {
                id: n as u64 + 1,
                kind: IntruderKind::TypeC,
                position: p,
                velocity: Vec3::ZERO,
                risk: 0.0,
            })
            .collect();
        (w, cfg)
    }

    /// Central-difference gradient of the scalar potential.
    fn numeric_neg_gradient(w: &WorldState, cfg: &EpisodeConfig) -> Vec3 {
        let h = 1e-6;
        let p = w.ego.position;
        let mut g = [0.0; 3];
        for (axis, slot) in g.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[axis] = h;
            let e = Vec3::from(e);
            *slot = -(potential(p + e, w, cfg) - potential(p - e, w, cfg)) / (2.0 * h);
        }
        Vec3::from(g)
    }

    #[test]
    fn zero_at_goal_without_intruders() {
        let (w, cfg) = world_with(Vec3::ZERO, Vec3::ZERO, &[]);
        assert_eq!(vpf_action(&w, &cfg), Vec3::ZERO);
    }

    #[test]
    fn pure_attraction_clamps() {
        let (w, cfg) = world_with(Vec3::ZERO, Vec3::new(-10.0, 0.0, 0.0), &[]);
        let a = vpf_action(&w, &cfg);
        assert!((a - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn obstacle_on_segment_pushes_along_segment() {
        // Both potentials are radial about points on the ego-goal line, so the
        // gradient has no lateral component there.
        let (w, cfg) = world_with(
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::ZERO,
            &[Vec3::new(1.0, 0.0, 0.0)],
        );
        let f = vpf_force(&w, &cfg);
        let num = numeric_neg_gradient(&w, &cfg);
        assert!((f - num).norm() / f.norm() < 1e-5);
        assert!(f.y.abs() < 1e-12 && f.z.abs() < 1e-12);
        // k_att*10 - k_rep*(1 - 0.5)/1 = 10 - 4 with k_rep = 8.
        assert!((f.x - 6.0).abs() < 1e-12);
    }

    #[test]
    fn obstacle_off_segment_gives_lateral_push() {
        let (w, cfg) = world_with(
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::ZERO,
            &[Vec3::new(1.0, 0.2, 0.0)],
        );
        let f = vpf_force(&w, &cfg);
        let num = numeric_neg_gradient(&w, &cfg);
        assert!((f - num).norm() / f.norm() < 1e-5);
        assert!(f.y < -0.1, "lateral push away from the obstacle: {f:?}");
    }

    #[test]
    fn matches_central_differences_at_random_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let ego = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.0..1.0),
            );
            let obstacles: Vec<Vec3> = (0..4)
                .map(|_| {
                    ego + Vec3::new(
                        rng.random_range(-2.5..2.5),
                        rng.random_range(-2.5..2.5),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            // Stay away from the cap and from the non-smooth rim at rho0.
            let ok = obstacles.iter().all(|o| {
                let r = o.distance(ego);
                r > 0.3 && (r - 2.0).abs() > 1e-3
            });
            if !ok {
                continue;
            }
            let goal = Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 0.0);
            let (w, cfg) = world_with(goal, ego, &obstacles);
            let f = vpf_force(&w, &cfg);
            let num = numeric_neg_gradient(&w, &cfg);
            let rel = (f - num).norm() / f.norm().max(1e-12);
            assert!(rel < 1e-5, "state {checked}: rel err {rel}");
            checked += 1;
        }
    }

    #[test]
    fn overlap_is_capped() {
        let (w, cfg) = world_with(Vec3::new(10.0, 0.0, 0.0), Vec3::ZERO, &[Vec3::ZERO]);
        let f = vpf_force(&w, &cfg);
        assert!(f.is_finite());
        assert!((f.x - (10.0 - cfg.repulsion_cap)).abs() < 1e-9);
        assert!((vpf_action(&w, &cfg).norm() - cfg.v_max).abs() < 1e-12);
    }
}
