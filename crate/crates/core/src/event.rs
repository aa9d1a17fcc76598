use serde::{Deserialize, Serialize};

use crate::error::{EraError, Result};
use crate::math::Vec3;

/// Width of one featurized event element.
pub const ELEMENT_WIDTH: usize = 10;
/// Width of the featurized global state.
pub const GLOBAL_WIDTH: usize = 8;

/// One tracked object, expressed relative to the ego agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventElement {
    pub object_id: u64,
    pub rel_position: Vec3,
    pub rel_velocity: Vec3,
    pub kind_onehot: [f64; 3],
    pub risk: f64,
}

/// Ego self-status plus navigational intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub self_velocity: Vec3,
    pub speed: f64,
    /// Unit vector toward the goal; zero when the ego sits exactly on it.
    pub target_unit: Vec3,
    pub target_distance: f64,
}

impl GlobalState {
    pub fn new(self_velocity: Vec3, to_goal: Vec3) -> Self {
        Self {
            self_velocity,
            speed: self_velocity.norm(),
            target_unit: to_goal.normalized_or_zero(),
            target_distance: to_goal.norm(),
        }
    }
}

/// Orthonormal ego basis: `forward` points at the goal, `up` stays as close
/// to world z as possible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoFrame {
    pub forward: Vec3,
    pub left: Vec3,
    pub up: Vec3,
}

impl Default for EgoFrame {
    fn default() -> Self {
        Self {
            forward: Vec3::new(1.0, 0.0, 0.0),
            left: Vec3::new(0.0, 1.0, 0.0),
            up: Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

impl EgoFrame {
    /// Frame facing `heading`; identity when the heading is zero.
    pub fn facing(heading: Vec3) -> Self {
        let forward = heading.normalized_or_zero();
        if forward == Vec3::ZERO {
            return Self::default();
        }
        let z = Vec3::new(0.0, 0.0, 1.0);
        let mut up = z - forward * z.dot(forward);
        if up.norm() < 1e-9 {
            let y = Vec3::new(0.0, 1.0, 0.0);
            up = y - forward * y.dot(forward);
        }
        let up = up.normalized_or_zero();
        Self { forward, left: up.cross(forward), up }
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.forward), v.dot(self.left), v.dot(self.up))
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.forward * v.x + self.left * v.y + self.up * v.z
    }
}

/// Set of detected objects plus global context at one timestamp. Vectors are
/// expressed in `frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventList {
    pub elements: Vec<EventElement>,
    pub global: GlobalState,
    pub timestamp: f64,
    #[serde(default)]
    pub frame: EgoFrame,
}

impl EventList {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks finiteness and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let g = &self.global;
        if !(g.self_velocity.is_finite()
            && g.speed.is_finite()
            && g.target_unit.is_finite()
            && g.target_distance.is_finite()
            && self.timestamp.is_finite())
        {
            return Err(EraError::NonFinite("event global state"));
        }
        let mut ids: Vec<u64> = Vec::with_capacity(self.elements.len());
        for e in &self.elements {
            if !(e.rel_position.is_finite()
                && e.rel_velocity.is_finite()
                && e.risk.is_finite()
                && e.kind_onehot.iter().all(|v| v.is_finite()))
            {
                return Err(EraError::NonFinite("event element"));
            }
            ids.push(e.object_id);
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EraError::Config("duplicate object id in event list".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        for h in [Vec3::new(3.0, -4.0, 1.0), Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO, Vec3::new(-1.0, 0.0, 0.0)] {
            let f = EgoFrame::facing(h);
            assert!((f.forward.cross(f.left) - f.up).norm() < 1e-12);
            assert!(f.forward.dot(f.left).abs() < 1e-12 && f.up.dot(f.left).abs() < 1e-12);
            let v = Vec3::new(0.3, -1.7, 2.2);
            assert!((f.to_world(f.to_local(v)) - v).norm() < 1e-12);
            if h != Vec3::ZERO {
                assert!((f.to_local(h) - Vec3::new(h.norm(), 0.0, 0.0)).norm() < 1e-12);
            }
        }
    }
}
