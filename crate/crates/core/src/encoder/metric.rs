//! Kinematic distance between two event lists.
//!
//! Symmetric Chamfer distance over elements plus a weighted distance between
//! featurized global vectors. Element distance is
//! `|Δp| / d_threshold + w_v · |Δv| / v_max`.

use serde::{Deserialize, Serialize};

use super::{featurize, FeatureScale};
use crate::error::Result;
use crate::event::{EventElement, EventList};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Cost charged to an element when the other set is empty.
    pub empty_cost: f64,
    pub velocity_weight: f64,
    pub global_weight: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            empty_cost: 1.0,
            velocity_weight: 0.5,
            global_weight: 1.0,
        }
    }
}

fn element_distance(a: &EventElement, b: &EventElement, scale: &FeatureScale, m: &MetricConfig) -> f64 {
    a.rel_position.distance(b.rel_position) / scale.d_threshold
        + m.velocity_weight * a.rel_velocity.distance(b.rel_velocity) / scale.v_max
}

/// Mean over `from` of the distance to the closest element of `to`.
fn directed(from: &[EventElement], to: &[EventElement], scale: &FeatureScale, m: &MetricConfig) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| element_distance(a, b, scale, m))
                .min_by(f64::total_cmp)
                .unwrap_or(m.empty_cost)
        })
        .sum();
    total / from.len() as f64
}

/// Kinematic distance between event lists. Symmetric and zero on identical
/// inputs.
pub fn d_phys_env(a: &EventList, b: &EventList, scale: &FeatureScale, m: &MetricConfig) -> Result<f64> {
    let ga = featurize_global(a, scale)?;
    let gb = featurize_global(b, scale)?;
    let global = ga
        .iter()
        .zip(&gb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(directed(&a.elements, &b.elements, scale, m)
        + directed(&b.elements, &a.elements, scale, m)
        + m.global_weight * global)
}

fn featurize_global(e: &EventList, scale: &FeatureScale) -> Result<[f64; crate::event::GLOBAL_WIDTH]> {
    Ok(featurize(e, scale)?.global)
}
