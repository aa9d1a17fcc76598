//! Permutation-invariant event-set encoder.
//!
//! `z = ρ([mean_i tanh(φ(e_i)); g])`: every element goes through the same
//! affine map and `tanh`, the results are mean-pooled (empty sets pool to
//! zero), concatenated with the featurized global state and projected to the
//! latent dimension.

pub mod metric;
pub mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{EraError, Result};
use crate::event::{EventList, ELEMENT_WIDTH, GLOBAL_WIDTH};
use crate::seed::Rng;

pub use metric::{d_phys_env, MetricConfig};
pub use train::{pretrain, EpochLoss, PretrainHyper, PretrainReport, TrainingSample};

pub const LATENT_DIM: usize = 32;
pub const HIDDEN_DIM: usize = 64;
/// Width of the imitation head output (a velocity command).
pub const ACTION_DIM: usize = 3;

/// Normalization constants applied during featurization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub d_threshold: f64,
    pub v_max: f64,
}

impl Default for FeatureScale {
    fn default() -> Self {
        Self {
            d_threshold: 10.0,
            v_max: 5.0,
        }
    }
}

/// Featurized event list: one row per element plus the global vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub rows: Vec<[f64; ELEMENT_WIDTH]>,
    pub global: [f64; GLOBAL_WIDTH],
}

/// Scales positions by `1/d_threshold` and velocities by `1/v_max`. The goal
/// distance saturates at `d_threshold` since the expert's attraction is
/// already speed-limited well before that range.
pub fn featurize(event: &EventList, scale: &FeatureScale) -> Result<Features> {
    event.validate()?;
    let p = 1.0 / scale.d_threshold;
    let v = 1.0 / scale.v_max;
    let rows = event
        .elements
        .iter()
        .map(|e| {
            let k = e.kind_onehot;
            [
                e.rel_position.x * p,
                e.rel_position.y * p,
                e.rel_position.z * p,
                e.rel_velocity.x * v,
                e.rel_velocity.y * v,
                e.rel_velocity.z * v,
                k[0],
                k[1],
                k[2],
                e.risk,
            ]
        })
        .collect();
    let g = &event.global;
    let global = [
        g.self_velocity.x * v,
        g.self_velocity.y * v,
        g.self_velocity.z * v,
        g.speed * v,
        g.target_unit.x,
        g.target_unit.y,
        g.target_unit.z,
        g.target_distance.min(scale.d_threshold) * p,
    ];
    Ok(Features { rows, global })
}

/// Latent event code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn zeros(d: usize) -> Self {
        LatentCode(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Lyapunov energy `‖z‖²`.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Encoder weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    /// `h × 10` element map.
    pub phi_w: Vec<f64>,
    pub phi_b: Vec<f64>,
    /// `d × (h + 8)` projection.
    pub rho_w: Vec<f64>,
    pub rho_b: Vec<f64>,
    /// `3 × d` imitation head; only used while pretraining.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl EncoderWeights {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            phi_w: vec![0.0; h * ELEMENT_WIDTH],
            phi_b: vec![0.0; h],
            rho_w: vec![0.0; d * (h + GLOBAL_WIDTH)],
            rho_b: vec![0.0; d],
            head_w: vec![0.0; ACTION_DIM * d],
            head_b: vec![0.0; ACTION_DIM],
        }
    }

    fn blocks(&self) -> [&Vec<f64>; 6] {
        [&self.phi_w, &self.phi_b, &self.rho_w, &self.rho_b, &self.head_w, &self.head_b]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.phi_w,
            &mut self.phi_b,
            &mut self.rho_w,
            &mut self.rho_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view of parameter `i` across all blocks.
    pub fn get(&self, mut i: usize) -> f64 {
        for b in self.blocks() {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, value: f64) {
        for b in self.blocks_mut() {
            if i < b.len() {
                b[i] = value;
                return;
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &EncoderWeights) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Trained (or freshly initialized) encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub d: usize,
    pub h: usize,
    pub scale: FeatureScale,
    pub weights: EncoderWeights,
}

/// Per-sample forward pass kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub rows: Vec<[f64; ELEMENT_WIDTH]>,
    pub hidden: Vec<Vec<f64>>,
    pub pooled_and_global: Vec<f64>,
    pub z: Vec<f64>,
}

impl EncoderParams {
    /// Xavier-uniform initialization from `rng`.
    pub fn init(d: usize, h: usize, scale: FeatureScale, rng: &mut Rng) -> Self {
        let mut weights = EncoderWeights::zeros(d, h);
        let mut fill = |w: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-a..a);
            }
        };
        fill(&mut weights.phi_w, ELEMENT_WIDTH, h);
        fill(&mut weights.rho_w, h + GLOBAL_WIDTH, d);
        fill(&mut weights.head_w, d, ACTION_DIM);
        Self { d, h, scale, weights }
    }

    pub fn validate(&self) -> Result<()> {
        let expect = EncoderWeights::zeros(self.d, self.h);
        for (have, want) in self.weights.blocks().iter().zip(expect.blocks()) {
            if have.len() != want.len() {
                return Err(EraError::Dimension {
                    expected: want.len(),
                    got: have.len(),
                });
            }
        }
        if !self.weights.is_finite() {
            return Err(EraError::NonFinite("encoder weights"));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, features: Features) -> Forward {
        let (d, h) = (self.d, self.h);
        let w = &self.weights;
        let mut pooled = vec![0.0; h + GLOBAL_WIDTH];
        let mut hidden = Vec::with_capacity(features.rows.len());
        for row in &features.rows {
            let mut act = vec![0.0; h];
            for (j, a) in act.iter_mut().enumerate() {
                let wr = &w.phi_w[j * ELEMENT_WIDTH..(j + 1) * ELEMENT_WIDTH];
                let mut s = w.phi_b[j];
                for (x, c) in row.iter().zip(wr) {
                    s += x * c;
                }
                *a = s.tanh();
            }
            hidden.push(act);
        }
        if !hidden.is_empty() {
            let inv = 1.0 / hidden.len() as f64;
            for act in &hidden {
                for (p, a) in pooled.iter_mut().zip(act) {
                    *p += a;
                }
            }
            pooled[..h].iter_mut().for_each(|p| *p *= inv);
        }
        pooled[h..].copy_from_slice(&features.global);
        let width = h + GLOBAL_WIDTH;
        let mut z = w.rho_b.clone();
        for (i, zi) in z.iter_mut().enumerate().take(d) {
            let wr = &w.rho_w[i * width..(i + 1) * width];
            *zi += pooled.iter().zip(wr).map(|(x, c)| x * c).sum::<f64>();
        }
        Forward {
            rows: features.rows,
            hidden,
            pooled_and_global: pooled,
            z,
        }
    }

    /// Imitation head output for a latent code (normalized action units).
    pub fn head(&self, z: &[f64]) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        for (k, o) in out.iter_mut().enumerate() {
            let wr = &self.weights.head_w[k * self.d..(k + 1) * self.d];
            *o = self.weights.head_b[k] + z.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }
}

/// Encodes an event list into its latent code.
pub fn encode(params: &EncoderParams, event: &EventList) -> Result<LatentCode> {
    params.validate()?;
    let features = featurize(event, &params.scale)?;
    Ok(LatentCode(params.forward(features).z))
}
