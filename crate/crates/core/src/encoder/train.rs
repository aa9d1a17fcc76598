//! Pretraining: metric alignment plus action imitation, trained by
//! mini-batch SGD with momentum on analytic gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metric::{d_phys_env, MetricConfig};
use super::{featurize, EncoderParams, EncoderWeights, FeatureScale, Features, ACTION_DIM};
use crate::error::{EraError, Result};
use crate::event::{EventList, ELEMENT_WIDTH, GLOBAL_WIDTH};
use crate::math::Vec3;
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub event: EventList,
    pub action: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainHyper {
    pub lambda_metric: f64,
    pub lambda_imitation: f64,
    pub isotropy_weight: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub pairs_per_batch: usize,
    /// Samples and pairs used for the per-epoch loss curve.
    pub eval_samples: usize,
    pub eval_pairs: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub latent_norm: LatentNorm,
    pub seed: u64,
    pub metric: MetricConfig,
}

impl Default for PretrainHyper {
    fn default() -> Self {
        Self {
            lambda_metric: 1.0,
            lambda_imitation: 1.0,
            isotropy_weight: 1e-3,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 40,
            pairs_per_batch: 64,
            eval_samples: 2048,
            eval_pairs: 1024,
            latent_dim: super::LATENT_DIM,
            hidden_dim: super::HIDDEN_DIM,
            latent_norm: LatentNorm::Whiten,
            seed: 0,
            metric: MetricConfig::default(),
        }
    }
}

impl PretrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_metric < 0.0 || self.lambda_imitation < 0.0 {
            return Err(EraError::Config("loss weights must be non-negative".into()));
        }
        if self.lambda_metric == 0.0 && self.lambda_imitation == 0.0 {
            return Err(EraError::Config("lambda_metric and lambda_imitation are both zero".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(EraError::Config("need batch_size > 0, learning_rate > 0, momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub metric: f64,
    pub imitation: f64,
    pub isotropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossParts,
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub params: EncoderParams,
    pub curve: Vec<EpochLoss>,
}

/// A sampled pair `(i, j)` with its target kinematic distance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Pair {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

/// Loss over `batch` (indices into `feats`/`targets`) and, optionally, its
/// gradient. Pair indices are positions inside `batch`.
pub(crate) fn objective(
    params: &EncoderParams,
    feats: &[Features],
    targets: &[[f64; ACTION_DIM]],
    batch: &[usize],
    pairs: &[Pair],
    hyper: &PretrainHyper,
    with_grad: bool,
) -> (LossParts, Option<EncoderWeights>) {
    let (d, h) = (params.d, params.h);
    let w = &params.weights;
    let n = batch.len().max(1) as f64;
    let fwd: Vec<_> = batch.iter().map(|&s| params.forward(feats[s].clone())).collect();
    let mut dz: Vec<Vec<f64>> = vec![vec![0.0; d]; batch.len()];
    let mut grad = with_grad.then(|| EncoderWeights::zeros(d, h));
    let mut parts = LossParts::default();

    if hyper.lambda_imitation > 0.0 {
        let coef = hyper.lambda_imitation * 2.0 / n;
        for (b, &s) in batch.iter().enumerate() {
            let z = &fwd[b].z;
            let pred = params.head(z);
            for k in 0..ACTION_DIM {
                let diff = pred[k] - targets[s][k];
                parts.imitation += diff * diff / n;
                if let Some(g) = grad.as_mut() {
                    let c = coef * diff;
                    g.head_b[k] += c;
                    for i in 0..d {
                        g.head_w[k * d + i] += c * z[i];
                        dz[b][i] += c * w.head_w[k * d + i];
                    }
                }
            }
        }
    }

    if hyper.lambda_metric > 0.0 && !pairs.is_empty() {
        let p = pairs.len() as f64;
        for pair in pairs {
            let (zi, zj) = (&fwd[pair.i].z, &fwd[pair.j].z);
            let dist = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gap = dist - pair.target;
            parts.metric += gap.abs() / p;
            if with_grad && dist > 0.0 && gap != 0.0 {
                let c = hyper.lambda_metric * gap.signum() / (p * dist);
                for k in 0..d {
                    let g = c * (zi[k] - zj[k]);
                    dz[pair.i][k] += g;
                    dz[pair.j][k] -= g;
                }
            }
        }
    }

    if hyper.isotropy_weight > 0.0 {
        let mean_sq = fwd.iter().map(|f| f.z.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
        parts.isotropy = hyper.isotropy_weight * (mean_sq - 1.0) * (mean_sq - 1.0);
        if with_grad {
            let c = hyper.isotropy_weight * 4.0 * (mean_sq - 1.0) / n;
            for (b, f) in fwd.iter().enumerate() {
                for k in 0..d {
                    dz[b][k] += c * f.z[k];
                }
            }
        }
    }

    parts.total = hyper.lambda_metric * parts.metric + hyper.lambda_imitation * parts.imitation + parts.isotropy;

    if let Some(g) = grad.as_mut() {
        let width = h + GLOBAL_WIDTH;
        let mut dx = vec![0.0; width];
        let mut du = vec![0.0; h];
        for (b, f) in fwd.iter().enumerate() {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                let gi = dz[b][i];
                if gi == 0.0 {
                    continue;
                }
                g.rho_b[i] += gi;
                let row = i * width;
                for k in 0..width {
                    g.rho_w[row + k] += gi * f.pooled_and_global[k];
                    dx[k] += gi * w.rho_w[row + k];
                }
            }
            if f.hidden.is_empty() {
                continue;
            }
            let inv = 1.0 / f.hidden.len() as f64;
            for (act, row) in f.hidden.iter().zip(&f.rows) {
                for j in 0..h {
                    du[j] = dx[j] * inv * (1.0 - act[j] * act[j]);
                }
                for j in 0..h {
                    let dj = du[j];
                    g.phi_b[j] += dj;
                    let base = j * ELEMENT_WIDTH;
                    for (c, x) in row.iter().enumerate() {
                        g.phi_w[base + c] += dj * x;
                    }
                }
            }
        }
    }
    (parts, grad)
}

fn sample_pairs(
    batch: &[usize],
    count: usize,
    data: &[TrainingSample],
    scale: &FeatureScale,
    hyper: &PretrainHyper,
    rng: &mut crate::seed::Rng,
) -> Result<Vec<Pair>> {
    if batch.len() < 2 || hyper.lambda_metric == 0.0 {
        return Ok(Vec::new());
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.random_range(0..batch.len());
        let mut j = rng.random_range(0..batch.len() - 1);
        if j >= i {
            j += 1;
        }
        let target = d_phys_env(&data[batch[i]].event, &data[batch[j]].event, scale, &hyper.metric)?;
        pairs.push(Pair { i, j, target });
    }
    Ok(pairs)
}

/// Trains an encoder on expert `(event, action)` samples.
pub fn pretrain(data: &[TrainingSample], scale: FeatureScale, hyper: &PretrainHyper) -> Result<PretrainReport> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(EraError::InsufficientData("pretraining dataset is empty".into()));
    }
    let feats = data
        .iter()
        .map(|s| featurize(&s.event, &scale))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<[f64; ACTION_DIM]> = data
        .iter()
        .map(|s| {
            let a = s.action * (1.0 / scale.v_max);
            [a.x, a.y, a.z]
        })
        .collect();

    let mut rng = stream_rng(hyper.seed, "training", 0);
    let mut params = EncoderParams::init(hyper.latent_dim, hyper.hidden_dim, scale, &mut rng);

    let mut eval_idx: Vec<usize> = (0..data.len()).collect();
    eval_idx.shuffle(&mut rng);
    eval_idx.truncate(hyper.eval_samples.max(1));
    let eval_pairs = sample_pairs(&eval_idx, hyper.eval_pairs, data, &scale, hyper, &mut rng)?;

    let mut velocity = EncoderWeights::zeros(params.d, params.h);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let pairs = sample_pairs(chunk, hyper.pairs_per_batch, data, &scale, hyper, &mut rng)?;
            let (loss, grad) = objective(&params, &feats, &targets, chunk, &pairs, hyper, true);
            let grad = grad.expect("gradient requested");
            if !loss.total.is_finite() || !grad.is_finite() {
                return Err(EraError::Diverged { epoch, batch: b, loss: loss.total });
            }
            velocity.scale(hyper.momentum);
            velocity.axpy(-hyper.learning_rate, &grad);
            params.weights.axpy(1.0, &velocity);
        }
        let (loss, _) = objective(&params, &feats, &targets, &eval_idx, &eval_pairs, hyper, false);
        if !loss.total.is_finite() {
            return Err(EraError::Diverged { epoch, batch: usize::MAX, loss: loss.total });
        }
        log::debug!("epoch {epoch}: {loss:?}");
        curve.push(EpochLoss { epoch, loss });
    }
    normalize_latent(&mut params, &feats, hyper.latent_norm);
    Ok(PretrainReport { params, curve })
}

/// Post-training affine map of the latent space folded into the ρ layer and
/// the imitation head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentNorm {
    None,
    /// Zero mean over the training set; pairwise distances are preserved.
    Center,
    /// Zero mean and identity covariance (ZCA).
    Whiten,
}

impl std::str::FromStr for LatentNorm {
    type Err = EraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "center" => Ok(Self::Center),
            "whiten" => Ok(Self::Whiten),
            other => Err(EraError::Config(format!("unknown latent_norm '{other}'"))),
        }
    }
}

impl std::fmt::Display for LatentNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Center => "center",
            Self::Whiten => "whiten",
        })
    }
}

/// Covariance eigenvalues below this fraction of the largest are floored
/// before whitening.
pub const WHITEN_FLOOR: f64 = 0.1;

/// Applies `z ↦ T (z − m)` to the encoder output, where `m` is the mean code
/// over `feats` and `T` is identity or the ZCA whitening matrix.
pub(crate) fn normalize_latent(params: &mut EncoderParams, feats: &[Features], mode: LatentNorm) {
    if mode == LatentNorm::None || feats.is_empty() {
        return;
    }
    let d = params.d;
    let codes: Vec<Vec<f64>> = feats.iter().map(|f| params.forward(f.clone()).z).collect();
    let n = codes.len() as f64;
    let mut mean = DVector::<f64>::zeros(d);
    for z in &codes {
        mean += DVector::from_column_slice(z);
    }
    mean /= n;
    let (t, t_inv) = match mode {
        LatentNorm::Whiten => {
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for z in &codes {
                let c = DVector::from_column_slice(z) - &mean;
                cov.ger(1.0 / n, &c, &c, 1.0);
            }
            let eig = SymmetricEigen::new(cov);
            let floor = eig.eigenvalues.max().max(f64::MIN_POSITIVE) * WHITEN_FLOOR;
            let u = &eig.eigenvectors;
            let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt()));
            let s_inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(floor).sqrt()));
            (u * s * u.transpose(), u * s_inv * u.transpose())
        }
        _ => (DMatrix::identity(d, d), DMatrix::identity(d, d)),
    };
    let w = &mut params.weights;
    let width = w.rho_w.len() / d;
    let rho_w = DMatrix::from_row_slice(d, width, &w.rho_w);
    let rho_b = DVector::from_column_slice(&w.rho_b);
    let new_w = &t * rho_w;
    let new_b = &t * (rho_b - &mean);
    let head_w = DMatrix::from_row_slice(ACTION_DIM, d, &w.head_w);
    let head_b = DVector::from_column_slice(&w.head_b) + &head_w * &mean;
    let head_w = head_w * t_inv;
    for i in 0..d {
        for k in 0..width {
            w.rho_w[i * width + k] = new_w[(i, k)];
        }
        w.rho_b[i] = new_b[i];
    }
    for k in 0..ACTION_DIM {
        for i in 0..d {
            w.head_w[k * d + i] = head_w[(k, i)];
        }
        w.head_b[k] = head_b[k];
    }
}
