//! Contractive linear latent dynamics `z' = Ψ z + Γ a`.
//!
//! Fitted by ridge least squares and projected so that `σ_max(Ψ) ≤ γ`, which
//! makes the unforced energy `‖z‖²` shrink by at least `γ²` per step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encoder::{LatentCode, ACTION_DIM};
use crate::error::{EraError, Result};
use crate::math::Vec3;

pub const CONTRACTION_BOUND: f64 = 0.99;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// `d × d`, row-major rows.
    pub psi: Vec<Vec<f64>>,
    /// `d × 3`, row-major rows.
    pub gamma: Vec<Vec<f64>>,
    pub contraction: f64,
    pub sigma_max: f64,
}

/// One observed latent transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub z: Vec<f64>,
    pub action: Vec3,
    pub z_next: Vec<f64>,
}

impl TransitionModel {
    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    /// Builds a model from raw operators, projecting `psi`.
    pub fn from_operators(psi: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>, contraction: f64) -> Self {
        let psi = project_spectral(&psi, contraction);
        let sigma_max = spectral_norm(&psi);
        Self { psi, gamma, contraction, sigma_max }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            psi: vec![vec![0.0; d]; d],
            gamma: vec![vec![0.0; ACTION_DIM]; d],
            contraction: CONTRACTION_BOUND,
            sigma_max: 0.0,
        }
    }
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_t_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    let mut out = vec![0.0; cols];
    for (row, vi) in m.iter().zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

/// Largest singular value by power iteration on `ΨᵀΨ`.
///
/// Stops once the Rayleigh quotient changes by less than `POWER_TOLERANCE`
/// (relative), after at least `POWER_ITERATIONS` sweeps are allowed and at
/// most ten times that many.
pub fn spectral_norm(m: &[Vec<f64>]) -> f64 {
    let n = m.first().map_or(0, Vec::len);
    if n == 0 {
        return 0.0;
    }
    // Fixed, non-degenerate start vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut lambda = 0.0;
    let max_iters = POWER_ITERATIONS * 10;
    for it in 0..max_iters {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mv = mat_vec(m, &v);
        let w = mat_t_vec(m, &mv);
        let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let converged = (next - lambda).abs() <= POWER_TOLERANCE * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        v = w;
        if converged && it + 1 >= 2 {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Rescales `psi` so that its spectral norm does not exceed `bound`.
pub fn project_spectral(psi: &[Vec<f64>], bound: f64) -> Vec<Vec<f64>> {
    let mut out = psi.to_vec();
    // Power iteration approaches σ_max from below, so recheck after scaling.
    for _ in 0..8 {
        let sigma = spectral_norm(&out);
        if sigma <= bound {
            break;
        }
        let s = bound / sigma;
        out.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= s));
    }
    out
}

/// Ridge least squares for `[Ψ Γ]`, then spectral projection of `Ψ`.
pub fn fit_dynamics(triples: &[Transition], ridge: f64, contraction: f64) -> Result<TransitionModel> {
    let d = triples
        .first()
        .map(|t| t.z.len())
        .ok_or_else(|| EraError::InsufficientData("no transitions".into()))?;
    if triples.len() < d + ACTION_DIM {
        return Err(EraError::InsufficientData(format!(
            "need at least {} transitions, got {}",
            d + ACTION_DIM,
            triples.len()
        )));
    }
    let p = d + ACTION_DIM;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut cross = DMatrix::<f64>::zeros(d, p);
    let mut x = DVector::<f64>::zeros(p);
    for t in triples {
        if t.z.len() != d || t.z_next.len() != d {
            return Err(EraError::Dimension { expected: d, got: t.z.len().min(t.z_next.len()) });
        }
        for (i, v) in t.z.iter().chain(t.action.to_array().iter()).enumerate() {
            x[i] = *v;
        }
        gram.ger(1.0, &x, &x, 1.0);
        let y = DVector::from_column_slice(&t.z_next);
        cross.ger(1.0, &y, &x, 1.0);
    }
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    // Θ G = C  ⇔  G Θᵀ = Cᵀ (G symmetric).
    let chol = gram.cholesky().ok_or(EraError::Singular(ridge))?;
    let theta_t = chol.solve(&cross.transpose());
    if theta_t.iter().any(|v| !v.is_finite()) {
        return Err(EraError::Singular(ridge));
    }
    let psi: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| theta_t[(j, i)]).collect()).collect();
    let gamma: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..ACTION_DIM).map(|k| theta_t[(d + k, i)]).collect())
        .collect();
    Ok(TransitionModel::from_operators(psi, gamma, contraction))
}

/// One-step latent prediction `Ψ z + Γ a`.
pub fn predict(model: &TransitionModel, z: &LatentCode, a: Vec3) -> LatentCode {
    let a = a.to_array();
    LatentCode(
        model
            .psi
            .iter()
            .zip(&model.gamma)
            .map(|(prow, grow)| {
                prow.iter().zip(&z.0).map(|(p, v)| p * v).sum::<f64>()
                    + grow.iter().zip(&a).map(|(g, v)| g * v).sum::<f64>()
            })
            .collect(),
    )
}

/// Energy change `‖Ψz + Γa‖² − ‖z‖²` under the identity Lyapunov function.
pub fn lyapunov_delta(model: &TransitionModel, z: &LatentCode, a: Vec3) -> f64 {
    predict(model, z, a).energy() - z.energy()
}

/// Mean squared one-step prediction error.
pub fn one_step_mse(model: &TransitionModel, triples: &[Transition]) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let total: f64 = triples
        .iter()
        .map(|t| {
            let pred = predict(model, &LatentCode(t.z.clone()), t.action);
            pred.0.iter().zip(&t.z_next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    total / triples.len() as f64
}
