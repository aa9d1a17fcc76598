//! On-disk artifacts: model file, JSON reports and JSONL logs.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::TransitionModel;
use crate::encoder::{EncoderParams, EncoderWeights, FeatureScale};
use crate::error::{io_err, EraError, Result};

pub const MODEL_FORMAT_VERSION: u64 = 1;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const BANK_FILE: &str = "bank.jsonl";
pub const TRAINED_BANK_FILE: &str = "bank_trained.jsonl";
pub const PRETRAIN_CURVE_FILE: &str = "pretrain_curve.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const TRAIN_TRACES_FILE: &str = "train_traces.jsonl";
pub const GEN_SUMMARY_FILE: &str = "gen_summary.json";
pub const PRETRAIN_SUMMARY_FILE: &str = "pretrain_summary.json";
pub const BENCH_FILE: &str = "bench.json";

/// Encoder weights plus latent dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u64,
    pub d: usize,
    pub h: usize,
    pub scale: FeatureScale,
    pub weights: EncoderWeights,
    pub psi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub contraction: f64,
    pub sigma_max: f64,
}

impl ModelArtifact {
    pub fn new(encoder: &EncoderParams, model: &TransitionModel) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            d: encoder.d,
            h: encoder.h,
            scale: encoder.scale,
            weights: encoder.weights.clone(),
            psi: model.psi.clone(),
            gamma: model.gamma.clone(),
            contraction: model.contraction,
            sigma_max: model.sigma_max,
        }
    }

    pub fn encoder(&self) -> EncoderParams {
        EncoderParams { d: self.d, h: self.h, scale: self.scale, weights: self.weights.clone() }
    }

    pub fn dynamics(&self) -> TransitionModel {
        TransitionModel {
            psi: self.psi.clone(),
            gamma: self.gamma.clone(),
            contraction: self.contraction,
            sigma_max: self.sigma_max,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(EraError::Version { found: m.version, expected: MODEL_FORMAT_VERSION });
        }
        m.encoder().validate()?;
        if m.psi.len() != m.d || m.gamma.len() != m.d {
            return Err(EraError::Dimension { expected: m.d, got: m.psi.len() });
        }
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| EraError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
