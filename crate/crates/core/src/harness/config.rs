//! Plain-text `key = value` configuration for the harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::encoder::train::PretrainHyper;
use crate::error::{EraError, Result};
use crate::kv::{apply_all, parse_value, KeyValues, KvConfig};
use crate::seed::derive_seed;
use crate::sim::EpisodeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    pub gen_episodes: usize,
    /// Std-dev of the execution noise added to expert commands, m/s.
    pub gen_noise: f64,
    pub train_episodes: usize,
    pub eval_seeds: usize,
    pub bench_sizes: Vec<usize>,
    pub bench_queries: usize,
    /// Gaussian noise (relative to code norm) of synthetic bench entries.
    pub bench_pad_noise: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gen_episodes: 500,
            gen_noise: 0.0,
            train_episodes: 100,
            eval_seeds: 25,
            bench_sizes: vec![10_000, 30_000, 100_000],
            bench_queries: 1000,
            bench_pad_noise: 0.05,
        }
    }
}

impl KvConfig for HarnessConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "gen_episodes" => self.gen_episodes = parse_value(key, value)?,
            "gen_noise" => self.gen_noise = parse_value(key, value)?,
            "train_episodes" => self.train_episodes = parse_value(key, value)?,
            "eval_seeds" => self.eval_seeds = parse_value(key, value)?,
            "bench_queries" => self.bench_queries = parse_value(key, value)?,
            "bench_pad_noise" => self.bench_pad_noise = parse_value(key, value)?,
            "bench_sizes" => {
                self.bench_sizes = value
                    .split(',')
                    .map(|s| parse_value::<usize>(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let sizes: Vec<String> = self.bench_sizes.iter().map(usize::to_string).collect();
        vec![
            ("seed".into(), self.seed.to_string()),
            ("gen_episodes".into(), self.gen_episodes.to_string()),
            ("gen_noise".into(), self.gen_noise.to_string()),
            ("train_episodes".into(), self.train_episodes.to_string()),
            ("eval_seeds".into(), self.eval_seeds.to_string()),
            ("bench_sizes".into(), sizes.join(",")),
            ("bench_queries".into(), self.bench_queries.to_string()),
            ("bench_pad_noise".into(), self.bench_pad_noise.to_string()),
        ]
    }
}

impl KvConfig for PretrainHyper {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lambda_metric" => self.lambda_metric = parse_value(key, value)?,
            "lambda_imitation" => self.lambda_imitation = parse_value(key, value)?,
            "isotropy_weight" => self.isotropy_weight = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "pairs_per_batch" => self.pairs_per_batch = parse_value(key, value)?,
            "eval_samples" => self.eval_samples = parse_value(key, value)?,
            "eval_pairs" => self.eval_pairs = parse_value(key, value)?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "latent_norm" => self.latent_norm = value.parse()?,
            "metric_empty_cost" => self.metric.empty_cost = parse_value(key, value)?,
            "metric_velocity_weight" => self.metric.velocity_weight = parse_value(key, value)?,
            "metric_global_weight" => self.metric.global_weight = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        [
            ("lambda_metric", self.lambda_metric.to_string()),
            ("lambda_imitation", self.lambda_imitation.to_string()),
            ("isotropy_weight", self.isotropy_weight.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum", self.momentum.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("pairs_per_batch", self.pairs_per_batch.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("eval_pairs", self.eval_pairs.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("latent_norm", self.latent_norm.to_string()),
            ("metric_empty_cost", self.metric.empty_cost.to_string()),
            ("metric_velocity_weight", self.metric.velocity_weight.to_string()),
            ("metric_global_weight", self.metric.global_weight.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Every configurable knob of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub harness: HarnessConfig,
    pub episode: EpisodeConfig,
    pub controller: ControllerConfig,
    pub pretrain: PretrainHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            harness: HarnessConfig::default(),
            episode: EpisodeConfig::default(),
            controller: ControllerConfig::default(),
            pretrain: PretrainHyper::default(),
        }
    }
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        apply_all(kv, &mut [&mut cfg.harness, &mut cfg.episode, &mut cfg.controller, &mut cfg.pretrain])?;
        cfg.finish()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    /// Propagates shared values and validates.
    pub fn finish(mut self) -> Result<Self> {
        self.controller.v_max = self.episode.v_max;
        self.pretrain.seed = derive_seed(self.harness.seed, "training", 0);
        self.episode.validate()?;
        self.controller.validate()?;
        self.pretrain.validate()?;
        if self.harness.bench_sizes.contains(&0) {
            return Err(EraError::Config("bench sizes must be positive".into()));
        }
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.harness.seed = seed;
        self.finish()
    }

    /// Writes every key once; the per-episode seed is derived, not configured.
    pub fn to_kv_string(&self) -> String {
        let mut entries = self.harness.entries();
        entries.extend(self.episode.entries().into_iter().filter(|(k, _)| k != "seed"));
        entries.extend(self.controller.entries());
        entries.extend(self.pretrain.entries());
        entries.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
