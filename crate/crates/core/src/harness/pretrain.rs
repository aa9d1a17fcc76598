//! Encoder pretraining, expert bank construction and dynamics fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::DatasetRecord;
use crate::bank::{BankEntry, KnowledgeBank, Origin, Source};
use crate::dynamics::{fit_dynamics, one_step_mse, Transition, TransitionModel, CONTRACTION_BOUND, DEFAULT_RIDGE};
use crate::encoder::train::{pretrain, EpochLoss, PretrainHyper, TrainingSample};
use crate::encoder::{encode, EncoderParams, FeatureScale};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub records: usize,
    pub transitions: usize,
    pub one_step_mse: f64,
    pub sigma_max: f64,
    pub bank_size: usize,
    pub n_list: usize,
    pub n_probe: usize,
}

pub struct PretrainOutput {
    pub encoder: EncoderParams,
    pub model: TransitionModel,
    pub bank: KnowledgeBank,
    pub curve: Vec<EpochLoss>,
    pub summary: PretrainSummary,
}

/// Consecutive-step pairs of decisions within one episode, paired with the
/// executed action.
pub fn transitions(records: &[DatasetRecord], codes: &[Vec<f64>]) -> Vec<Transition> {
    records
        .windows(2)
        .zip(codes.windows(2))
        .filter(|(r, _)| r[0].episode == r[1].episode && r[0].step + 1 == r[1].step)
        .map(|(r, z)| Transition { z: z[0].clone(), action: r[0].executed, z_next: z[1].clone() })
        .collect()
}

/// Trains the encoder, fills the expert bank with `(z, a*, 1)` entries,
/// fits the latent dynamics and builds the default index.
pub fn pretrain_artifacts(
    records: &[DatasetRecord],
    scale: FeatureScale,
    hyper: &PretrainHyper,
    bank_seed: u64,
) -> Result<PretrainOutput> {
    let samples: Vec<TrainingSample> = records
        .iter()
        .map(|r| TrainingSample { event: r.event.clone(), action: r.a_star })
        .collect();
    let report = pretrain(&samples, scale, hyper)?;
    let encoder = report.params;

    let codes: Vec<Vec<f64>> = records
        .par_iter()
        .map(|r| encode(&encoder, &r.event).map(|z| z.0))
        .collect::<Result<_>>()?;

    let triples = transitions(records, &codes);
    let model = fit_dynamics(&triples, DEFAULT_RIDGE, CONTRACTION_BOUND)?;
    let mse = one_step_mse(&model, &triples);

    let mut bank = KnowledgeBank::new(encoder.d, bank_seed);
    for (id, (r, z)) in records.iter().zip(codes).enumerate() {
        bank.insert(BankEntry {
            id: id as u64,
            z,
            a: r.a_star,
            r: 1.0,
            origin: Origin { episode: r.episode, step: r.step, source: Source::Expert },
        })?;
    }
    bank.build_default_index()?;
    let index = bank.index().expect("index just built");

    let summary = PretrainSummary {
        records: records.len(),
        transitions: triples.len(),
        one_step_mse: mse,
        sigma_max: model.sigma_max,
        bank_size: bank.len(),
        n_list: index.n_list(),
        n_probe: index.n_probe,
    };
    Ok(PretrainOutput { encoder, model, bank, curve: report.curve, summary })
}
