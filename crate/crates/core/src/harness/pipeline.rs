//! File-level pipeline stages shared by the command line and the tests.
//!
//! Every stage reads its inputs from a directory and writes its outputs under
//! fixed names, so a full run is `gen_data → pretrain → train → eval`.

use std::fs;
use std::path::{Path, PathBuf};

use super::artifacts::{
    write_json, write_jsonl, ModelArtifact, BANK_FILE, DATASET_FILE, GEN_SUMMARY_FILE, MODEL_FILE,
    PRETRAIN_CURVE_FILE, PRETRAIN_SUMMARY_FILE, TRAINED_BANK_FILE, TRAIN_LOG_FILE, TRAIN_TRACES_FILE,
};
use super::config::RunConfig;
use super::data::{gen_dataset, read_dataset, write_dataset, GenSummary};
use super::eval::{eval_policy, EraArtifacts, MetricsReport, PolicyKind};
use super::pretrain::{pretrain_artifacts, PretrainSummary};
use super::train::{train_curriculum, TrainEpisodeLog};
use crate::audit::traces_to_jsonl;
use crate::bank::KnowledgeBank;
use crate::encoder::FeatureScale;
use crate::error::{io_err, EraError, Result};
use crate::seed::derive_seed;
use crate::sim::Difficulty;

fn require(path: &Path, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(EraError::MissingArtifact { path: path.to_path_buf(), hint })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn load_model(dir: &Path) -> Result<ModelArtifact> {
    let p = dir.join(MODEL_FILE);
    require(&p, "run `era pretrain` first")?;
    ModelArtifact::load(&p)
}

/// Explicit bank file, else the trained bank if present, else the expert bank.
pub fn bank_path(dir: &Path, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None if dir.join(TRAINED_BANK_FILE).exists() => dir.join(TRAINED_BANK_FILE),
        None => dir.join(BANK_FILE),
    }
}

pub fn load_bank(dir: &Path, explicit: Option<&Path>) -> Result<KnowledgeBank> {
    let path = bank_path(dir, explicit);
    require(&path, "run `era pretrain` first")?;
    KnowledgeBank::load(&path)
}

pub fn eval_file_name(difficulty: Difficulty, kind: PolicyKind) -> String {
    format!("eval_{}_{}.json", difficulty.name(), kind.name())
}

pub fn eval_traces_file_name(difficulty: Difficulty) -> String {
    format!("eval_{}_traces.jsonl", difficulty.name())
}

pub fn feature_scale(cfg: &RunConfig) -> FeatureScale {
    FeatureScale { d_threshold: cfg.episode.trigger_radius, v_max: cfg.episode.v_max }
}

pub fn gen_data(cfg: &RunConfig, out: &Path, episodes: Option<usize>) -> Result<GenSummary> {
    ensure_dir(out)?;
    let n = episodes.unwrap_or(cfg.harness.gen_episodes);
    let (records, summary) = gen_dataset(&cfg.episode, n, cfg.harness.gen_noise, cfg.harness.seed)?;
    write_dataset(&out.join(DATASET_FILE), &records)?;
    write_json(&out.join(GEN_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn pretrain(cfg: &RunConfig, out: &Path, dataset: Option<&Path>) -> Result<PretrainSummary> {
    ensure_dir(out)?;
    let path = dataset.map_or_else(|| out.join(DATASET_FILE), Path::to_path_buf);
    require(&path, "run `era gen-data` first")?;
    let records = read_dataset(&path)?;
    let bank_seed = derive_seed(cfg.harness.seed, "kmeans", 0);
    let res = pretrain_artifacts(&records, feature_scale(cfg), &cfg.pretrain, bank_seed)?;
    write_json(&out.join(MODEL_FILE), &ModelArtifact::new(&res.encoder, &res.model))?;
    res.bank.save(&out.join(BANK_FILE))?;
    write_jsonl(&out.join(PRETRAIN_CURVE_FILE), &res.curve)?;
    write_json(&out.join(PRETRAIN_SUMMARY_FILE), &res.summary)?;
    Ok(res.summary)
}

/// Runs the curriculum from the expert bank in `dir` and writes the trained
/// bank and per-episode log to `out`.
pub fn train(
    cfg: &RunConfig,
    dir: &Path,
    out: &Path,
    episodes: Option<usize>,
    traces: bool,
) -> Result<(Vec<TrainEpisodeLog>, KnowledgeBank)> {
    let model = load_model(dir)?;
    let bank_file = dir.join(BANK_FILE);
    require(&bank_file, "run `era pretrain` first")?;
    let mut bank = KnowledgeBank::load(&bank_file)?;
    ensure_dir(out)?;
    let mut buf = traces.then(Vec::new);
    let logs = train_curriculum(
        &mut bank,
        &model.encoder(),
        &model.dynamics(),
        &cfg.episode,
        &cfg.controller,
        episodes.unwrap_or(cfg.harness.train_episodes),
        cfg.harness.seed,
        buf.as_mut(),
    )?;
    write_jsonl(&out.join(TRAIN_LOG_FILE), &logs)?;
    bank.save(&out.join(TRAINED_BANK_FILE))?;
    if let Some(t) = buf {
        let path = out.join(TRAIN_TRACES_FILE);
        fs::write(&path, traces_to_jsonl(&t)?).map_err(io_err(&path))?;
    }
    Ok((logs, bank))
}

/// Evaluates `kinds` on one difficulty over the shared seed list and writes
/// one report per policy.
pub fn eval(
    cfg: &RunConfig,
    dir: &Path,
    out: &Path,
    bank: Option<&Path>,
    difficulty: Difficulty,
    seeds: Option<usize>,
    kinds: &[PolicyKind],
    traces: bool,
) -> Result<Vec<MetricsReport>> {
    let seeds = seeds.unwrap_or(cfg.harness.eval_seeds);
    let loaded = if kinds.contains(&PolicyKind::Era) {
        let model = load_model(dir)?;
        Some((model.encoder(), model.dynamics(), load_bank(dir, bank)?))
    } else {
        None
    };
    ensure_dir(out)?;
    let arts = loaded.as_ref().map(|(encoder, model, bank)| EraArtifacts { bank, encoder, model });
    let mut reports = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (report, tr) =
            eval_policy(kind, difficulty, seeds, cfg.harness.seed, &cfg.episode, &cfg.controller, arts)?;
        write_json(&out.join(eval_file_name(difficulty, kind)), &report)?;
        if traces && kind == PolicyKind::Era {
            let flat: Vec<_> = tr.into_iter().flatten().collect();
            let path = out.join(eval_traces_file_name(difficulty));
            fs::write(&path, traces_to_jsonl(&flat)?).map_err(io_err(&path))?;
        }
        reports.push(report);
    }
    Ok(reports)
}

/// All four stages into one directory, evaluating both policies on medium.
pub fn run_all(cfg: &RunConfig, out: &Path) -> Result<Vec<MetricsReport>> {
    gen_data(cfg, out, None)?;
    pretrain(cfg, out, None)?;
    train(cfg, out, out, None, false)?;
    eval(cfg, out, out, None, Difficulty::Medium, None, &[PolicyKind::Expert, PolicyKind::Era], false)
}
