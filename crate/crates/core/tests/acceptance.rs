//! Acceptance suite. Runs every criterion in order and prints one
//! `criterion N: PASS|FAIL` line each; the process fails if any criterion
//! fails. Pass criterion numbers as arguments to run a subset.

mod support;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

use era_core::audit::{read_traces, traces_to_jsonl, verify_traces};
use era_core::bank::{compute_weights, KnowledgeBank, RetrievalParams};
use era_core::controller::{
    cluster_actions, fuse, select_cluster, weight_order, Cluster, ControllerConfig, EraPolicy, ScoredCandidate,
    Selection,
};
use era_core::dynamics::{
    fit_dynamics, lyapunov_delta, one_step_mse, project_spectral, TransitionModel, Transition, CONTRACTION_BOUND,
    DEFAULT_RIDGE,
};
use era_core::encoder::{encode, EncoderParams, FeatureScale, LatentCode, HIDDEN_DIM, LATENT_DIM};
use era_core::harness::artifacts::{BANK_FILE, TRAINED_BANK_FILE, TRAIN_LOG_FILE};
use era_core::harness::eval::without_timing;
use era_core::harness::pipeline::{self, eval_file_name, load_bank, load_model};
use era_core::harness::{bench, eval_policy, EraArtifacts, MetricsReport, PolicyKind, RunConfig, TrainEpisodeLog};
use era_core::seed::stream_rng;
use era_core::sim::{run_episode_from, spawn_world, Difficulty, EpisodeConfig, Intruder, IntruderKind, Terminal};
use era_core::Vec3;

use support::*;

const SEED: u64 = 7;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Pipeline {
    _tmp: tempfile::TempDir,
    cfg: RunConfig,
    reports: Vec<MetricsReport>,
}

impl Pipeline {
    fn dir(&self) -> &Path {
        self._tmp.path()
    }
}

fn config() -> RunConfig {
    RunConfig::default().with_seed(SEED).unwrap()
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config();
        let reports = pipeline::run_all(&cfg, tmp.path()).unwrap();
        Pipeline { _tmp: tmp, cfg, reports }
    })
}

fn random_params(rng: &mut era_core::seed::Rng) -> EncoderParams {
    let mut p = EncoderParams::init(LATENT_DIM, HIDDEN_DIM, FeatureScale::default(), rng);
    for i in 0..p.weights.len() {
        p.weights.set(i, rng.random_range(-1.0..1.0));
    }
    p
}

fn sigma_max(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mat = DMatrix::from_fn(d, m[0].len(), |i, j| m[i][j]);
    mat.singular_values().max()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut era_core::seed::Rng) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| gauss(rng)).collect()).collect()
}

fn scaled_to(m: Vec<Vec<f64>>, sigma: f64) -> Vec<Vec<f64>> {
    let s = sigma / sigma_max(&m);
    m.into_iter().map(|r| r.into_iter().map(|v| v * s).collect()).collect()
}

fn c1_weights() -> Verdict {
    let mut rng = stream_rng(SEED, "c1", 0);
    let mut worst_sum: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut leaked = 0usize;
    for trial in 0..500u64 {
        let n = 64;
        let mut bank = KnowledgeBank::new(8, trial);
        for id in 0..n {
            let z: Vec<f64> = (0..8).map(|_| gauss(&mut rng)).collect();
            bank.insert(entry(id, z, Vec3::ZERO, rng.random_range(0.05..=1.0))).unwrap();
        }
        let params = RetrievalParams {
            k: rng.random_range(1..=32),
            tau: rng.random_range(0.05..1.0),
            alpha: rng.random_range(0.0..2.0),
        };
        let q: Vec<f64> = (0..8).map(|_| gauss(&mut rng)).collect();
        let hits = bank.search_exact(&q, params.k).unwrap().candidates;
        let weighted = compute_weights(&hits, &params).unwrap();

        let mut dense = vec![0.0; n as usize];
        for c in &weighted {
            dense[c.id as usize] = c.weight;
        }
        worst_sum = worst_sum.max((dense.iter().sum::<f64>() - 1.0).abs());
        leaked += (0..n)
            .filter(|id| !hits.iter().any(|c| c.id == *id) && dense[*id as usize] != 0.0)
            .count();

        let raw: Vec<f64> = hits
            .iter()
            .map(|c| (c.sim / params.tau).exp() * bank.get(c.id).unwrap().r.powf(params.alpha))
            .collect();
        let total: f64 = raw.iter().sum();
        for (c, r) in weighted.iter().zip(&raw) {
            worst_oracle = worst_oracle.max((c.weight - r / total).abs());
        }
    }
    verdict(
        worst_sum <= 1e-9 && leaked == 0 && worst_oracle <= 1e-6,
        format!("max |sum-1| {worst_sum:.2e}, non-candidate leaks {leaked}, max oracle error {worst_oracle:.2e}"),
    )
}

fn c2_permutation() -> Verdict {
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let mut rng = stream_rng(SEED, "c2", i);
        let params = random_params(&mut rng);
        let event = random_event(&mut rng, 12);
        let mut shuffled = event.clone();
        shuffled.elements.shuffle(&mut rng);
        let a = encode(&params, &event).unwrap();
        let b = encode(&params, &shuffled).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            worst = worst.max((x - y).abs());
        }
    }
    verdict(worst <= 1e-12, format!("1000 triples, max |Δz| {worst:.2e}"))
}

fn c3_contraction() -> Verdict {
    let mut rng = stream_rng(SEED, "c3", 0);
    let d = LATENT_DIM;
    let mut worst_sigma: f64 = 0.0;
    let mut positive = 0usize;
    let mut increases = 0usize;
    for m in 0..50 {
        let target = 0.5 + 20.0 * m as f64 / 49.0;
        let raw = scaled_to(random_matrix(d, d, &mut rng), target);
        let psi = project_spectral(&raw, CONTRACTION_BOUND);
        worst_sigma = worst_sigma.max(sigma_max(&psi));
        let model = TransitionModel::from_operators(psi, random_matrix(d, 3, &mut rng), CONTRACTION_BOUND);
        for _ in 0..20 {
            let z = LatentCode((0..d).map(|_| gauss(&mut rng)).collect());
            if !(lyapunov_delta(&model, &z, Vec3::ZERO) < 0.0) {
                positive += 1;
            }
        }
        let mut z = LatentCode((0..d).map(|_| gauss(&mut rng)).collect());
        let mut prev = z.energy();
        for _ in 0..1000 {
            z = era_core::dynamics::predict(&model, &z, Vec3::ZERO);
            let e = z.energy();
            if e > prev {
                increases += 1;
            }
            prev = e;
        }
    }
    verdict(
        worst_sigma <= CONTRACTION_BOUND + 1e-8 && positive == 0 && increases == 0,
        format!("max σ {worst_sigma:.10}, unforced ΔV ≥ 0 in {positive}/1000, rollout increases {increases}"),
    )
}

fn synthetic_transitions(
    psi: &[Vec<f64>],
    gamma: &[Vec<f64>],
    n: usize,
    noise: f64,
    rng: &mut era_core::seed::Rng,
) -> Vec<Transition> {
    let d = psi.len();
    let mut out = Vec::with_capacity(n);
    let mut z: Vec<f64> = vec![0.0; d];
    for t in 0..n {
        if t % 50 == 0 {
            z = (0..d).map(|_| gauss(rng)).collect();
        }
        let a = Vec3::new(gauss(rng), gauss(rng), gauss(rng)) * 2.0;
        let next: Vec<f64> = (0..d)
            .map(|i| {
                psi[i].iter().zip(&z).map(|(p, v)| p * v).sum::<f64>()
                    + gamma[i].iter().zip(a.to_array()).map(|(g, v)| g * v).sum::<f64>()
                    + noise * gauss(rng)
            })
            .collect();
        out.push(Transition { z: z.clone(), action: a, z_next: next.clone() });
        z = next;
    }
    out
}

fn c4_fidelity() -> Verdict {
    let mut rng = stream_rng(SEED, "c4", 0);
    let d = LATENT_DIM;
    let psi = scaled_to(random_matrix(d, d, &mut rng), 0.9);
    let gamma: Vec<Vec<f64>> = random_matrix(d, 3, &mut rng).into_iter().map(|r| r.iter().map(|v| v * 0.3).collect()).collect();

    let clean = synthetic_transitions(&psi, &gamma, 4000, 0.0, &mut rng);
    let fit = fit_dynamics(&clean, DEFAULT_RIDGE, CONTRACTION_BOUND).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            worst = worst.max((fit.psi[i][j] - psi[i][j]).abs());
        }
        for k in 0..3 {
            worst = worst.max((fit.gamma[i][k] - gamma[i][k]).abs());
        }
    }

    let noisy = synthetic_transitions(&psi, &gamma, 5000, 1e-3, &mut rng);
    let (train, held) = noisy.split_at(4000);
    let fit = fit_dynamics(train, DEFAULT_RIDGE, CONTRACTION_BOUND).unwrap();
    let mse = one_step_mse(&fit, held);
    verdict(
        worst <= 1e-6 && mse < 1e-3,
        format!("noiseless max entry error {worst:.2e}, held-out one-step MSE {mse:.2e}"),
    )
}

fn c5_retrieval() -> Verdict {
    let mut rng = stream_rng(SEED, "c5", 0);
    let d = LATENT_DIM;
    let mut bank = KnowledgeBank::new(d, 5);
    let mut codes: Vec<Vec<f64>> = Vec::new();
    for id in 0..10_000u64 {
        let z: Vec<f64> = if id % 50 == 49 {
            codes[rng.random_range(0..codes.len())].clone()
        } else {
            (0..d).map(|_| gauss(&mut rng)).collect()
        };
        codes.push(z.clone());
        bank.insert(entry(id, z, Vec3::ZERO, 1.0)).unwrap();
    }
    let mut mismatches = 0usize;
    for q in 0..400 {
        let z: Vec<f64> = if q % 2 == 0 {
            codes[rng.random_range(0..codes.len())].clone()
        } else {
            (0..d).map(|_| gauss(&mut rng)).collect()
        };
        for k in [1, 8, 32] {
            let got = bank.search_exact(&z, k).unwrap().candidates;
            let want = oracle_top_k(&bank, &z, k);
            let same = got.len() == want.len()
                && got.iter().zip(&want).all(|(g, (id, s))| g.id == *id && (g.sim - s).abs() <= 1e-12);
            mismatches += !same as usize;
        }
    }

    let (mut big, centers) = clustered_bank(30_650, d, 300, 0.12, &mut rng);
    big.build_default_index().unwrap();
    let n_list = big.index().unwrap().n_list();
    let n_probe = big.index().unwrap().n_probe;
    let (mut hits, mut wanted, mut full_probe_diffs) = (0usize, 0usize, 0usize);
    for q in 0..500 {
        let z = sample_near(&centers, 0.12, &mut rng);
        let exact = big.search_exact(&z, 8).unwrap().candidates;
        let ann = big.search_ann(&z, 8).unwrap().candidates;
        wanted += exact.len();
        hits += exact.iter().filter(|c| ann.iter().any(|a| a.id == c.id)).count();
        if q < 100 {
            let all = big.search_ann_probes(&z, 8, n_list).unwrap().candidates;
            full_probe_diffs += (all != exact) as usize;
        }
    }
    let recall = hits as f64 / wanted as f64;
    verdict(
        mismatches == 0 && recall >= 0.95 && full_probe_diffs == 0,
        format!(
            "oracle mismatches {mismatches}/1200, recall@8 {recall:.4} (n_list {n_list}, n_probe {n_probe}), \
             full-probe differences {full_probe_diffs}/100"
        ),
    )
}

fn c6_complexity() -> Verdict {
    let p = pipeline();
    let model = load_model(p.dir()).unwrap();
    let b = load_bank(p.dir(), None).unwrap();
    let h = &p.cfg.harness;
    let report = bench(
        &b,
        &model.encoder(),
        &model.dynamics(),
        &p.cfg.controller,
        &p.cfg.episode,
        &[10_000, 30_000, 100_000],
        h.bench_queries,
        h.bench_pad_noise,
        SEED,
    )
    .unwrap();
    let at = |n: usize| report.sizes.iter().find(|s| s.size == n).unwrap();
    let s30 = at(30_000);
    let decide = report.sizes.iter().map(|s| s.stages.end_to_end.p50).fold(0.0, f64::max);
    let ratio = report.scaling_ratio.unwrap_or(f64::INFINITY);
    verdict(
        s30.stages.retrieve.p50 < 1.0 && decide < 20.0 && ratio < 4.0,
        format!(
            "retrieve p50 at 30k {:.4} ms, max decide p50 {decide:.4} ms, scaling ratio {ratio:.3}, recall@8 {:.4}/{:.4}/{:.4}",
            s30.stages.retrieve.p50,
            at(10_000).recall_at_k,
            s30.recall_at_k,
            at(100_000).recall_at_k
        ),
    )
}

fn fork_fixture() -> (f64, f64) {
    let a = Vec3::new(3.0, 4.0, 0.0);
    let mk = |id, action| ScoredCandidate {
        id,
        sim: 0.9,
        weight: 0.5,
        final_weight: 0.5,
        delta_v: -1.0,
        passed: true,
        action,
    };
    let cands = [mk(0, a), mk(1, a * -1.0)];
    let keep = [0, 1];
    let members = weight_order(&cands, &keep);
    let all = Cluster { ids: members.iter().map(|&i| cands[i].id).collect(), weight: 1.0, members };
    let avg = fuse(&cands, &all, 5.0).norm();
    let clusters = cluster_actions(&cands, &keep, 0.5);
    let win = select_cluster(&clusters).unwrap();
    let cbs = fuse(&cands, &clusters[win], 5.0).norm() / a.norm();
    (avg, cbs)
}

/// Straight corridor toward the goal with one static obstacle on the line.
/// Every stored state carries a mirrored pair of swerves with identical
/// codes, so each retrieved set is balanced between left and right.
fn corridor(seed: u64, selection: Selection) -> Terminal {
    let mut rng = stream_rng(seed, "corridor", 0);
    let cfg = EpisodeConfig { intruder_count: 0, seed, ..EpisodeConfig::default() };
    let mut world = spawn_world(&cfg).unwrap();
    let obstacle = Vec3::new(6.0 + rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    world.ego.position = Vec3::ZERO;
    world.ego.velocity = Vec3::ZERO;
    world.ego.goal = Vec3::new(25.0, 0.0, 0.0);
    world.intruders = vec![Intruder { id: 1, kind: IntruderKind::TypeC, position: obstacle, velocity: Vec3::ZERO, risk: 0.0 }];

    let params = EncoderParams::init(LATENT_DIM, HIDDEN_DIM, FeatureScale::default(), &mut rng);
    let mut bank = KnowledgeBank::new(LATENT_DIM, seed);
    let left = Vec3::new(3.0, 4.0, 0.0);
    let right = Vec3::new(3.0, -4.0, 0.0);
    let mut next = 0u64;
    for xi in 0..40 {
        let mut w = world.clone();
        w.ego.position = Vec3::new(xi as f64 * 0.25, 0.0, 0.0);
        w.ego.velocity = Vec3::new(3.0, 0.0, 0.0);
        let Some(event) = era_core::sim::sense_events(&w, &cfg) else { continue };
        let z = encode(&params, &event).unwrap().0;
        for a in [left, right] {
            bank.insert(entry(next, z.clone(), a, 1.0)).unwrap();
            next += 1;
        }
    }
    let model = TransitionModel::from_operators(
        (0..LATENT_DIM).map(|i| (0..LATENT_DIM).map(|j| if i == j { 0.5 } else { 0.0 }).collect()).collect(),
        vec![vec![0.0; 3]; LATENT_DIM],
        CONTRACTION_BOUND,
    );
    let ctrl = ControllerConfig { selection, use_ann: false, ..ControllerConfig::default() };
    let mut policy = EraPolicy::new(&bank, &params, &model, &ctrl);
    run_episode_from(&mut policy, world, &cfg, &ctrl.shaping).unwrap().outcome.terminal
}

fn c7_fork() -> Verdict {
    let (avg, cbs) = fork_fixture();
    let mut avg_hits = 0;
    let mut cbs_hits = 0;
    for seed in 0..10 {
        avg_hits += (corridor(seed, Selection::Average) == Terminal::Collision) as usize;
        cbs_hits += (corridor(seed, Selection::Cbs) == Terminal::Collision) as usize;
    }
    verdict(
        avg < 1e-12 && cbs >= 0.99 && avg_hits == 10 && cbs_hits == 0,
        format!(
            "fork: average |a| {avg:.1e}, CBS |a|/|a_member| {cbs:.3}; corridor collisions average {avg_hits}/10, CBS {cbs_hits}/10"
        ),
    )
}

fn read_logs(path: &Path) -> Vec<TrainEpisodeLog> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn c8_pipeline() -> Verdict {
    let p = pipeline();
    let expert = p.reports.iter().find(|r| r.policy == PolicyKind::Expert).unwrap();
    let era = p.reports.iter().find(|r| r.policy == PolicyKind::Era).unwrap();
    let initial = KnowledgeBank::load(&p.dir().join(BANK_FILE)).unwrap().len();
    let trained = KnowledgeBank::load(&p.dir().join(TRAINED_BANK_FILE)).unwrap().len();
    let logs = read_logs(&p.dir().join(TRAIN_LOG_FILE));
    let paired = expert.seed_list == era.seed_list && era.seeds == 25;
    verdict(
        paired
            && era.success_rate >= expert.success_rate
            && era.collision_rate <= 0.10
            && trained > initial
            && logs.len() == 100,
        format!(
            "medium over {} paired seeds: ERA success {:.3} collision {:.3}, expert success {:.3} collision {:.3}; \
             bank {initial} -> {trained} over {} episodes",
            era.seeds,
            era.success_rate,
            era.collision_rate,
            expert.success_rate,
            expert.collision_rate,
            logs.len()
        ),
    )
}

fn c9_audit() -> Verdict {
    let p = pipeline();
    let model = load_model(p.dir()).unwrap();
    let bank = load_bank(p.dir(), None).unwrap();
    let (encoder, dynamics) = (model.encoder(), model.dynamics());
    let arts = EraArtifacts { bank: &bank, encoder: &encoder, model: &dynamics };
    let mut traces = Vec::new();
    let mut round = 0u64;
    while traces.len() < 10_000 {
        for d in [Difficulty::Medium, Difficulty::Hard, Difficulty::Extreme] {
            let (_, tr) = eval_policy(
                PolicyKind::Era,
                d,
                25,
                SEED + 1000 + round,
                &p.cfg.episode,
                &p.cfg.controller,
                Some(arts),
            )
            .unwrap();
            traces.extend(tr.into_iter().flatten());
        }
        round += 1;
    }
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("traces.jsonl");
    fs::write(&file, traces_to_jsonl(&traces).unwrap()).unwrap();

    let replay_model = load_model(p.dir()).unwrap().dynamics();
    let replay_bank = load_bank(p.dir(), None).unwrap();
    let parsed = read_traces(&file).unwrap();
    let c = &p.cfg.controller;
    let rep = verify_traces(&parsed, &replay_bank, &replay_model, c.margin, c.v_max);
    verdict(
        rep.ok() && rep.decisions >= 10_000 && rep.passed > 0,
        format!(
            "{} decisions, {} candidates, {} survivors, {} expert fallbacks, {} replayed, {} violations{}",
            rep.decisions,
            rep.candidates,
            rep.passed,
            rep.expert_fallbacks,
            rep.replayed,
            rep.violations.len(),
            rep.violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

fn c10_determinism() -> Verdict {
    let p = pipeline();
    let tmp = tempfile::tempdir().unwrap();
    let reports = pipeline::run_all(&config(), tmp.path()).unwrap();
    let list = |dir: &Path| -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect()
    };
    let (a, b) = (list(p.dir()), list(tmp.path()));
    let timed: Vec<String> = [PolicyKind::Expert, PolicyKind::Era]
        .iter()
        .map(|&k| eval_file_name(Difficulty::Medium, k))
        .collect();
    let mut differing = Vec::new();
    if a.keys().ne(b.keys()) {
        differing.push("file sets".to_string());
    }
    for (name, bytes) in &a {
        let Some(other) = b.get(name) else { continue };
        let same = if timed.contains(name) {
            let x: MetricsReport = serde_json::from_slice(bytes).unwrap();
            let y: MetricsReport = serde_json::from_slice(other).unwrap();
            serde_json::to_vec(&without_timing(&x)).unwrap() == serde_json::to_vec(&without_timing(&y)).unwrap()
        } else {
            bytes == other
        };
        if !same {
            differing.push(name.clone());
        }
    }
    let same_reports = p.reports.iter().zip(&reports).all(|(x, y)| without_timing(x) == without_timing(y));
    verdict(
        differing.is_empty() && same_reports,
        format!(
            "{} artifacts compared ({} byte-for-byte, {} reports without wall-clock fields), differing: {:?}",
            a.len(),
            a.len() - timed.len(),
            timed.len(),
            differing
        ),
    )
}

type Criterion = fn() -> Verdict;

fn main() {
    let criteria: [(u32, Criterion); 10] = [
        (1, c1_weights),
        (2, c2_permutation),
        (3, c3_contraction),
        (4, c4_fidelity),
        (5, c5_retrieval),
        (6, c6_complexity),
        (7, c7_fork),
        (8, c8_pipeline),
        (9, c9_audit),
        (10, c10_determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "criterion {n}: {} {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
