//! Retrieval-based decision pipeline: encode, retrieve, weight, filter by the
//! latent energy test, cluster by direction, select and fuse.

pub mod adapt;
pub mod policy;
pub mod status;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bank::{compute_weights, Candidate, KnowledgeBank, RetrievalParams};
use crate::dynamics::{lyapunov_delta, TransitionModel};
use crate::encoder::{encode, EncoderParams, LatentCode};
use crate::error::{EraError, Result};
use crate::event::EventList;
use crate::kv::{parse_value, KvConfig};
use crate::math::Vec3;

pub use adapt::{adapt, r_phys, AdaptReport, DecisionRecord};
pub use policy::EraPolicy;
pub use status::{j_perf, record_status, reward, ExperienceBuffer, RewardShaping, StatusCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Keep the single candidate with the smallest energy change.
    MinDeltaV,
    /// Hand control to the potential-field expert.
    VpfExpert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Cluster by direction and fuse only the heaviest cluster.
    Cbs,
    /// Weighted mean over every surviving candidate.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub retrieval: RetrievalParams,
    pub margin: f64,
    pub theta_c: f64,
    pub fallback: Fallback,
    pub selection: Selection,
    pub shaping: RewardShaping,
    pub v_max: f64,
    pub use_ann: bool,
    pub implication_threshold: f64,
    pub novelty_gate: f64,
    pub penalty_factor: f64,
    pub reliability_floor: f64,
    pub expert_immune: bool,
    pub lambda_p: f64,
    pub lambda_r: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalParams::default(),
            margin: 0.0,
            theta_c: 0.5,
            fallback: Fallback::VpfExpert,
            selection: Selection::Cbs,
            shaping: RewardShaping::default(),
            v_max: 5.0,
            use_ann: true,
            implication_threshold: 0.2,
            novelty_gate: 0.95,
            penalty_factor: 0.9,
            reliability_floor: 0.05,
            expert_immune: false,
            lambda_p: 1.0,
            lambda_r: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        if !(self.theta_c > -1.0 && self.theta_c < 1.0) {
            return Err(EraError::Config(format!("theta_c = {} must lie in (-1, 1)", self.theta_c)));
        }
        if !self.margin.is_finite() || !(self.v_max > 0.0) {
            return Err(EraError::Config("margin must be finite and v_max positive".into()));
        }
        if !(self.penalty_factor > 0.0 && self.penalty_factor <= 1.0)
            || !(self.reliability_floor > 0.0 && self.reliability_floor <= 1.0)
        {
            return Err(EraError::Config("penalty factor and reliability floor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

impl std::str::FromStr for Fallback {
    type Err = EraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min_delta_v" => Ok(Self::MinDeltaV),
            "vpf_expert" => Ok(Self::VpfExpert),
            _ => Err(EraError::Config(format!("unknown fallback {s:?}"))),
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = EraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbs" => Ok(Self::Cbs),
            "average" => Ok(Self::Average),
            _ => Err(EraError::Config(format!("unknown selection {s:?}"))),
        }
    }
}

impl KvConfig for ControllerConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "k" => self.retrieval.k = parse_value(key, value)?,
            "tau" => self.retrieval.tau = parse_value(key, value)?,
            "alpha" => self.retrieval.alpha = parse_value(key, value)?,
            "margin" => self.margin = parse_value(key, value)?,
            "theta_c" => self.theta_c = parse_value(key, value)?,
            "fallback" => self.fallback = value.parse()?,
            "selection" => self.selection = value.parse()?,
            "reward_success" => self.shaping.success = parse_value(key, value)?,
            "reward_collision" => self.shaping.collision = parse_value(key, value)?,
            "reward_warning" => self.shaping.warning = parse_value(key, value)?,
            "reward_progress" => self.shaping.progress = parse_value(key, value)?,
            "use_ann" => self.use_ann = parse_value(key, value)?,
            "implication_threshold" => self.implication_threshold = parse_value(key, value)?,
            "novelty_gate" => self.novelty_gate = parse_value(key, value)?,
            "penalty_factor" => self.penalty_factor = parse_value(key, value)?,
            "reliability_floor" => self.reliability_floor = parse_value(key, value)?,
            "expert_immune" => self.expert_immune = parse_value(key, value)?,
            "lambda_p" => self.lambda_p = parse_value(key, value)?,
            "lambda_r" => self.lambda_r = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let fallback = match self.fallback {
            Fallback::MinDeltaV => "min_delta_v",
            Fallback::VpfExpert => "vpf_expert",
        };
        let selection = match self.selection {
            Selection::Cbs => "cbs",
            Selection::Average => "average",
        };
        [
            ("k", self.retrieval.k.to_string()),
            ("tau", self.retrieval.tau.to_string()),
            ("alpha", self.retrieval.alpha.to_string()),
            ("margin", self.margin.to_string()),
            ("theta_c", self.theta_c.to_string()),
            ("fallback", fallback.to_string()),
            ("selection", selection.to_string()),
            ("reward_success", self.shaping.success.to_string()),
            ("reward_collision", self.shaping.collision.to_string()),
            ("reward_warning", self.shaping.warning.to_string()),
            ("reward_progress", self.shaping.progress.to_string()),
            ("use_ann", self.use_ann.to_string()),
            ("implication_threshold", self.implication_threshold.to_string()),
            ("novelty_gate", self.novelty_gate.to_string()),
            ("penalty_factor", self.penalty_factor.to_string()),
            ("reliability_floor", self.reliability_floor.to_string()),
            ("expert_immune", self.expert_immune.to_string()),
            ("lambda_p", self.lambda_p.to_string()),
            ("lambda_r", self.lambda_r.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// A weighted candidate annotated with its energy change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: u64,
    pub sim: f64,
    /// Retrieval weight over the full candidate set.
    #[serde(rename = "w")]
    pub weight: f64,
    /// Weight renormalized over the survivors; zero for rejected candidates.
    #[serde(rename = "wf")]
    pub final_weight: f64,
    #[serde(rename = "dv")]
    pub delta_v: f64,
    #[serde(rename = "pass")]
    pub passed: bool,
    pub action: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    /// Indices into the candidate list, with renormalized weights applied.
    Survivors(Vec<usize>),
    /// Nothing passed and the fallback defers to the expert.
    Expert,
}

/// Marks candidates with `ΔV < margin` as passed and renormalizes their
/// weights. When none pass, `MinDeltaV` keeps the argmin (ties by lower id)
/// without marking it passed.
pub fn filter_stable(
    candidates: &mut [ScoredCandidate],
    z: &LatentCode,
    model: &TransitionModel,
    margin: f64,
    fallback: Fallback,
) -> FilterOutcome {
    for c in candidates.iter_mut() {
        c.delta_v = lyapunov_delta(model, z, c.action);
        c.passed = c.delta_v < margin;
        c.final_weight = 0.0;
    }
    let mut keep: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].passed).collect();
    if keep.is_empty() {
        match fallback {
            Fallback::VpfExpert => return FilterOutcome::Expert,
            Fallback::MinDeltaV => {
                let best = (0..candidates.len())
                    .min_by(|&a, &b| {
                        let (ca, cb) = (&candidates[a], &candidates[b]);
                        ca.delta_v.total_cmp(&cb.delta_v).then(ca.id.cmp(&cb.id))
                    })
                    .expect("non-empty candidate set");
                keep.push(best);
            }
        }
    }
    let total: f64 = keep.iter().map(|&i| candidates[i].weight).sum();
    for &i in &keep {
        candidates[i].final_weight = if total > 0.0 {
            candidates[i].weight / total
        } else {
            1.0 / keep.len() as f64
        };
    }
    FilterOutcome::Survivors(keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Member ids in join order; the first is the founder.
    pub ids: Vec<u64>,
    /// Cumulative final weight.
    #[serde(rename = "W")]
    pub weight: f64,
    #[serde(skip)]
    pub members: Vec<usize>,
}

impl Cluster {
    pub fn founder(&self) -> u64 {
        self.ids[0]
    }
}

/// Order in which survivors are visited: final weight descending, then id.
pub fn weight_order(candidates: &[ScoredCandidate], survivors: &[usize]) -> Vec<usize> {
    let mut order = survivors.to_vec();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.final_weight.total_cmp(&ca.final_weight).then(ca.id.cmp(&cb.id))
    });
    order
}

/// Greedy leader clustering by action direction. Zero actions share a
/// cluster of their own.
pub fn cluster_actions(candidates: &[ScoredCandidate], survivors: &[usize], theta_c: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut leaders: Vec<Vec3> = Vec::new();
    for i in weight_order(candidates, survivors) {
        let c = &candidates[i];
        let zero = c.action.norm() == 0.0;
        let home = leaders.iter().position(|&l| {
            let lz = l.norm() == 0.0;
            if zero || lz {
                zero && lz
            } else {
                c.action.cosine(l) >= theta_c
            }
        });
        match home {
            Some(k) => {
                clusters[k].ids.push(c.id);
                clusters[k].members.push(i);
                clusters[k].weight += c.final_weight;
            }
            None => {
                leaders.push(c.action);
                clusters.push(Cluster { ids: vec![c.id], weight: c.final_weight, members: vec![i] });
            }
        }
    }
    clusters
}

/// Index of the heaviest cluster; ties go to the lowest founder id.
pub fn select_cluster(clusters: &[Cluster]) -> Option<usize> {
    (0..clusters.len()).min_by(|&a, &b| {
        clusters[b]
            .weight
            .total_cmp(&clusters[a].weight)
            .then(clusters[a].founder().cmp(&clusters[b].founder()))
    })
}

/// Renormalized weighted mean of the members, clamped to `v_max`.
pub fn fuse(candidates: &[ScoredCandidate], cluster: &Cluster, v_max: f64) -> Vec3 {
    let mut a = Vec3::ZERO;
    for &i in &cluster.members {
        let c = &candidates[i];
        a += c.action * (c.final_weight / cluster.weight);
    }
    a.clamp_norm(v_max)
}

/// Serialized record of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub z: Vec<f64>,
    pub cands: Vec<ScoredCandidate>,
    pub clusters: Vec<Cluster>,
    /// Winning cluster index, or -1 when the expert took over.
    pub win: i64,
    pub action: Vec3,
    pub ms: f64,
}

impl DecisionTrace {
    pub fn expert_fallback(&self) -> bool {
        self.win < 0
    }

    /// Candidates kept by the energy filter, including a fallback survivor.
    pub fn survivors(&self) -> impl Iterator<Item = &ScoredCandidate> {
        self.cands.iter().filter(|c| c.final_weight > 0.0)
    }
}

/// Wall-clock split of one decision, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub encode: f64,
    pub retrieve: f64,
    pub stabilize: f64,
    pub fuse: f64,
    pub total: f64,
}

/// Result of `decide`: an action, or a request to use the expert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Action(Vec3),
    Expert,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Top-k retrieval, through the index when it is fresh.
pub fn retrieve(bank: &KnowledgeBank, z: &[f64], cfg: &ControllerConfig) -> Result<Vec<Candidate>> {
    let res = if cfg.use_ann && bank.has_fresh_index() {
        bank.search_ann(z, cfg.retrieval.k)?
    } else {
        bank.search_exact(z, cfg.retrieval.k)?
    };
    Ok(res.candidates)
}

/// Runs the full pipeline on one event list, returning per-stage timings.
pub fn decide_timed(
    bank: &KnowledgeBank,
    encoder: &EncoderParams,
    model: &TransitionModel,
    cfg: &ControllerConfig,
    event: &EventList,
) -> Result<(Decision, DecisionTrace, StageTimings)> {
    let start = Instant::now();
    if bank.is_empty() {
        return Err(EraError::EmptyBank);
    }
    if event.is_empty() {
        return Err(EraError::EmptyEvent);
    }
    let z = encode(encoder, event)?;
    let t_encode = ms(start);

    let t0 = Instant::now();
    let hits = retrieve(bank, z.as_slice(), cfg)?;
    let weighted = compute_weights(&hits, &cfg.retrieval)?;
    let mut cands: Vec<ScoredCandidate> = weighted
        .iter()
        .map(|c| ScoredCandidate {
            id: c.id,
            sim: c.sim,
            weight: c.weight,
            final_weight: 0.0,
            delta_v: 0.0,
            passed: false,
            action: bank.get(c.id).expect("retrieved id is live").a,
        })
        .collect();
    let t_retrieve = ms(t0);

    let t0 = Instant::now();
    let outcome = filter_stable(&mut cands, &z, model, cfg.margin, cfg.fallback);
    let t_stabilize = ms(t0);

    let t0 = Instant::now();
    let (decision, clusters, win) = match outcome {
        FilterOutcome::Expert => (Decision::Expert, Vec::new(), -1),
        FilterOutcome::Survivors(keep) => {
            let clusters = match cfg.selection {
                Selection::Cbs => cluster_actions(&cands, &keep, cfg.theta_c),
                Selection::Average => {
                    let members = weight_order(&cands, &keep);
                    vec![Cluster {
                        ids: members.iter().map(|&i| cands[i].id).collect(),
                        weight: members.iter().map(|&i| cands[i].final_weight).sum(),
                        members,
                    }]
                }
            };
            let win = select_cluster(&clusters).expect("at least one survivor");
            let action = fuse(&cands, &clusters[win], cfg.v_max);
            (Decision::Action(action), clusters, win as i64)
        }
    };
    let t_fuse = ms(t0);
    let total = ms(start);

    let trace = DecisionTrace {
        z: z.0,
        cands,
        clusters,
        win,
        action: match decision {
            Decision::Action(a) => a,
            Decision::Expert => Vec3::ZERO,
        },
        ms: total,
    };
    let timings = StageTimings { encode: t_encode, retrieve: t_retrieve, stabilize: t_stabilize, fuse: t_fuse, total };
    Ok((decision, trace, timings))
}

pub fn decide(
    bank: &KnowledgeBank,
    encoder: &EncoderParams,
    model: &TransitionModel,
    cfg: &ControllerConfig,
    event: &EventList,
) -> Result<(Decision, DecisionTrace)> {
    let (d, t, _) = decide_timed(bank, encoder, model, cfg, event)?;
    Ok((d, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: u64, w: f64, action: Vec3) -> ScoredCandidate {
        ScoredCandidate { id, sim: 0.0, weight: w, final_weight: w, delta_v: -1.0, passed: true, action }
    }

    #[test]
    fn clusters_by_direction() {
        let near = Vec3::new(0.99, 0.1, 0.0).normalized_or_zero();
        let c = [cand(0, 0.6, Vec3::new(1.0, 0.0, 0.0)), cand(1, 0.4, near)];
        assert_eq!(cluster_actions(&c, &[0, 1], 0.5).len(), 1);
        let c = [cand(0, 0.6, Vec3::new(1.0, 0.0, 0.0)), cand(1, 0.4, Vec3::new(-1.0, 0.0, 0.0))];
        assert_eq!(cluster_actions(&c, &[0, 1], 0.5).len(), 2);
    }

    #[test]
    fn sixty_degree_fixture_follows_weight_order() {
        // Unit actions at 0°, 60° and 120° in the plane; cos(60°) = 0.5 joins,
        // cos(120°) = -0.5 does not.
        let a0 = Vec3::new(1.0, 0.0, 0.0);
        let a60 = Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0);
        let a120 = Vec3::new(-0.5, 3f64.sqrt() / 2.0, 0.0);
        // Leader 60° first: both others sit exactly 60° away.
        let c = [cand(0, 0.3, a0), cand(1, 0.4, a60), cand(2, 0.3, a120)];
        let cl = cluster_actions(&c, &[0, 1, 2], 0.5 - 1e-12);
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].ids, vec![1, 0, 2]);
        // Leader 0° first: 120° founds its own cluster, 60° joins the first.
        let c = [cand(0, 0.5, a0), cand(1, 0.2, a60), cand(2, 0.3, a120)];
        let cl = cluster_actions(&c, &[0, 1, 2], 0.5 - 1e-12);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].ids, vec![0, 1]);
        assert_eq!(cl[1].ids, vec![2]);
    }

    #[test]
    fn zero_actions_group_together() {
        let c = [cand(0, 0.5, Vec3::ZERO), cand(1, 0.3, Vec3::new(1.0, 0.0, 0.0)), cand(2, 0.2, Vec3::ZERO)];
        let cl = cluster_actions(&c, &[0, 1, 2], 0.5);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].ids, vec![0, 2]);
    }

    #[test]
    fn selection_rules() {
        let mk = |id, w| Cluster { ids: vec![id], weight: w, members: vec![] };
        assert_eq!(select_cluster(&[mk(0, 0.55), mk(1, 0.45)]), Some(0));
        assert_eq!(select_cluster(&[mk(0, 1.0)]), Some(0));
        assert_eq!(select_cluster(&[mk(7, 0.5), mk(3, 0.5)]), Some(1));
        assert_eq!(select_cluster(&[]), None);
    }

    #[test]
    fn fuse_arithmetic() {
        let c = [cand(0, 0.5, Vec3::new(1.0, 0.0, 0.0)), cand(1, 0.5, Vec3::new(0.0, 1.0, 0.0))];
        let cl = Cluster { ids: vec![0, 1], weight: 1.0, members: vec![0, 1] };
        assert_eq!(fuse(&c, &cl, 5.0), Vec3::new(0.5, 0.5, 0.0));
        let one = Cluster { ids: vec![1], weight: 0.5, members: vec![1] };
        assert_eq!(fuse(&c, &one, 5.0), Vec3::new(0.0, 1.0, 0.0));
        let big = [cand(0, 1.0, Vec3::new(30.0, 40.0, 0.0))];
        let cl = Cluster { ids: vec![0], weight: 1.0, members: vec![0] };
        assert!((fuse(&big, &cl, 5.0).norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn fork_average_vs_cbs() {
        let c = [cand(0, 0.5, Vec3::new(1.0, 0.0, 0.0)), cand(1, 0.5, Vec3::new(-1.0, 0.0, 0.0))];
        let all = Cluster { ids: vec![0, 1], weight: 1.0, members: vec![0, 1] };
        assert!(fuse(&c, &all, 5.0).norm() < 1e-12);
        let cl = cluster_actions(&c, &[0, 1], 0.5);
        let win = select_cluster(&cl).unwrap();
        assert_eq!(cl[win].founder(), 0);
        assert!((fuse(&c, &cl[win], 5.0).norm() - 1.0).abs() < 1e-12);
    }

    fn model(d: usize, gamma: f64) -> TransitionModel {
        let mut m = TransitionModel::zeros(d);
        for row in &mut m.gamma {
            row.iter_mut().for_each(|g| *g = gamma);
        }
        m
    }

    #[test]
    fn filter_zero_model_passes_all() {
        let z = LatentCode(vec![1.0, -2.0, 0.5]);
        let mut c = [cand(0, 0.7, Vec3::new(1.0, 0.0, 0.0)), cand(1, 0.3, Vec3::new(0.0, 2.0, 0.0))];
        let out = filter_stable(&mut c, &z, &model(3, 0.0), 0.0, Fallback::MinDeltaV);
        assert_eq!(out, FilterOutcome::Survivors(vec![0, 1]));
        for x in &c {
            assert!((x.delta_v + 5.25).abs() < 1e-12);
            assert!(x.passed);
        }
    }

    #[test]
    fn filter_fallbacks() {
        let z = LatentCode(vec![0.1, 0.1]);
        let mk = || [cand(0, 0.5, Vec3::new(2.0, 0.0, 0.0)), cand(1, 0.3, Vec3::new(1.0, 0.0, 0.0)), cand(2, 0.2, Vec3::new(3.0, 0.0, 0.0))];
        let mut c = mk();
        let out = filter_stable(&mut c, &z, &model(2, 1e3), 0.0, Fallback::MinDeltaV);
        assert_eq!(out, FilterOutcome::Survivors(vec![1]));
        assert_eq!(c[1].final_weight, 1.0);
        assert!(c.iter().all(|x| !x.passed));

        let mut c = mk();
        let out = filter_stable(&mut c, &z, &model(2, 0.0), -2.0 * 0.02, Fallback::VpfExpert);
        assert_eq!(out, FilterOutcome::Expert);
    }

    #[test]
    fn survivors_renormalized() {
        let z = LatentCode(vec![1.0]);
        let mut m = TransitionModel::zeros(1);
        m.gamma[0] = vec![1.0, 0.0, 0.0];
        // ΔV = a_x² - 1: passes iff |a_x| < 1.
        let mut c = [cand(0, 0.6, Vec3::new(0.5, 0.0, 0.0)), cand(1, 0.1, Vec3::new(2.0, 0.0, 0.0)), cand(2, 0.3, Vec3::new(0.0, 1.0, 0.0))];
        let out = filter_stable(&mut c, &z, &m, 0.0, Fallback::MinDeltaV);
        assert_eq!(out, FilterOutcome::Survivors(vec![0, 2]));
        assert!((c[0].final_weight - 2.0 / 3.0).abs() < 1e-15);
        assert!((c[2].final_weight - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[1].final_weight, 0.0);
    }

    #[test]
    fn config_kv_round_trip() {
        let mut cfg = ControllerConfig::default();
        cfg.apply("fallback", "min_delta_v").unwrap();
        cfg.apply("selection", "average").unwrap();
        cfg.apply("tau", "0.05").unwrap();
        let mut back = ControllerConfig::default();
        for (k, v) in cfg.entries() {
            assert!(back.apply(&k, &v).unwrap());
        }
        assert_eq!(back, cfg);
        assert!(!back.apply("nope", "1").unwrap());
        assert!(ControllerConfig { theta_c: 1.0, ..ControllerConfig::default() }.validate().is_err());
    }
}
