//! Replay verification of serialized decision traces against a bank snapshot
//! and a transition model.
//!
//! The checks recompute similarities and energy changes through separate code
//! paths (nalgebra for the dynamics) and refuse any surviving candidate whose
//! recomputed energy change is not strictly below the margin.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bank::KnowledgeBank;
use crate::controller::DecisionTrace;
use crate::dynamics::TransitionModel;
use crate::error::{io_err, EraError, Result};
use crate::math::Vec3;

/// Relative tolerance when comparing logged and recomputed reals.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub decisions: usize,
    pub candidates: usize,
    /// Candidates marked as passing the filter.
    pub passed: usize,
    pub expert_fallbacks: usize,
    /// Decisions whose fused action was replayed bit-for-bit.
    pub replayed: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn traces_to_jsonl(traces: &[DecisionTrace]) -> Result<String> {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_traces(text: &str, source: &str) -> Result<Vec<DecisionTrace>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| EraError::Parse { path: source.to_string(), line: n + 1, msg: e.to_string() })
        })
        .collect()
}

pub fn read_traces(path: &Path) -> Result<Vec<DecisionTrace>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_traces(&text, &path.display().to_string())
}

struct Dynamics {
    psi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl Dynamics {
    fn new(model: &TransitionModel) -> Self {
        let d = model.psi.len();
        Self {
            psi: DMatrix::from_fn(d, d, |i, j| model.psi[i][j]),
            gamma: DMatrix::from_fn(d, 3, |i, j| model.gamma[i][j]),
        }
    }

    fn delta_v(&self, z: &[f64], a: Vec3) -> f64 {
        let z = DVector::from_column_slice(z);
        let a = DVector::from_column_slice(&a.to_array());
        let next = &self.psi * &z + &self.gamma * a;
        next.norm_squared() - z.norm_squared()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REPLAY_TOLERANCE * (1.0 + a.abs().max(b.abs()))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let va = DVector::from_column_slice(a);
    let vb = DVector::from_column_slice(b);
    let n = va.norm() * vb.norm();
    if n > 0.0 {
        va.dot(&vb) / n
    } else {
        0.0
    }
}

/// Checks every trace; violations are collected rather than returned early.
pub fn verify_traces(
    traces: &[DecisionTrace],
    bank: &KnowledgeBank,
    model: &TransitionModel,
    margin: f64,
    v_max: f64,
) -> AuditReport {
    let dynamics = Dynamics::new(model);
    let mut rep = AuditReport { decisions: traces.len(), ..AuditReport::default() };
    for (n, t) in traces.iter().enumerate() {
        let mut bad = |msg: String| rep.violations.push(format!("decision {n}: {msg}"));
        let mut any_pass = false;
        let mut live = true;
        for c in &t.cands {
            let Some(entry) = bank.get(c.id) else {
                bad(format!("candidate {} not in bank", c.id));
                live = false;
                continue;
            };
            let sim = cosine(&t.z, &entry.z);
            if !close(sim, c.sim) {
                bad(format!("candidate {}: sim {} replays as {sim}", c.id, c.sim));
            }
            let dv = dynamics.delta_v(&t.z, entry.a);
            if !close(dv, c.delta_v) {
                bad(format!("candidate {}: dv {} replays as {dv}", c.id, c.delta_v));
            }
            if c.passed {
                any_pass = true;
                if !(dv < margin && c.delta_v < margin) {
                    bad(format!("candidate {} passed with dv {dv} >= margin {margin}", c.id));
                }
            } else if c.delta_v < margin {
                bad(format!("candidate {} rejected although dv {} < margin", c.id, c.delta_v));
            }
        }
        rep.candidates += t.cands.len();
        rep.passed += t.cands.iter().filter(|c| c.passed).count();

        if t.win < 0 {
            rep.expert_fallbacks += 1;
            if any_pass {
                bad("expert fallback although a candidate passed".into());
            }
            continue;
        }
        let Some(cluster) = t.clusters.get(t.win as usize) else {
            bad(format!("winning cluster {} missing", t.win));
            continue;
        };
        if !live {
            continue;
        }
        let mut w = 0.0;
        let mut members = Vec::with_capacity(cluster.ids.len());
        for id in &cluster.ids {
            match t.cands.iter().find(|c| c.id == *id) {
                Some(c) if c.final_weight > 0.0 => {
                    w += c.final_weight;
                    members.push((c.final_weight, bank.get(*id).expect("checked above").a));
                }
                _ => bad(format!("cluster member {id} is not a survivor")),
            }
        }
        if w.to_bits() != cluster.weight.to_bits() {
            bad(format!("cluster weight {} replays as {w}", cluster.weight));
        }
        let mut a = Vec3::ZERO;
        for (wi, ai) in members {
            a += ai * (wi / w);
        }
        let norm = a.norm();
        if norm > v_max && norm > 0.0 {
            a = a * (v_max / norm);
        }
        if a.to_array().map(f64::to_bits) == t.action.to_array().map(f64::to_bits) {
            rep.replayed += 1;
        } else {
            bad(format!("fused action {:?} replays as {a:?}", t.action));
        }
    }
    rep
}
