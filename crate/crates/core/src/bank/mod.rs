//! Knowledge bank of `(latent code, maneuver, reliability)` experiences with
//! exact and inverted-file cosine retrieval.

pub mod io;
pub mod ivf;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EraError, Result};
use crate::math::{dot, Vec3};

pub use ivf::{default_n_list, default_n_probe, IvfIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub episode: u64,
    pub step: u64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub id: u64,
    pub z: Vec<f64>,
    pub a: Vec3,
    pub r: f64,
    pub origin: Origin,
}

/// Retrieval hyperparameters: top-k, softmax temperature and reliability gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { k: 8, tau: 0.1, alpha: 1.0 }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.tau > 0.0) || !(self.alpha >= 0.0) {
            return Err(EraError::Config("retrieval needs k >= 1, tau > 0, alpha >= 0".into()));
        }
        Ok(())
    }
}

/// A retrieved entry with its similarity and (once computed) softmax weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub sim: f64,
    pub reliability: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub candidates: Vec<Candidate>,
    /// Set when fewer than `min(k, bank size)` candidates were found.
    pub short: bool,
}

/// `a` ranks ahead of `b`: higher similarity, then lower id.
fn ranks_before(a: &Candidate, b: &Candidate) -> bool {
    a.sim > b.sim || (a.sim == b.sim && a.id < b.id)
}

/// Bounded best-k accumulator.
struct TopK {
    k: usize,
    items: Vec<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn offer(&mut self, c: Candidate) {
        if self.items.len() == self.k {
            if !ranks_before(&c, self.items.last().expect("k >= 1")) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.iter().position(|x| ranks_before(&c, x)).unwrap_or(self.items.len());
        self.items.insert(pos, c);
    }
}

fn unit_of(z: &[f64]) -> Vec<f64> {
    let n = dot(z, z).sqrt();
    if n > 0.0 {
        z.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; z.len()]
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBank {
    d: usize,
    seed: u64,
    entries: Vec<BankEntry>,
    /// Unit-normalized codes, slot-major.
    unit: Vec<f64>,
    slot_of: HashMap<u64, usize>,
    next_id: u64,
    index: Option<IvfIndex>,
}

impl KnowledgeBank {
    pub fn new(d: usize, seed: u64) -> Self {
        Self {
            d,
            seed,
            entries: Vec::new(),
            unit: Vec::new(),
            slot_of: HashMap::new(),
            next_id: 0,
            index: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest id not yet used by this bank.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn get(&self, id: u64) -> Option<&BankEntry> {
        self.slot_of.get(&id).map(|&s| &self.entries[s])
    }

    /// Entries in storage order (not sorted).
    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    /// Entries sorted by id.
    pub fn sorted_entries(&self) -> Vec<&BankEntry> {
        let mut v: Vec<&BankEntry> = self.entries.iter().collect();
        v.sort_by_key(|e| e.id);
        v
    }

    pub fn index(&self) -> Option<&IvfIndex> {
        self.index.as_ref()
    }

    pub fn has_fresh_index(&self) -> bool {
        self.index.as_ref().is_some_and(|i| !i.is_stale())
    }

    pub fn insert(&mut self, entry: BankEntry) -> Result<()> {
        if self.slot_of.contains_key(&entry.id) {
            return Err(EraError::DuplicateId(entry.id));
        }
        if !(entry.r > 0.0 && entry.r <= 1.0) {
            return Err(EraError::Reliability(entry.r));
        }
        if entry.z.len() != self.d {
            return Err(EraError::Dimension { expected: self.d, got: entry.z.len() });
        }
        if !entry.z.iter().all(|v| v.is_finite()) || !entry.a.is_finite() {
            return Err(EraError::InvalidEntry { id: entry.id, reason: "non-finite code or action".into() });
        }
        let unit = unit_of(&entry.z);
        if let Some(index) = self.index.as_mut() {
            index.add(entry.id, &unit);
        }
        self.unit.extend_from_slice(&unit);
        self.slot_of.insert(entry.id, self.entries.len());
        self.next_id = self.next_id.max(entry.id + 1);
        self.entries.push(entry);
        Ok(())
    }

    /// Multiplies the reliability of `id` by `factor`, never dropping below `floor`.
    pub fn penalize(&mut self, id: u64, factor: f64, floor: f64) -> Result<f64> {
        let slot = *self.slot_of.get(&id).ok_or(EraError::UnknownId(id))?;
        let e = &mut self.entries[slot];
        e.r = (e.r * factor).max(floor);
        Ok(e.r)
    }

    pub fn prune(&mut self, id: u64) -> Result<BankEntry> {
        let slot = self.slot_of.remove(&id).ok_or(EraError::UnknownId(id))?;
        let last = self.entries.len() - 1;
        let d = self.d;
        if slot != last {
            let moved = self.entries[last].id;
            self.slot_of.insert(moved, slot);
            self.unit.copy_within(last * d..(last + 1) * d, slot * d);
        }
        self.unit.truncate(last * d);
        if let Some(index) = self.index.as_mut() {
            index.remove(id);
        }
        Ok(self.entries.swap_remove(slot))
    }

    /// Builds (or rebuilds) the IVF index over all entries.
    pub fn build_index(&mut self, n_list: usize, n_probe: usize) -> Result<()> {
        if self.entries.is_empty() {
            return Err(EraError::EmptyBank);
        }
        if n_list == 0 || n_list > self.entries.len() {
            return Err(EraError::Config(format!(
                "n_list = {n_list} must lie in 1..={}",
                self.entries.len()
            )));
        }
        let ids: Vec<u64> = self.entries.iter().map(|e| e.id).collect();
        self.index = Some(IvfIndex::build(&ids, &self.unit, self.d, n_list, n_probe, self.seed));
        Ok(())
    }

    /// Builds the index with `⌈√|M|⌉` lists and the default probe count.
    pub fn build_default_index(&mut self) -> Result<()> {
        let n_list = default_n_list(self.len());
        self.build_index(n_list, default_n_probe(n_list))
    }

    pub fn drop_index(&mut self) {
        self.index = None;
    }

    fn query_unit(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d {
            return Err(EraError::Dimension { expected: self.d, got: z.len() });
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(EraError::NonFinite("query code"));
        }
        Ok(unit_of(z))
    }

    fn candidate(&self, slot: usize, sim: f64) -> Candidate {
        let e = &self.entries[slot];
        Candidate { id: e.id, sim, reliability: e.r, weight: 0.0 }
    }

    /// Full-scan top-k by cosine similarity; ties broken by lower id. A zero
    /// query scores 0 against every entry.
    pub fn search_exact(&self, z: &[f64], k: usize) -> Result<SearchResult> {
        if self.entries.is_empty() {
            return Err(EraError::EmptyBank);
        }
        let q = self.query_unit(z)?;
        let mut top = TopK::new(k.max(1));
        for (slot, u) in self.unit.chunks_exact(self.d).enumerate() {
            top.offer(self.candidate(slot, dot(&q, u)));
        }
        let short = top.items.len() < k.min(self.len());
        Ok(SearchResult { candidates: top.items, short })
    }

    /// Approximate top-k scanning the default number of probed lists.
    pub fn search_ann(&self, z: &[f64], k: usize) -> Result<SearchResult> {
        let n_probe = self.index.as_ref().ok_or(EraError::NoIndex)?.n_probe;
        self.search_ann_probes(z, k, n_probe)
    }

    /// Approximate top-k scanning `n_probe` lists.
    pub fn search_ann_probes(&self, z: &[f64], k: usize, n_probe: usize) -> Result<SearchResult> {
        let index = self.index.as_ref().ok_or(EraError::NoIndex)?;
        if index.is_stale() {
            return Err(EraError::StaleIndex {
                inserted: index.inserted_since_build,
                trained_on: index.trained_on,
            });
        }
        if self.entries.is_empty() {
            return Err(EraError::EmptyBank);
        }
        let q = self.query_unit(z)?;
        let mut top = TopK::new(k.max(1));
        for c in index.probe_order(&q, n_probe) {
            let list = &index.lists[c];
            for (&id, u) in list.ids.iter().zip(list.vectors.chunks_exact(self.d)) {
                let sim = dot(&q, u);
                if top.items.len() == top.k {
                    let worst = top.items.last().expect("k >= 1");
                    if sim < worst.sim || (sim == worst.sim && id > worst.id) {
                        continue;
                    }
                }
                top.offer(self.candidate(self.slot_of[&id], sim));
            }
        }
        let short = top.items.len() < k.min(self.len());
        Ok(SearchResult { candidates: top.items, short })
    }

    /// Similarity of the stored entry nearest to `z` (exact scan).
    pub fn nearest_similarity(&self, z: &[f64]) -> Result<Option<f64>> {
        if self.entries.is_empty() {
            return Ok(None);
        }
        Ok(self.search_exact(z, 1)?.candidates.first().map(|c| c.sim))
    }
}

/// Softmax over `sim/τ + α·ln r` restricted to the candidate set.
pub fn compute_weights(candidates: &[Candidate], params: &RetrievalParams) -> Result<Vec<Candidate>> {
    params.validate()?;
    if candidates.is_empty() {
        return Err(EraError::Config("no candidates to weight".into()));
    }
    let mut logits = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !(c.reliability > 0.0) {
            return Err(EraError::Reliability(c.reliability));
        }
        logits.push(c.sim / params.tau + params.alpha * c.reliability.ln());
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(candidates
        .iter()
        .zip(exps)
        .map(|(c, e)| Candidate { weight: e / total, ..*c })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;
    use rand::Rng as _;

    pub(crate) fn entry(id: u64, z: Vec<f64>, a: Vec3, r: f64) -> BankEntry {
        BankEntry { id, z, a, r, origin: Origin { episode: 0, step: id, source: Source::Expert } }
    }

    fn random_bank(n: usize, d: usize, seed: u64) -> KnowledgeBank {
        let mut rng = stream_rng(seed, "test", 0);
        let mut bank = KnowledgeBank::new(d, seed);
        for id in 0..n as u64 {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            bank.insert(entry(id, z, Vec3::new(1.0, 0.0, 0.0), 1.0)).unwrap();
        }
        bank
    }

    #[test]
    fn insert_then_find_itself() {
        let mut bank = random_bank(50, 8, 1);
        let z = vec![0.3, -0.2, 0.9, 0.0, 0.1, 0.5, -0.7, 0.2];
        bank.insert(entry(500, z.clone(), Vec3::ZERO, 0.7)).unwrap();
        let res = bank.search_exact(&z, 1).unwrap();
        assert_eq!(res.candidates[0].id, 500);
        assert!((res.candidates[0].sim - 1.0).abs() < 1e-12);
        assert_eq!(bank.next_id(), 501);
    }

    #[test]
    fn insert_validation() {
        let mut bank = random_bank(3, 4, 2);
        assert!(matches!(bank.insert(entry(0, vec![0.0; 4], Vec3::ZERO, 1.0)), Err(EraError::DuplicateId(0))));
        assert!(matches!(bank.insert(entry(9, vec![0.0; 4], Vec3::ZERO, 0.0)), Err(EraError::Reliability(_))));
        assert!(matches!(bank.insert(entry(9, vec![0.0; 4], Vec3::ZERO, 1.5)), Err(EraError::Reliability(_))));
        assert!(matches!(bank.insert(entry(9, vec![0.0; 3], Vec3::ZERO, 1.0)), Err(EraError::Dimension { .. })));
    }

    #[test]
    fn single_entry_bank() {
        let mut bank = KnowledgeBank::new(3, 0);
        bank.insert(entry(4, vec![1.0, 0.0, 0.0], Vec3::ZERO, 1.0)).unwrap();
        let res = bank.search_exact(&[0.0, 1.0, 0.0], 8).unwrap();
        assert_eq!(res.candidates.len(), 1);
        assert!(!res.short);
        assert_eq!(res.candidates[0].id, 4);
    }

    #[test]
    fn zero_query_returns_lowest_ids() {
        let bank = random_bank(20, 4, 3);
        let res = bank.search_exact(&[0.0; 4], 3).unwrap();
        let ids: Vec<u64> = res.candidates.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(res.candidates.iter().all(|c| c.sim == 0.0));
    }

    #[test]
    fn empty_bank_errors() {
        let bank = KnowledgeBank::new(4, 0);
        assert!(matches!(bank.search_exact(&[1.0; 4], 1), Err(EraError::EmptyBank)));
    }

    #[test]
    fn weights_closed_form() {
        let c = |id, sim, r| Candidate { id, sim, reliability: r, weight: 0.0 };
        let params = RetrievalParams { k: 8, tau: 0.1, alpha: 1.0 };
        let w = compute_weights(&[c(0, 0.9, 1.0), c(1, 0.7, 1.0)], &params).unwrap();
        // 1 / (1 + e^-2) and e^-2 / (1 + e^-2).
        assert!((w[0].weight - 0.880_797).abs() < 1e-4);
        assert!((w[1].weight - 0.119_203).abs() < 1e-4);

        let w = compute_weights(&[c(0, 0.5, 1.0), c(1, 0.5, (-1f64).exp())], &params).unwrap();
        assert!((w[0].weight / w[1].weight - std::f64::consts::E).abs() < 1e-12);

        let w = compute_weights(&[c(3, 0.1, 0.2)], &params).unwrap();
        assert_eq!(w[0].weight, 1.0);

        assert!(compute_weights(&[c(0, 0.5, 0.0)], &params).is_err());
    }

    #[test]
    fn penalize_decays_to_floor() {
        let mut bank = random_bank(2, 4, 4);
        assert!((bank.penalize(0, 0.9, 0.05).unwrap() - 0.9).abs() < 1e-15);
        for _ in 0..29 {
            bank.penalize(0, 0.9, 0.05).unwrap();
        }
        assert_eq!(bank.get(0).unwrap().r, 0.05);
        assert_eq!(bank.penalize(0, 0.9, 0.05).unwrap(), 0.05);
        assert!(matches!(bank.penalize(77, 0.9, 0.05), Err(EraError::UnknownId(77))));
    }

    #[test]
    fn prune_removes_and_keeps_order() {
        let mut bank = random_bank(30, 6, 5);
        bank.build_index(3, 3).unwrap();
        let q = bank.get(7).unwrap().z.clone();
        let before: Vec<u64> = bank.search_exact(&q, 10).unwrap().candidates.iter().map(|c| c.id).collect();
        bank.prune(7).unwrap();
        assert_eq!(bank.len(), 29);
        assert!(bank.get(7).is_none());
        assert!(bank.index().unwrap().list_of(7).is_none());
        let after: Vec<u64> = bank.search_exact(&q, 9).unwrap().candidates.iter().map(|c| c.id).collect();
        let expected: Vec<u64> = before.into_iter().filter(|&id| id != 7).collect();
        assert_eq!(after, expected);
        let ann: Vec<u64> = bank.search_ann_probes(&q, 9, 3).unwrap().candidates.iter().map(|c| c.id).collect();
        assert_eq!(ann, expected);
        assert!(matches!(bank.prune(7), Err(EraError::UnknownId(7))));
    }

    #[test]
    fn single_list_index_matches_exact() {
        let mut bank = random_bank(200, 8, 6);
        bank.build_index(1, 1).unwrap();
        assert_eq!(bank.index().unwrap().lists[0].ids.len(), 200);
        let mut rng = stream_rng(6, "q", 0);
        for _ in 0..20 {
            let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(bank.search_exact(&q, 8).unwrap(), bank.search_ann(&q, 8).unwrap());
        }
    }

    #[test]
    fn index_errors() {
        let mut bank = random_bank(10, 4, 7);
        assert!(matches!(bank.search_ann(&[1.0; 4], 2), Err(EraError::NoIndex)));
        assert!(bank.build_index(11, 1).is_err());
        bank.build_index(2, 1).unwrap();
        for id in 100..102 {
            bank.insert(entry(id, vec![1.0, 0.0, 0.0, 0.0], Vec3::ZERO, 1.0)).unwrap();
        }
        assert!(!bank.has_fresh_index());
        assert!(matches!(bank.search_ann(&[1.0; 4], 2), Err(EraError::StaleIndex { .. })));
    }

    #[test]
    fn every_entry_in_exactly_one_list() {
        let mut bank = random_bank(300, 8, 8);
        bank.build_default_index().unwrap();
        let index = bank.index().unwrap();
        let mut all: Vec<u64> = index.lists.iter().flat_map(|l| l.ids.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..300).collect::<Vec<_>>());
        assert_eq!(index.n_list(), 18);
        assert_eq!(index.n_probe, 3);
    }

    #[test]
    fn default_sizing() {
        assert_eq!(default_n_list(30_650), 176);
        assert_eq!(default_n_probe(176), 12);
        assert_eq!(default_n_probe(1), 1);
        assert_eq!(default_n_probe(317), 12);
        assert_eq!(default_n_probe(100), 12);
    }
}
