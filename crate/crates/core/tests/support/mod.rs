#![allow(dead_code)]

use era_core::bank::{BankEntry, KnowledgeBank, Origin, Source};
use era_core::event::{EgoFrame, EventElement, EventList, GlobalState};
use era_core::seed::Rng;
use era_core::Vec3;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn rand_vec3(rng: &mut Rng, r: f64) -> Vec3 {
    Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

pub fn random_event(rng: &mut Rng, max_len: usize) -> EventList {
    let n = rng.random_range(1..=max_len);
    let mut ids: Vec<u64> = (1..=4 * max_len as u64).collect();
    ids.shuffle(rng);
    let elements = ids[..n]
        .iter()
        .map(|&object_id| {
            let mut kind_onehot = [0.0; 3];
            kind_onehot[rng.random_range(0..3)] = 1.0;
            EventElement {
                object_id,
                rel_position: rand_vec3(rng, 10.0),
                rel_velocity: rand_vec3(rng, 6.0),
                kind_onehot,
                risk: rng.random_range(0.0..1.0),
            }
        })
        .collect();
    EventList {
        elements,
        global: GlobalState::new(rand_vec3(rng, 5.0), rand_vec3(rng, 40.0)),
        timestamp: rng.random_range(0.0..30.0),
        frame: EgoFrame::default(),
    }
}

pub fn entry(id: u64, z: Vec<f64>, a: Vec3, r: f64) -> BankEntry {
    BankEntry { id, z, a, r, origin: Origin { episode: 0, step: id, source: Source::Expert } }
}

pub fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// `n` codes around `clusters` random unit centers with isotropic spread.
pub fn clustered_bank(n: usize, d: usize, clusters: usize, spread: f64, rng: &mut Rng) -> (KnowledgeBank, Vec<Vec<f64>>) {
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| {
            let mut c: Vec<f64> = (0..d).map(|_| gauss(rng)).collect();
            unit(&mut c);
            c
        })
        .collect();
    let mut bank = KnowledgeBank::new(d, 11);
    for id in 0..n as u64 {
        let z = sample_near(&centers, spread, rng);
        bank.insert(entry(id, z, Vec3::new(1.0, 0.0, 0.0), rng.random_range(0.1..=1.0))).unwrap();
    }
    (bank, centers)
}

pub fn sample_near(centers: &[Vec<f64>], spread: f64, rng: &mut Rng) -> Vec<f64> {
    let c = &centers[rng.random_range(0..centers.len())];
    c.iter().map(|v| v + spread * gauss(rng)).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Brute-force top-k by similarity then id, computed independently of the bank.
pub fn oracle_top_k(bank: &KnowledgeBank, z: &[f64], k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = bank.entries().iter().map(|e| (e.id, cosine(z, &e.z))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
