//! Inverted-file index over unit-normalized latent codes.
//!
//! Centroids come from spherical k-means (k-means++ seeding, fixed iteration
//! count) trained on a bounded sample; queries scan only the `n_probe` lists
//! whose centroids are most similar to the query.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::dot;
use crate::seed::stream_rng;

pub const KMEANS_ITERATIONS: usize = 20;
/// Training sample cap per centroid.
pub const TRAIN_POINTS_PER_LIST: usize = 64;
/// Upper bound on probed lists regardless of `n_list`.
pub const MAX_DEFAULT_PROBES: usize = 12;
/// Fraction of the trained size that may be inserted before a rebuild is due.
pub const REBUILD_FRACTION: f64 = 0.10;

/// `⌈√n⌉` lists.
pub fn default_n_list(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// `min(⌈n_list/8⌉, 12)` probes, at least one.
pub fn default_n_probe(n_list: usize) -> usize {
    n_list.div_ceil(8).clamp(1, MAX_DEFAULT_PROBES).min(n_list)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfList {
    pub ids: Vec<u64>,
    /// Unit vectors, `ids.len() × d`.
    pub vectors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfIndex {
    pub d: usize,
    /// `n_list × d` unit centroids.
    pub centroids: Vec<f64>,
    pub lists: Vec<IvfList>,
    pub n_probe: usize,
    pub trained_on: usize,
    pub inserted_since_build: usize,
    pub seed: u64,
}

fn nearest(centroids: &[f64], d: usize, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (c, cent) in centroids.chunks_exact(d).enumerate() {
        let s = dot(cent, v);
        if s > best_sim {
            best_sim = s;
            best = c;
        }
    }
    best
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Spherical k-means over `points` (unit rows of width `d`).
pub fn train_centroids(points: &[f64], d: usize, n_list: usize, seed: u64) -> Vec<f64> {
    let n = points.len() / d;
    assert!(n_list >= 1 && n_list <= n, "n_list must lie in 1..=n");
    let mut rng = stream_rng(seed, "kmeans", 0);

    let cap = n_list * TRAIN_POINTS_PER_LIST;
    let train: Vec<usize> = if n > cap {
        let mut s = sample(&mut rng, n, cap).into_vec();
        s.sort_unstable();
        s
    } else {
        (0..n).collect()
    };
    let row = |i: usize| &points[i * d..(i + 1) * d];

    // k-means++ seeding with squared chord distance 2 - 2cos.
    let mut centroids = Vec::with_capacity(n_list * d);
    let first = train[rng.random_range(0..train.len())];
    centroids.extend_from_slice(row(first));
    let mut dist: Vec<f64> = train.iter().map(|&i| (2.0 - 2.0 * dot(row(i), row(first))).max(0.0)).collect();
    while centroids.len() < n_list * d {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = dist.len() - 1;
            for (k, w) in dist.iter().enumerate() {
                if target < *w {
                    chosen = k;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..train.len())
        };
        let c = row(train[pick]).to_vec();
        for (k, &i) in train.iter().enumerate() {
            let dd = (2.0 - 2.0 * dot(row(i), &c)).max(0.0);
            if dd < dist[k] {
                dist[k] = dd;
            }
        }
        centroids.extend_from_slice(&c);
    }

    for _ in 0..KMEANS_ITERATIONS {
        let assign: Vec<usize> = train.par_iter().map(|&i| nearest(&centroids, d, row(i))).collect();
        let mut sums = vec![0.0; n_list * d];
        let mut counts = vec![0usize; n_list];
        for (&i, &c) in train.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..n_list {
            if counts[c] == 0 {
                continue;
            }
            let slot = &mut sums[c * d..(c + 1) * d];
            normalize(slot);
            if dot(slot, slot) > 0.0 {
                centroids[c * d..(c + 1) * d].copy_from_slice(slot);
            }
        }
    }
    centroids
}

impl IvfIndex {
    /// Builds an index over `(id, unit vector)` rows.
    pub fn build(ids: &[u64], unit: &[f64], d: usize, n_list: usize, n_probe: usize, seed: u64) -> Self {
        let centroids = train_centroids(unit, d, n_list, seed);
        let mut index = Self {
            d,
            centroids,
            lists: vec![IvfList { ids: Vec::new(), vectors: Vec::new() }; n_list],
            n_probe: n_probe.clamp(1, n_list),
            trained_on: ids.len(),
            inserted_since_build: 0,
            seed,
        };
        let assign: Vec<usize> = unit
            .par_chunks_exact(d)
            .map(|v| nearest(&index.centroids, d, v))
            .collect();
        for ((&id, v), c) in ids.iter().zip(unit.chunks_exact(d)).zip(assign) {
            index.lists[c].ids.push(id);
            index.lists[c].vectors.extend_from_slice(v);
        }
        index
    }

    pub fn n_list(&self) -> usize {
        self.lists.len()
    }

    pub fn assign(&self, unit: &[f64]) -> usize {
        nearest(&self.centroids, self.d, unit)
    }

    pub fn add(&mut self, id: u64, unit: &[f64]) {
        let c = self.assign(unit);
        self.lists[c].ids.push(id);
        self.lists[c].vectors.extend_from_slice(unit);
        self.inserted_since_build += 1;
    }

    pub fn remove(&mut self, id: u64) -> bool {
        let d = self.d;
        for list in &mut self.lists {
            if let Some(pos) = list.ids.iter().position(|&x| x == id) {
                list.ids.remove(pos);
                list.vectors.drain(pos * d..(pos + 1) * d);
                return true;
            }
        }
        false
    }

    pub fn is_stale(&self) -> bool {
        self.inserted_since_build as f64 > REBUILD_FRACTION * self.trained_on as f64
    }

    /// Indices of the `n_probe` centroids most similar to `unit`, ties by index.
    pub fn probe_order(&self, unit: &[f64], n_probe: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = self
            .centroids
            .chunks_exact(self.d)
            .enumerate()
            .map(|(c, cent)| (dot(cent, unit), c))
            .collect();
        let n_probe = n_probe.clamp(1, scored.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if n_probe < scored.len() {
            scored.select_nth_unstable_by(n_probe - 1, cmp);
            scored.truncate(n_probe);
        }
        scored.sort_by(cmp);
        scored.into_iter().map(|(_, c)| c).collect()
    }

    pub fn list_of(&self, id: u64) -> Option<usize> {
        self.lists.iter().position(|l| l.ids.contains(&id))
    }
}
