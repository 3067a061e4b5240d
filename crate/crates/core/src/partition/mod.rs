//! Datasets, label-skew partitioning and synthetic heterogeneous data.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

mod dirichlet;
mod synthetic;

pub use dirichlet::{dirichlet_partition, iid_partition};
pub use synthetic::{synthetic_classification, synthetic_heterogeneous_lsq, LsqShard, SyntheticLsq};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    File,
}

/// A labelled pool of samples; `features` is row-major `n × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset", "needs at least one sample"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dimension {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "labels",
                alloc::format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Features and labels of the listed samples, in the listed order.
    pub fn select(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut feats = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            feats.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        (feats, labels)
    }
}

/// Assignment of every sample to exactly one client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    num_clients: usize,
}

impl Partition {
    /// Validates that every client id is in range and every client owns at
    /// least one sample.
    pub fn new(assignment: Vec<usize>, num_clients: usize) -> Result<Self> {
        if num_clients == 0 {
            return Err(Error::invalid("clients", "need at least one client"));
        }
        let mut sizes = vec![0usize; num_clients];
        for &c in &assignment {
            if c >= num_clients {
                return Err(Error::invalid(
                    "assignment",
                    alloc::format!("client id {c} out of range for {num_clients} clients"),
                ));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(
                "assignment",
                alloc::format!("client {empty} has an empty shard"),
            ));
        }
        Ok(Self {
            assignment,
            num_clients,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_samples(&self) -> usize {
        self.assignment.len()
    }

    pub fn client_of(&self, sample: usize) -> usize {
        self.assignment[sample]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sample indices of each client's shard, ascending.
    pub fn shards(&self) -> Vec<Vec<usize>> {
        let mut shards = vec![Vec::new(); self.num_clients];
        for (i, &c) in self.assignment.iter().enumerate() {
            shards[c].push(i);
        }
        shards
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clients];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Per-client × per-class sample counts (row `i` is client `i`).
    pub fn class_counts(&self, labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; num_classes]; self.num_clients];
        for (&c, &y) in self.assignment.iter().zip(labels) {
            counts[c][y] += 1;
        }
        counts
    }
}

/// Heterogeneity summary of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewStats {
    /// Largest `|p_ic − p_c|` between a client's class share and the global one.
    pub max_share_deviation: f64,
    /// Fraction of clients whose largest class share exceeds twice that
    /// class's global share.
    pub dominated_client_fraction: f64,
    /// Mean fraction of classes per client whose share exceeds twice the
    /// global share.
    pub mean_dominant_class_fraction: f64,
}

pub fn skew_stats(counts: &[Vec<usize>]) -> SkewStats {
    let classes = counts.first().map_or(0, |r| r.len());
    let mut global = vec![0usize; classes];
    for row in counts {
        for (g, c) in global.iter_mut().zip(row) {
            *g += c;
        }
    }
    let total: usize = global.iter().sum();
    let global_share: Vec<f64> = global.iter().map(|&g| g as f64 / total as f64).collect();
    let mut max_dev: f64 = 0.0;
    let mut dominated = 0usize;
    let mut dominant_fraction = 0.0;
    for row in counts {
        let n: usize = row.iter().sum();
        let shares: Vec<f64> = row.iter().map(|&c| c as f64 / n as f64).collect();
        for (s, g) in shares.iter().zip(&global_share) {
            max_dev = max_dev.max((s - g).abs());
        }
        let top = (0..classes).fold(0, |b, k| if shares[k] > shares[b] { k } else { b });
        if shares[top] > 2.0 * global_share[top] {
            dominated += 1;
        }
        let dom = shares
            .iter()
            .zip(&global_share)
            .filter(|(s, g)| **s > 2.0 * **g)
            .count();
        dominant_fraction += dom as f64 / classes as f64;
    }
    SkewStats {
        max_share_deviation: max_dev,
        dominated_client_fraction: dominated as f64 / counts.len() as f64,
        mean_dominant_class_fraction: dominant_fraction / counts.len() as f64,
    }
}
