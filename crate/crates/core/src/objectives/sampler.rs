use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::{Purpose, Stream};

/// Draws the minibatch `ε_{i,k}^t` for local step `k` of client `i` in round `t`.
///
/// Local steps walk through epochs of `⌈n/B⌉` disjoint batches; each epoch is
/// a fresh permutation keyed by `(seed, round, client, epoch)`, so sampling is
/// without replacement inside an epoch and the batch for a step never depends
/// on how many gradients were evaluated before it.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    samples: usize,
    batch_size: Option<usize>,
    seed: u64,
    round: usize,
    client: usize,
    cached: Option<(usize, Vec<usize>)>,
}

impl MinibatchSampler {
    /// `batch_size: None` (or one at least as large as the shard) means
    /// full-batch evaluation.
    pub fn new(samples: usize, batch_size: Option<usize>, seed: u64, round: usize, client: usize) -> Self {
        let batch_size = batch_size.filter(|&b| b > 0 && b < samples);
        Self {
            samples,
            batch_size,
            seed,
            round,
            client,
            cached: None,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        match self.batch_size {
            None => 1,
            Some(b) => self.samples.div_ceil(b),
        }
    }

    fn epoch_permutation(&self, epoch: usize) -> Vec<usize> {
        let key = ((self.client as u64) << 32) | (epoch as u64 & 0xffff_ffff);
        let mut stream = Stream::new(self.seed, Purpose::Minibatch, self.round as u64, key);
        let mut perm: Vec<usize> = (0..self.samples).collect();
        perm.shuffle(stream.rng());
        perm
    }

    /// Sample indices for local step `step`.
    pub fn batch(&mut self, step: usize) -> Vec<usize> {
        let Some(b) = self.batch_size else {
            return (0..self.samples).collect();
        };
        let spe = self.steps_per_epoch();
        let (epoch, pos) = (step / spe, step % spe);
        let fresh = !matches!(&self.cached, Some((e, _)) if *e == epoch);
        if fresh {
            self.cached = Some((epoch, self.epoch_permutation(epoch)));
        }
        let perm = &self.cached.as_ref().expect("cached permutation").1;
        let end = (pos * b + b).min(self.samples);
        perm[pos * b..end].to_vec()
    }
}
