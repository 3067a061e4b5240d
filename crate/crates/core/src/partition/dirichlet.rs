use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::Partition;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};

fn check_feasible(samples: usize, clients: usize) -> Result<()> {
    if clients == 0 {
        return Err(Error::invalid("clients", "need at least one client"));
    }
    if clients > samples {
        return Err(Error::InfeasiblePartition { clients, samples });
    }
    Ok(())
}

fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
}

/// Splits `total` into integer counts proportional to `weights` by the
/// largest-remainder rule (ties go to the lower index).
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| *e as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Moves one sample from the largest shard to each empty client until every
/// shard is non-empty. The donated sample is the donor's highest index.
fn repair_empty(assignment: &mut [usize], clients: usize) {
    loop {
        let mut sizes = vec![0usize; clients];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..clients).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
        let sample = assignment
            .iter()
            .rposition(|&c| c == donor)
            .expect("donor shard is non-empty");
        assignment[sample] = empty;
    }
}

/// Label-skew split: for each class, client proportions are drawn from a
/// symmetric Dirichlet(`concentration`) and the shuffled class members are
/// dealt out in those proportions.
pub fn dirichlet_partition(labels: &[usize], clients: usize, concentration: f64, seed: u64) -> Result<Partition> {
    check_feasible(labels.len(), clients)?;
    if !(concentration > 0.0) || !concentration.is_finite() {
        return Err(Error::invalid("concentration", "must be positive and finite"));
    }
    let mut assignment = vec![0usize; labels.len()];
    if clients > 1 {
        for (class, mut members) in class_members(labels).into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let mut shuffle = Stream::new(seed, Purpose::Partition, 0, class as u64);
            members.shuffle(shuffle.rng());
            let mut draw = Stream::new(seed, Purpose::Partition, 1, class as u64);
            let proportions = draw.dirichlet(concentration, clients);
            let counts = apportion(&proportions, members.len());
            let mut cursor = 0;
            for (client, &count) in counts.iter().enumerate() {
                for &sample in &members[cursor..cursor + count] {
                    assignment[sample] = client;
                }
                cursor += count;
            }
        }
        repair_empty(&mut assignment, clients);
    }
    Partition::new(assignment, clients)
}

/// Balanced split: each class is shuffled and dealt round-robin, continuing
/// the rotation across classes.
pub fn iid_partition(labels: &[usize], clients: usize, seed: u64) -> Result<Partition> {
    check_feasible(labels.len(), clients)?;
    let mut assignment = vec![0usize; labels.len()];
    let mut offset = 0;
    for (class, mut members) in class_members(labels).into_iter().enumerate() {
        let mut shuffle = Stream::new(seed, Purpose::Partition, 2, class as u64);
        members.shuffle(shuffle.rng());
        for (j, &sample) in members.iter().enumerate() {
            assignment[sample] = (offset + j) % clients;
        }
        offset += members.len();
    }
    Partition::new(assignment, clients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::skew_stats;

    fn labels(n: usize, classes: usize) -> Vec<usize> {
        (0..n).map(|i| (i * 7 + i / 3) % classes).collect()
    }

    #[test]
    fn single_client_gets_everything() {
        let p = dirichlet_partition(&labels(50, 4), 1, 0.5, 3).unwrap();
        assert!(p.assignment().iter().all(|&c| c == 0));
    }

    #[test]
    fn too_many_clients_is_infeasible() {
        assert_eq!(
            dirichlet_partition(&labels(3, 2), 4, 1.0, 0),
            Err(Error::InfeasiblePartition { clients: 4, samples: 3 })
        );
    }

    #[test]
    fn rejects_bad_concentration() {
        assert!(dirichlet_partition(&labels(10, 2), 2, 0.0, 0).is_err());
        assert!(dirichlet_partition(&labels(10, 2), 2, f64::NAN, 0).is_err());
    }

    #[test]
    fn apportion_preserves_total() {
        assert_eq!(apportion(&[0.5, 0.25, 0.25], 5), vec![3, 1, 1]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.0, 1.0], 7), vec![0, 7]);
    }

    #[test]
    fn extreme_skew_is_repaired() {
        // Tiny concentration concentrates every class on very few clients.
        let p = dirichlet_partition(&labels(40, 2), 30, 0.01, 5).unwrap();
        assert!(p.shard_sizes().iter().all(|&s| s >= 1));
        assert_eq!(p.shard_sizes().iter().sum::<usize>(), 40);
    }

    #[test]
    fn iid_is_balanced() {
        let y = labels(1000, 10);
        let p = iid_partition(&y, 10, 1).unwrap();
        let stats = skew_stats(&p.class_counts(&y, 10));
        assert!(stats.max_share_deviation <= 0.011, "{stats:?}");
        assert!(p.shard_sizes().iter().all(|&s| s == 100));
    }

    #[test]
    fn deterministic_given_seed() {
        let y = labels(500, 5);
        assert_eq!(
            dirichlet_partition(&y, 7, 0.6, 11).unwrap(),
            dirichlet_partition(&y, 7, 0.6, 11).unwrap()
        );
        assert_ne!(
            dirichlet_partition(&y, 7, 0.6, 11).unwrap(),
            dirichlet_partition(&y, 7, 0.6, 12).unwrap()
        );
    }

    #[test]
    fn moderate_concentration_has_a_few_dominant_classes() {
        // Roughly 10–20% of classes over-represented (> 2× global share) per client.
        let y = labels(10_000, 10);
        for seed in [0, 1, 2] {
            let p = dirichlet_partition(&y, 100, 0.6, seed).unwrap();
            let f = skew_stats(&p.class_counts(&y, 10)).mean_dominant_class_fraction;
            assert!((0.10..=0.20).contains(&f), "seed {seed}: {f}");
        }
    }
}
