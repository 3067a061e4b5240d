use fedspeed_core::algorithms::{aggregate, gamma_weights};
use fedspeed_core::objectives::{GradientOracle, LogisticObjective, MinibatchSampler, QuadraticObjective};
use fedspeed_core::param::{DenseMatrix, ParamVector};
use fedspeed_core::partition::dirichlet_partition;
use proptest::prelude::*;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, d)
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::from_vec(v).unwrap()
}

proptest! {
    #[test]
    fn axpy_is_linear_in_the_scalar(
        (x, y) in (1usize..16).prop_flat_map(|d| (vector(d), vector(d))),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
    ) {
        let (x, y) = (pv(x), pv(y));
        let nested = ParamVector::axpy(a, &x, &ParamVector::axpy(b, &x, &y).unwrap()).unwrap();
        let direct = ParamVector::axpy(a + b, &x, &y).unwrap();
        let scale = 1.0 + x.l2_norm() * (a.abs() + b.abs()) + y.l2_norm();
        prop_assert!(nested.sub(&direct).unwrap().l2_norm() <= 1e-12 * scale);
    }

    #[test]
    fn self_difference_is_exactly_zero(x in (1usize..16).prop_flat_map(vector)) {
        let x = pv(x);
        prop_assert_eq!(ParamVector::axpy(-1.0, &x, &x).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn aggregate_ignores_input_order(
        rows in (1usize..6).prop_flat_map(|d| prop::collection::vec(vector(d), 1..8)),
        shuffle_seed in any::<u64>(),
    ) {
        let payloads: Vec<(usize, ParamVector)> =
            rows.into_iter().enumerate().map(|(i, v)| (i * 3 + 1, pv(v))).collect();
        let mut shuffled = payloads.clone();
        // Deterministic Fisher-Yates from the drawn seed.
        let mut state = shuffle_seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = aggregate(&payloads).unwrap();
        let b = aggregate(&shuffled).unwrap();
        let bits = |v: &ParamVector| v.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn sampler_epoch_is_a_permutation(
        n in 1usize..60,
        b in 1usize..20,
        epochs in 1usize..4,
        seed in any::<u64>(),
        round in 0usize..50,
        client in 0usize..10,
    ) {
        let mut s = MinibatchSampler::new(n, Some(b), seed, round, client);
        let spe = s.steps_per_epoch();
        for e in 0..epochs {
            let mut seen: Vec<usize> = (0..spe).flat_map(|k| s.batch(e * spe + k)).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gamma_weights_are_geometric(ratio in 0.001..=1.0f64, k in 1usize..30) {
        let lambda = 2.0;
        let g = gamma_weights(ratio * lambda, lambda, k).unwrap();
        let sum: f64 = g.gamma_k.iter().sum();
        prop_assert!((sum - g.gamma).abs() <= 1e-12);
        for w in g.gamma_k.windows(2) {
            if w[1] != 0.0 {
                prop_assert!((w[0] / w[1] - (1.0 - ratio)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_gradient_is_lipschitz(
        (m, x, y) in (1usize..8).prop_flat_map(|d| (vector(d * d), vector(d), vector(d))),
    ) {
        let d = x.len();
        // A = MᵀM is PSD and symmetric.
        let mut a = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                a[r * d + c] = (0..d).map(|k| m[k * d + r] * m[k * d + c]).sum();
            }
        }
        let a = DenseMatrix::from_rows(d, a).unwrap();
        let l = a.frobenius_norm();
        let q = QuadraticObjective::new(a, ParamVector::zeros(d)).unwrap();
        let (x, y) = (pv(x), pv(y));
        let dg = q.gradient(&x).sub(&q.gradient(&y)).unwrap().l2_norm();
        prop_assert!(dg <= l * x.sub(&y).unwrap().l2_norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn logistic_gradient_is_lipschitz(
        (features, x, y) in (1usize..6).prop_flat_map(|d| (vector(d * 8), vector(d), vector(d))),
        l2 in 0.0..1.0f64,
    ) {
        let d = x.len();
        let labels: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // Hessian ≤ XᵀX/(4n) + l2·I.
        let l = features.iter().map(|v| v * v).sum::<f64>() / (4.0 * 8.0) + l2;
        let o = LogisticObjective::new(d, features, labels, l2).unwrap();
        let (x, y) = (pv(x), pv(y));
        let gx = o.eval_full(&x).unwrap().1;
        let gy = o.eval_full(&y).unwrap().1;
        let dg = gx.sub(&gy).unwrap().l2_norm();
        prop_assert!(dg <= l * x.sub(&y).unwrap().l2_norm() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn dirichlet_assigns_every_sample_once(
        labels in prop::collection::vec(0usize..5, 1..300),
        clients in 1usize..30,
        concentration in 0.05..50.0f64,
        seed in any::<u64>(),
    ) {
        let result = dirichlet_partition(&labels, clients, concentration, seed);
        if clients > labels.len() {
            prop_assert!(result.is_err());
        } else {
            let p = result.unwrap();
            prop_assert_eq!(p.num_samples(), labels.len());
            prop_assert!(p.shard_sizes().iter().all(|&s| s > 0));
            let mut all: Vec<usize> = p.shards().concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            prop_assert_eq!(&p, &dirichlet_partition(&labels, clients, concentration, seed).unwrap());
        }
    }
}
