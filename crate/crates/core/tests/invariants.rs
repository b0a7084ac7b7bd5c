//! Property tests for the weight-evaluation invariants: dispersion
//! monotonicity, permutation behaviour, the weight-table image, the
//! normalisation contract and the entropy factor bounds.

use proptest::prelude::*;
use sapda::losses::entropy_weight;
use sapda::{assign_weights, ch_index, optimal_partition, select_k, ClassWeightVector, SplitMix64};

fn normalised(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..=1.0, len)
        .prop_map(|raw| ClassWeightVector::from_values(raw).unwrap().values().to_vec())
}

fn all_distinct(w: &[f64]) -> bool {
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.windows(2).all(|p| p[0] != p[1])
}

proptest! {
    #[test]
    fn splitting_never_increases_dispersion(w in normalised(4..=10)) {
        let mut prev = f64::INFINITY;
        for k in 1..=3usize {
            let p = optimal_partition(&w, k).unwrap();
            prop_assert!(
                p.cost <= prev * (1.0 + 1e-12) + 1e-15,
                "k={} cost {} exceeds k={} cost {}", k, p.cost, k - 1, prev
            );
            prev = p.cost;
        }
    }

    #[test]
    fn partitions_are_structurally_sound(w in normalised(4..=10), k in 1usize..=3) {
        let p = optimal_partition(&w, k).unwrap();
        prop_assert_eq!(p.k, k);
        prop_assert_eq!(p.assignment.len(), w.len());
        prop_assert_eq!(p.group_sizes.iter().sum::<usize>(), w.len());
        prop_assert!(p.group_sizes.iter().all(|&s| s > 0));
        prop_assert!(p.assignment.iter().all(|&g| g < k));
        for pair in p.group_means.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        prop_assert!(p.cost >= 0.0);
        if k >= 2 {
            prop_assert!(ch_index(&w, &p).unwrap() >= 0.0);
        }
    }

    #[test]
    fn permutation_only_relabels(w in normalised(4..=8), k in 2usize..=3, seed in any::<u64>()) {
        prop_assume!(all_distinct(&w));
        let mut perm: Vec<usize> = (0..w.len()).collect();
        let mut rng = SplitMix64::new(seed);
        for i in (1..perm.len()).rev() {
            let j = rng.below(i + 1);
            perm.swap(i, j);
        }
        let permuted: Vec<f64> = perm.iter().map(|&i| w[i]).collect();

        let a = optimal_partition(&w, k).unwrap();
        let b = optimal_partition(&permuted, k).unwrap();
        prop_assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        let wa = assign_weights(&a).unwrap();
        let wb = assign_weights(&b).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert_eq!(wa[i].to_bits(), wb[j].to_bits());
        }
    }

    #[test]
    fn weight_tables_use_only_the_three_levels(w in normalised(4..=10)) {
        prop_assume!(all_distinct(&w));
        let sel = select_k(&w, 0.1).unwrap();
        let table = sel.weight_table().unwrap();
        prop_assert_eq!(table.k_star, sel.k_star);
        match sel.k_star {
            1 => prop_assert!(table.per_class.iter().all(|&v| v == 1.0)),
            2 => {
                prop_assert!(table.per_class.iter().all(|&v| v == 0.0 || v == 1.0));
                prop_assert!(table.per_class.contains(&1.0));
                prop_assert!(table.per_class.contains(&0.0));
            }
            3 => {
                let alpha = sel.partitions[2].group_means[1];
                prop_assert!(alpha > 0.0 && alpha < 1.0);
                prop_assert!(table.per_class.iter().all(|&v| v == 0.0 || v == 1.0 || v == alpha));
            }
            other => prop_assert!(false, "selected {} groups", other),
        }
    }

    #[test]
    fn normalisation_pins_the_maximum_at_one(raw in prop::collection::vec(0.001f64..1.0, 1..=12)) {
        let wc = ClassWeightVector::from_values(raw).unwrap();
        let max = wc.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(max, 1.0);
        prop_assert!(wc.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn tight_vectors_degenerate_to_one_group(deltas in prop::collection::vec(0.0f64..0.05, 3..=9)) {
        let mut raw = vec![1.0];
        raw.extend(deltas.iter().map(|d| 1.0 - d));
        let w = ClassWeightVector::from_values(raw).unwrap();
        let sel = select_k(w.values(), 0.1).unwrap();
        prop_assert!(sel.spread < 0.1);
        prop_assert_eq!(sel.k_star, 1);
    }

    #[test]
    fn separated_vectors_split(
        low in prop::collection::vec(1e-6f64..0.2, 2..=4),
        high in prop::collection::vec(0.8f64..1.0, 2..=4),
    ) {
        let mut raw = vec![1.0];
        raw.extend(high);
        raw.extend(low);
        let w = ClassWeightVector::from_values(raw).unwrap();
        let sel = select_k(w.values(), 0.1).unwrap();
        prop_assert!(sel.spread >= 0.1);
        prop_assert!(sel.k_star == 2 || sel.k_star == 3);
    }

    #[test]
    fn entropy_weight_stays_in_range(raw in prop::collection::vec(1e-9f64..1.0, 1..=16)) {
        let sum: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let m = entropy_weight(&probs);
        prop_assert!(m > 1.0 && m <= 2.0, "weight {} out of range", m);
    }
}
