//! ROC AUC against the pairwise Mann-Whitney statistic.

use lesion_core::roc_auc;
use proptest::prelude::*;

/// `P(s+ > s-) + P(s+ = s-)/2` by enumerating every pair.
fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Scores on a coarse grid so ties are common, with both classes present.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=50)
        .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(0u8..=1, n)))
        .prop_filter("both classes", |(_, labels)| labels.contains(&0) && labels.contains(&1))
        .prop_map(|(grid, labels)| (grid.into_iter().map(|g| g as f64 / 11.0).collect(), labels))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_pairwise_statistic((scores, labels) in scored_labels()) {
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        prop_assert!((auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn invariant_under_monotone_maps((scores, labels) in scored_labels()) {
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        prop_assert_eq!(roc_auc(&cubed, &labels).unwrap().1, auc);
        prop_assert_eq!(roc_auc(&affine, &labels).unwrap().1, auc);
    }

    #[test]
    fn flipping_labels_complements((scores, labels) in scored_labels()) {
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let (_, flipped_auc) = roc_auc(&scores, &flipped).unwrap();
        prop_assert!((flipped_auc - (1.0 - auc)).abs() <= f64::EPSILON);
    }

    #[test]
    fn curve_is_monotone_from_origin_to_corner((scores, labels) in scored_labels()) {
        let (roc, auc) = roc_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert_eq!(roc.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(roc.points.last().copied(), Some((1.0, 1.0)));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        // One point per distinct score plus the origin.
        let mut distinct = scores.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assert_eq!(roc.points.len(), distinct.len() + 1);
    }
}

#[test]
fn all_tied_scores_give_one_half() {
    for n in 2..20 {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        assert_eq!(roc_auc(&vec![0.7; n], &labels).unwrap().1, 0.5);
    }
}

#[test]
fn perfect_and_inverted_rankings() {
    let scores = [0.9, 0.8, 0.3, 0.1];
    assert_eq!(roc_auc(&scores, &[1, 1, 0, 0]).unwrap().1, 1.0);
    assert_eq!(roc_auc(&scores, &[0, 0, 1, 1]).unwrap().1, 0.0);
}
