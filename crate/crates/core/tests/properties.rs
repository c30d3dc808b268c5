use std::path::PathBuf;

use lesion_core::dataset::{serialize_ground_truth, Example};
use lesion_core::embedding::{format_feature_cache, parse_feature_cache};
use lesion_core::preprocess::{plan_training_pool, select_augmentation_indices, PoolTag};
use lesion_core::{
    apply_transform, cross_entropy_loss, parse_ground_truth, resize_bilinear, softmax, Dataset, FeatureVector,
    GroundTruthRecord, ImageTensor, Split, TransformKind, FEATURE_DIM,
};
use proptest::prelude::*;

fn small_image() -> impl Strategy<Value = ImageTensor> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(-0.5f32..1.5, w * h * 3).prop_map(move |px| ImageTensor::from_pixels(w, h, px).unwrap())
    })
}

fn in_unit_range(img: &ImageTensor) -> bool {
    img.pixels().iter().all(|v| (0.0..=1.0).contains(v))
}

fn records() -> impl Strategy<Value = Vec<GroundTruthRecord>> {
    prop::collection::btree_map("[A-Za-z0-9_]{1,12}", (0u8..=1, 0u8..=1), 1..30).prop_map(|m| {
        m.into_iter()
            .map(|(image_id, (malignant, nonmelanocytic))| GroundTruthRecord {
                image_id,
                malignant,
                nonmelanocytic,
            })
            .collect()
    })
}

fn dataset(n: usize) -> Dataset {
    Dataset {
        split: Split::Train,
        examples: (0..n)
            .map(|i| {
                let image_id = format!("IMG_{i:05}");
                Example {
                    path: PathBuf::from(format!("{image_id}.png")),
                    record: GroundTruthRecord {
                        image_id: image_id.clone(),
                        malignant: (i % 2) as u8,
                        nonmelanocytic: (i % 3 == 0) as u8,
                    },
                    image_id,
                }
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 2..6), c in -500.0f64..500.0) {
        let p = softmax(&logits).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let q = softmax(&shifted).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_is_finite_and_non_negative(p in 0.0f64..=1.0, label in 0usize..2) {
        let loss = cross_entropy_loss(&[p, 1.0 - p], label).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(loss <= -(1e-12f64).ln() + 1e-9);
    }

    #[test]
    fn pixels_are_clamped(img in small_image()) {
        prop_assert!(in_unit_range(&img));
    }

    #[test]
    fn transforms_keep_shape_and_range(img in small_image(), seed in any::<u64>()) {
        for kind in TransformKind::ALL {
            let out = apply_transform(&img, kind, seed);
            prop_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
            prop_assert!(in_unit_range(&out));
        }
    }

    #[test]
    fn resize_stays_in_range(img in small_image(), w in 1usize..20, h in 1usize..20) {
        let out = resize_bilinear(&img, w, h).unwrap();
        prop_assert_eq!((out.width(), out.height()), (w, h));
        prop_assert!(in_unit_range(&out));
    }

    #[test]
    fn mirror_is_an_involution(img in small_image()) {
        let twice = apply_transform(&apply_transform(&img, TransformKind::Mirror, 0), TransformKind::Mirror, 0);
        prop_assert_eq!(twice, img);
    }

    #[test]
    fn ground_truth_round_trips(recs in records()) {
        prop_assert_eq!(parse_ground_truth(&serialize_ground_truth(&recs)).unwrap(), recs);
    }

    #[test]
    fn feature_cache_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-1.0e3f32..1.0e3, FEATURE_DIM), 1..4),
        seed in any::<u32>(),
    ) {
        let entries: Vec<(String, FeatureVector)> = rows
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("ISIC_{i}"), FeatureVector::new(v).unwrap()))
            .collect();
        let id = format!("stub:{seed}");
        let parsed = parse_feature_cache(&format_feature_cache(&entries, &id).unwrap()).unwrap();
        prop_assert_eq!(parsed.backend_id, id);
        prop_assert_eq!(parsed.entries, entries);
    }

    #[test]
    fn subset_size_is_floor_of_fraction(n in 0usize..300, fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let picked = select_augmentation_indices(n, fraction, seed).unwrap();
        prop_assert_eq!(picked.len(), (fraction * n as f64).floor() as usize);
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(picked.iter().all(|&i| i < n));
    }

    #[test]
    fn pool_size_counts_four_variants_per_pick(n in 1usize..200, fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let plan = plan_training_pool(&dataset(n), fraction, seed).unwrap();
        let total: usize = plan.iter().map(|g| g.len()).sum();
        prop_assert_eq!(total, n + 4 * (fraction * n as f64).floor() as usize);
    }

    #[test]
    fn pool_ids_round_trip(id in "[A-Za-z0-9_]{1,16}", kind in 0usize..4) {
        let tag = PoolTag {
            source_id: id,
            provenance: lesion_core::preprocess::Provenance::Augmented(TransformKind::ALL[kind]),
        };
        prop_assert_eq!(PoolTag::parse_pool_id(&tag.pool_id()), Some(tag));
    }
}
