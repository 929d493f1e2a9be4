//! Property tests for cross-module invariants.

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use toxlab_core::augment::{mix_into_train, required_synthetic_count, CandidateStatus, SyntheticCandidate};
use toxlab_core::calibrate::{calibrate_logits, fit_isotonic, CalibrationParams, PlattParams};
use toxlab_core::corpus::{
    duplicate_report, parse_dataset, split_dataset, write_dataset_jsonl, DataFormat,
};
use toxlab_core::evaluate::{classification_report, confusion_matrix, ConfusionMatrix};
use toxlab_core::features::{extract_features, grams, normalize_text};
use toxlab_core::model::{fit, softmax};
use toxlab_core::strategies::{ensemble_average, oversample};
use toxlab_core::{ClassId, Dataset, FeatureConfig, LabeledExample, Origin, ProbDist, TrainConfig};

fn class() -> impl Strategy<Value = ClassId> {
    (0u8..6).prop_map(|v| ClassId::new(v).unwrap())
}

/// Small vocabulary so duplicates are common.
fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["gg", "noob", "Push", "mid", "wtf", "ok"]), 1..4)
        .prop_map(|w| w.join(if w.len() % 2 == 0 { " " } else { "  " }))
}

fn dataset(max: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec((text(), class()), 0..max).prop_map(|rows| {
        Dataset::new(
            "d",
            rows.into_iter()
                .enumerate()
                .map(|(i, (t, c))| LabeledExample::new(format!("id{i}"), t, c))
                .collect(),
        )
    })
}

fn small_cfg() -> FeatureConfig {
    FeatureConfig {
        dims: 1 << 12,
        ..FeatureConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_parse_preserves_ids_and_labels(d in dataset(40)) {
        let mut buf = Vec::new();
        write_dataset_jsonl(&d, &mut buf).unwrap();
        let back = parse_dataset(buf.as_slice(), DataFormat::JsonLines, "d").unwrap().dataset;
        let a: Vec<_> = d.iter().map(|e| (e.id.clone(), e.label)).collect();
        let b: Vec<_> = back.iter().map(|e| (e.id.clone(), e.label)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn split_is_a_partition(d in dataset(60), frac in 0.1f64..0.9, seed in any::<u64>()) {
        prop_assume!(!d.is_empty());
        let (tr, va) = split_dataset(&d, frac, seed).unwrap();
        let tr_ids: BTreeSet<String> = tr.ids().into_iter().collect();
        let va_ids: BTreeSet<String> = va.ids().into_iter().collect();
        prop_assert!(tr_ids.is_disjoint(&va_ids));
        let all: BTreeSet<String> = d.ids().into_iter().collect();
        prop_assert_eq!(tr_ids.union(&va_ids).cloned().collect::<BTreeSet<_>>(), all);
    }

    #[test]
    fn duplicate_report_matches_pairwise_oracle(d in dataset(80)) {
        let n = d.len();
        let norm: Vec<String> = d.iter().map(|e| normalize_text(&e.text)).collect();
        let mut dup = 0;
        let mut conflict = 0;
        for i in 0..n {
            let same: Vec<usize> = (0..n).filter(|&j| norm[j] == norm[i]).collect();
            if same.len() >= 2 {
                dup += 1;
            }
            let labels: BTreeSet<_> = same.iter().filter_map(|&j| d.examples[j].label).collect();
            if labels.len() >= 2 {
                conflict += 1;
            }
        }
        let r = duplicate_report(&d);
        let denom = n.max(1) as f64;
        prop_assert!((r.exact_duplicate_fraction - dup as f64 / denom).abs() < 1e-12);
        prop_assert!((r.conflicting_label_fraction - conflict as f64 / denom).abs() < 1e-12);
    }

    #[test]
    fn validation_split_never_holds_synthetic(d in dataset(60), n_syn in 0usize..10, seed in any::<u64>()) {
        prop_assume!(d.len() >= 2);
        let synth: Vec<SyntheticCandidate> = (0..n_syn).map(|i| SyntheticCandidate {
            id: format!("syn{i}"),
            source_id: "s".into(),
            source_text: "s".into(),
            target_class: ClassId::from_index(2 + i % 4),
            paraphrase: format!("paraphrase number {i}"),
            status: CandidateStatus::Kept,
        }).collect();
        let mixed = mix_into_train(&d, &synth).unwrap();
        let (_, va) = split_dataset(&mixed, 0.7, seed).unwrap();
        prop_assert!(va.iter().all(|e| e.origin == Origin::Real));
    }

    #[test]
    fn nnz_bounded_by_gram_count(t in "[a-z ]{0,40}") {
        let cfg = small_cfg();
        let norm = normalize_text(&t);
        let v = extract_features(&norm, &cfg);
        prop_assert!(v.nnz() <= grams(&norm, &cfg).len());
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 1..8)) {
        let p = softmax(&z);
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn oversample_changes_multiplicity_only(d in dataset(30), c in class(), factor in 1.0f64..6.0) {
        let out = oversample(&d, c, factor, 500).unwrap();
        let before: BTreeSet<&str> = d.iter().map(|e| e.text.as_str()).collect();
        let after: BTreeSet<&str> = out.iter().map(|e| e.text.as_str()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn average_of_copies_is_identity(z in prop::collection::vec(-5.0f64..5.0, 6), k in 1usize..5) {
        let p = softmax(&z);
        let avg = ensemble_average(&vec![p.clone(); k]).unwrap();
        for (a, b) in avg.as_slice().iter().zip(p.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn share_within_tolerance(n_real in 10_000usize..60_000, r in 0.0f64..0.3) {
        let n = required_synthetic_count(n_real, r).unwrap();
        let share = n as f64 / (n + n_real) as f64;
        prop_assert!((share - r).abs() * 100.0 <= 0.05);
    }

    #[test]
    fn isotonic_is_monotone(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60), probes in prop::collection::vec(-0.5f64..1.5, 20)) {
        let (s, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let fit = fit_isotonic(&s, &y).unwrap();
        prop_assert!(fit.values.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let vals: Vec<f64> = sorted.iter().map(|&x| fit.eval(x)).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    }

    #[test]
    fn calibrated_outputs_are_distributions(
        z in prop::collection::vec(-20.0f64..20.0, 6),
        t in 0.05f64..20.0,
        ab in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6),
    ) {
        let platt = CalibrationParams::Platt { per_class: ab.iter().map(|&(a, b)| PlattParams { a, b }).collect() };
        let iso = CalibrationParams::Isotonic {
            per_class: (0..6).map(|c| fit_isotonic(&[0.1, 0.5, 0.9], &[0.0, if c % 2 == 0 { 0.2 } else { 0.0 }, 1.0]).unwrap()).collect(),
        };
        for params in [CalibrationParams::Temperature { temperature: t }, platt, iso] {
            let p = calibrate_logits(&z, &params).unwrap();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(ProbDist::new(p.into_vec()).is_ok());
        }
    }

    #[test]
    fn confusion_matrix_matches_naive_count(pairs in prop::collection::vec((class(), class()), 0..200)) {
        let (g, p): (Vec<ClassId>, Vec<ClassId>) = pairs.iter().copied().unzip();
        let cm = confusion_matrix(&g, &p).unwrap();
        let mut naive: HashMap<(usize, usize), u64> = HashMap::new();
        for (a, b) in &pairs {
            *naive.entry((a.index(), b.index())).or_default() += 1;
        }
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(cm.counts[i][j], naive.get(&(i, j)).copied().unwrap_or(0));
            }
        }
    }

    #[test]
    fn report_identities(counts in prop::array::uniform6(prop::array::uniform6(0u64..50))) {
        let cm = ConfusionMatrix::from_counts(counts);
        let r = classification_report(&cm);
        let total = cm.total();
        if total > 0 {
            let acc = cm.trace() as f64 / total as f64;
            prop_assert!((r.accuracy - acc).abs() < 1e-12);
            prop_assert!((r.weighted_avg.recall - acc).abs() < 1e-12);
        }
        for s in &r.per_class {
            let h = if s.precision + s.recall == 0.0 { 0.0 } else { 2.0 * s.precision * s.recall / (s.precision + s.recall) };
            prop_assert!((s.f1 - h).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_f1_invariant_under_relabeling(
        counts in prop::array::uniform6(prop::array::uniform6(0u64..50)),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let cm = ConfusionMatrix::from_counts(counts);
        let mut permuted = [[0u64; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                permuted[perm[i]][perm[j]] = counts[i][j];
            }
        }
        let a = classification_report(&cm).macro_avg.f1;
        let b = classification_report(&ConfusionMatrix::from_counts(permuted)).macro_avg.f1;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn training_is_reproducible(d in dataset(40), seed in any::<u64>()) {
        prop_assume!(!d.is_empty());
        let cfg = TrainConfig { epochs: 2, seed, ..TrainConfig::default() };
        let feats = toxlab_core::features::featurize_all(&d.texts(), &small_cfg());
        let labels: Vec<usize> = d.labels().unwrap().into_iter().map(ClassId::index).collect();
        let a = fit(&feats, &labels, 6, &cfg).unwrap();
        let b = fit(&feats, &labels, 6, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
