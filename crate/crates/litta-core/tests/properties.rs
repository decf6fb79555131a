//! Property tests over the crate's structural invariants.

use proptest::prelude::*;

use litta_core::ctc::{collapse, Transcription};
use litta_core::data::{apply_shift, DatasetManifest, ShiftConfig, ShiftKind, Utterance};
use litta_core::eval::{edit_distance, wer};
use litta_core::objectives::adaptive_lambda;
use litta_core::text::normalize_to_vocab;
use litta_core::util::log_sum_exp2;
use litta_core::vocab::Vocab;

fn vocab() -> Vocab {
    Vocab::default_char_vocab()
}

proptest! {
    #[test]
    fn collapse_never_emits_blanks_and_fixes_clean_paths(
        path in proptest::collection::vec(0usize..29, 0..40)
    ) {
        let v = vocab();
        let once = collapse(&path, &v);
        // vocabulary-closed output (blanks have no character to emit)
        prop_assert!(Transcription::new(once.as_str(), &v).is_ok());
        // a blank-free, repeat-free path collapses to exactly itself
        let mut clean: Vec<usize> = Vec::new();
        for &class in &path {
            if class != 0 && clean.last() != Some(&class) {
                clean.push(class);
            }
        }
        let fixed = collapse(&clean, &v);
        let clean_text: String = clean.iter().map(|&k| v.char_of(k).unwrap()).collect();
        prop_assert_eq!(fixed.as_str(), clean_text.as_str());
    }

    #[test]
    fn normalization_is_idempotent_and_vocab_closed(text in "\\PC*") {
        let v = vocab();
        let norm = normalize_to_vocab(&text, &v);
        prop_assert!(v.validate_text(&norm, "prop").is_ok());
        prop_assert!(!norm.starts_with(' ') && !norm.ends_with(' '));
        prop_assert!(!norm.contains("  "));
        prop_assert_eq!(normalize_to_vocab(&norm, &v), norm.clone());
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in proptest::collection::vec(0u8..4, 0..8),
        b in proptest::collection::vec(0u8..4, 0..8),
        c in proptest::collection::vec(0u8..4, 0..8),
    ) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        if a != b {
            prop_assert!(edit_distance(&a, &b) > 0);
        }
        prop_assert!(
            edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c)
        );
    }

    #[test]
    fn wer_is_zero_iff_token_sequences_match(
        words_a in proptest::collection::vec("[a-z]{1,5}", 1..5),
        words_b in proptest::collection::vec("[a-z]{1,5}", 0..5),
    ) {
        let a = words_a.join(" ");
        let b = words_b.join(" ");
        let w = wer(&a, &b).unwrap();
        if words_a == words_b {
            prop_assert_eq!(w, 0.0);
        } else {
            prop_assert!(w > 0.0);
        }
    }

    #[test]
    fn log_sum_exp_dominates_both_arguments(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let lse = log_sum_exp2(a, b);
        prop_assert!(lse >= a.max(b));
        prop_assert!((log_sum_exp2(b, a) - lse).abs() < 1e-12);
        // against direct evaluation in a safe range
        let direct = (a.exp() + b.exp()).ln();
        if direct.is_finite() {
            prop_assert!((lse - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn adaptive_lambda_stays_in_unit_interval(
        l_tta in 0.0f64..1e6,
        l_ctc in 0.0f64..1e6,
    ) {
        let lambda = adaptive_lambda(l_tta, l_ctc).unwrap();
        prop_assert!((0.0..=1.0).contains(&lambda));
    }

    #[test]
    fn shifts_preserve_shapes_ids_and_references(
        scale in -3.0f64..3.0,
        snr_db in 0.0f64..30.0,
        drift in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let v = vocab();
        let utterances = vec![
            Utterance {
                id: "u0".into(),
                frames: vec![vec![0.4, -0.2, 0.1]; 4],
                reference: Some(Transcription::new("ok", &v).unwrap()),
            },
            Utterance {
                id: "u1".into(),
                frames: vec![vec![-0.3, 0.5, 0.9]; 2],
                reference: None,
            },
        ];
        let manifest = DatasetManifest::new("prop", utterances, None).unwrap();
        for kind in [
            ShiftKind::AdditiveNoise { snr_db },
            ShiftKind::ChannelScale { scale },
            ShiftKind::ConfusionDrift { drift_fraction: drift },
        ] {
            let out = apply_shift(&manifest, &ShiftConfig { kind, seed }).unwrap();
            prop_assert_eq!(out.len(), manifest.len());
            for (a, b) in manifest.utterances.iter().zip(&out.utterances) {
                prop_assert_eq!(&a.id, &b.id);
                prop_assert_eq!(a.frame_count(), b.frame_count());
                prop_assert_eq!(a.feature_dim(), b.feature_dim());
                prop_assert_eq!(&a.reference, &b.reference);
            }
        }
    }
}
