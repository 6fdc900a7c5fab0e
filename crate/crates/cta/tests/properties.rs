//! Property tests for the module invariants.

mod common;

use proptest::prelude::*;

use common::*;
use cta::align::{align_bundle, align_intents, build_intent_model, IntentWindow};
use cta::bundle::{delta_p, token_ratio};
use cta::config::AuditConfig;
use cta::detect::{
    detect_cb, detect_ep, detect_ps, detect_re, detect_sa, DetectorContext,
};
use cta::diff::{cap_diff, compute_diff, DiffItem, RowKind};
use cta::phase::{segment, PhaseSpan, PhaseType};
use cta::report::stratify;
use cta::text::NgramIndex;
use cta::trace::{classify_event, normalize_path, EventType};

proptest! {
    #[test]
    fn delta_p_is_antisymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let ab = delta_p(a, b).unwrap();
        let ba = delta_p(b, a).unwrap();
        prop_assert!((ab + ba).abs() < 1e-9);
    }

    #[test]
    fn delta_p_of_equal_rates_is_zero(a in 0.0f64..=1.0) {
        prop_assert_eq!(delta_p(a, a).unwrap(), 0.0);
    }

    #[test]
    fn token_ratios_are_reciprocal(a in 1u64..1_000_000, b in 1u64..1_000_000) {
        let ab = token_ratio(a, b).unwrap();
        let ba = token_ratio(b, a).unwrap();
        prop_assert!((ab * ba - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_path_is_idempotent(
        parts in prop::collection::vec("[a-zA-Z0-9_.]{1,8}|\\.|\\.\\.", 1..8),
        absolute in any::<bool>(),
        prefix in prop::sample::select(vec!["", "/workspace/repo"]),
    ) {
        let mut raw = parts.join("/");
        if absolute {
            raw = format!("/{raw}");
        }
        let once = normalize_path(&raw, prefix).unwrap();
        let twice = normalize_path(&once, prefix).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn classification_is_total_over_arbitrary_labels(name in ".{0,24}") {
        let config = AuditConfig::default();
        let ty = classify_event(&name, false, &config);
        prop_assert!(matches!(
            ty,
            EventType::Read
                | EventType::Write
                | EventType::Execute
                | EventType::Search
                | EventType::Think
        ));
    }

    #[test]
    fn intent_pairing_is_monotone(
        with_texts in prop::collection::vec(prop::sample::select(vec![
            "fix the parser module", "add a regression test", "run the suite",
            "inspect the config", "write the readme",
        ]), 0..6),
        without_texts in prop::collection::vec(prop::sample::select(vec![
            "fix the parser module", "add a regression test", "run the suite",
            "inspect the config", "write the readme",
        ]), 0..6),
    ) {
        let mk = |texts: &[&str]| -> Vec<IntentWindow> {
            texts.iter().enumerate().map(|(i, t)| IntentWindow {
                phase: PhaseSpan {
                    phase_type: PhaseType::Implementation,
                    start_index: i,
                    end_index: i,
                    via_fallback: false,
                },
                intent_text: t.to_string(),
                action_window: vec![],
                start_index: i,
                end_index: i,
            }).collect()
        };
        let with_refs: Vec<&str> = with_texts.to_vec();
        let without_refs: Vec<&str> = without_texts.to_vec();
        let w = mk(&with_refs);
        let v = mk(&without_refs);
        let model = build_intent_model(&[&w, &v]);
        let out = align_intents(&w, &v, &model, 0.5);
        for pair in out.pairs.windows(2) {
            prop_assert!(pair[1].0 > pair[0].0);
            prop_assert!(pair[1].1 > pair[0].1);
        }
        for (_, _, s) in &out.pairs {
            prop_assert!(*s >= 0.5);
        }
    }

    #[test]
    fn ngram_clause_is_monotone_in_skill_text(
        skill in "[a-d ]{10,60}",
        content in "[a-d ]{10,60}",
        extension in "[a-z ]{0,40}",
    ) {
        // adding skill text never turns a true match false
        let before = NgramIndex::build(&skill, 3, 8).longest_match(&content).is_some();
        let extended = format!("{skill} {extension}");
        let after = NgramIndex::build(&extended, 3, 8).longest_match(&content).is_some();
        prop_assert!(!before || after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detector_scores_stay_in_unit_interval(seed in any::<u64>()) {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let config = AuditConfig::default();

        let len_with = rng.gen_range(1..=12);
        let len_without = rng.gen_range(1..=12);
        let with = random_stream(&mut rng, len_with);
        let without = random_stream(&mut rng, len_without);
        let with_phases = segment(&with, &config).unwrap();
        let without_phases = segment(&without, &config).unwrap();
        let outcome = align_bundle("t", &with, &without, &with_phases, &without_phases, &config)
            .unwrap();

        let spec = cta::bundle::TaskSpec::default();
        let skill = "## Steps\n\n1. Review the module.\n2. Write the fix.\n\nline one\nline two\n";
        let ctx = DetectorContext::new(
            &spec, skill, &with, &without, &with_phases, &without_phases,
            (rng.gen_range(0..5000), rng.gen_range(1..5000)),
            rng.gen_range(-100.0..100.0),
            &config,
        );
        for div in &outcome.divergences {
            for result in [
                detect_ps(div, &ctx),
                detect_ep(div, &ctx),
                detect_re(div, &ctx),
                detect_sa(div, &ctx),
                detect_cb(div, &ctx),
            ] {
                prop_assert!((0.0..=1.0).contains(&result.score), "score {}", result.score);
                if result.score > 0.0 {
                    prop_assert!(!result.evidence.is_empty());
                }
            }
        }
    }

    #[test]
    fn alignment_is_deterministic_and_stably_ordered(seed in any::<u64>()) {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let config = AuditConfig::default();
        let len_with = rng.gen_range(1..=15);
        let len_without = rng.gen_range(1..=15);
        let with = random_stream(&mut rng, len_with);
        let without = random_stream(&mut rng, len_without);
        let with_phases = segment(&with, &config).unwrap();
        let without_phases = segment(&without, &config).unwrap();

        let a = align_bundle("t", &with, &without, &with_phases, &without_phases, &config).unwrap();
        let b = align_bundle("t", &with, &without, &with_phases, &without_phases, &config).unwrap();
        prop_assert_eq!(&a, &b);

        // ids are dense and anchored ordering is non-decreasing
        for (i, div) in a.divergences.iter().enumerate() {
            prop_assert_eq!(div.id, i);
        }
        let anchors: Vec<usize> = a
            .divergences
            .iter()
            .map(|d| d.with_window.as_ref().map(|w| w.start_index).unwrap_or(usize::MAX))
            .collect();
        for w in anchors.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }

        // every record's phase comes from the with-skill span containing
        // its with-window
        for div in &a.divergences {
            if let Some(window) = &div.with_window {
                let span = with_phases
                    .span_of(window.start_index)
                    .map(|i| with_phases.spans[i]);
                if let Some(span) = span {
                    prop_assert_eq!(span.phase_type, div.phase_type);
                }
            }
        }

        // affected targets are never empty for target/content mismatches
        // or recovery-pass records; recovery records have no without side
        for div in &a.divergences {
            match div.div_type {
                cta::align::DivType::TargetMismatch | cta::align::DivType::ContentMismatch => {
                    prop_assert!(!div.affected_targets.is_empty());
                }
                cta::align::DivType::UnilateralAction if div.from_recovery() => {
                    prop_assert!(!div.affected_targets.is_empty());
                    prop_assert!(div.without_window.is_none());
                }
                _ => {}
            }
        }
    }

    #[test]
    fn capped_diffs_keep_every_nonshared_row(seed in any::<u64>(), max_rows in 4usize..40) {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let config = AuditConfig::default();
        let len_with = rng.gen_range(1..=40);
        let len_without = rng.gen_range(1..=40);
        let with = random_stream(&mut rng, len_with);
        let without = random_stream(&mut rng, len_without);

        let full = compute_diff(&with, &without, &config).unwrap();
        let capped = cap_diff(&full, max_rows);

        let count = |items: &[DiffItem], pred: fn(&RowKind) -> bool| {
            items.iter().filter(|i| match i {
                DiffItem::Row { kind, .. } => pred(kind),
                _ => false,
            }).count()
        };
        let nonshared = |k: &RowKind| *k != RowKind::Shared;
        let shared = |k: &RowKind| *k == RowKind::Shared;

        let full_nonshared = count(&full.items, nonshared);
        let capped_nonshared = count(&capped.items, nonshared);
        let capped_shared = count(&capped.items, shared);

        // a non-shared row may only vanish once no shared row remains
        if capped_nonshared < full_nonshared {
            prop_assert_eq!(capped_shared, 0);
        }
        // the cap itself holds (content rows only)
        prop_assert!(capped_nonshared + capped_shared <= max_rows.max(full.total_rows.min(max_rows)));
    }

    #[test]
    fn stratification_is_permutation_invariant(seed in any::<u64>()) {
        use rand::{rngs::StdRng, seq::SliceRandom, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let config = AuditConfig::default();

        let mut audits = Vec::new();
        for i in 0..rng.gen_range(1..=6) {
            let len_with = rng.gen_range(1..=8);
            let len_without = rng.gen_range(1..=8);
            let with = random_stream(&mut rng, len_with);
            let without = random_stream(&mut rng, len_without);
            let with_phases = segment(&with, &config).unwrap();
            let without_phases = segment(&without, &config).unwrap();
            let outcome =
                align_bundle("t", &with, &without, &with_phases, &without_phases, &config).unwrap();
            audits.push(cta::report::TaskAudit {
                task_id: format!("task-{i}"),
                delta_p: rng.gen_range(-20.0..20.0),
                baseline: rng.gen_range(0.0..=1.0),
                pass_with: 0.5,
                bucket: cta::report::Bucket::from_baseline(0.5),
                token_ratio: if rng.gen_bool(0.8) { Some(rng.gen_range(0.1..5.0)) } else { None },
                tokens_with: 10,
                tokens_without: 10,
                divergences: outcome.divergences,
                sip_fires: vec![],
                phases_with: with_phases.clone(),
                phases_without: without_phases.clone(),
                fallback_flags: (with_phases.fallback_applied, without_phases.fallback_applied),
                skipped_records: (0, 0),
                unknown_tools: (0, 0),
                config: config.clone(),
            });
        }
        // fix bucket from the generated baseline
        for audit in &mut audits {
            audit.bucket = cta::report::Bucket::from_baseline(audit.baseline);
        }
        let s1 = stratify(&audits).unwrap();
        let mut shuffled = audits.clone();
        shuffled.shuffle(&mut rng);
        let s2 = stratify(&shuffled).unwrap();
        prop_assert_eq!(s1, s2);
    }
}
