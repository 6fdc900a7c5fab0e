//! Explore the intent-pairing machinery directly: TF-IDF cosine between
//! reasoning texts and the order-preserving greedy matching.
//!
//! ```bash
//! cargo run -p cta --example intent_similarity
//! ```

use cta::align::{align_intents, build_intent_model, intent_similarity, IntentWindow};
use cta::phase::{PhaseSpan, PhaseType};

fn window(i: usize, intent: &str) -> IntentWindow {
    IntentWindow {
        phase: PhaseSpan {
            phase_type: PhaseType::Implementation,
            start_index: i,
            end_index: i,
            via_fallback: false,
        },
        intent_text: intent.to_string(),
        action_window: vec![],
        start_index: i,
        end_index: i,
    }
}

fn main() {
    for (a, b) in [
        ("fix the parser bug", "fix the parser bug"),
        ("fix the parser bug", "add a regression test"),
        ("wire the evaluation runner", "wire the runner for evaluation"),
        ("", "anything"),
    ] {
        println!("sim({a:?}, {b:?}) = {:.3}", intent_similarity(a, b));
    }

    let with = vec![
        window(0, "inspect the scripts directory"),
        window(1, "harden the backup script"),
        window(2, "author the bats tests"),
    ];
    let without = vec![
        window(0, "inspect the scripts directory"),
        window(1, "harden the backup script"),
    ];
    let model = build_intent_model(&[&with, &without]);
    let out = align_intents(&with, &without, &model, 0.5);

    println!("\npairs (threshold 0.5):");
    for (i, j, s) in &out.pairs {
        println!(
            "  with[{i}] {:?} <-> without[{j}] {:?}  (sim {s:.3})",
            with[*i].intent_text, without[*j].intent_text
        );
    }
    println!("unpaired with-side indices: {:?}", out.unpaired_with);
    println!("unpaired without-side indices: {:?}", out.unpaired_without);
}
