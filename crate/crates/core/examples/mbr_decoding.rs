//! MBR decoding over samples, with and without the diagonal, and with a
//! reduced pseudo-reference set.

use qad::generation::{build_nbest, GenConfig};
use qad::mbr::{mbr_corpus, utility_matrix, MbrConfig};
use qad::metrics::{bleu_stats, corpus_bleu, BuiltinMetric};
use qad::toy_task::{toy_task, ToyTaskConfig};

fn main() {
    let task = toy_task(&ToyTaskConfig::default()).expect("toy task");
    let gen = GenConfig {
        dedup: true,
        ..GenConfig::ancestral(50, 10, 4)
    };
    let pool = build_nbest(&task.segments, &gen);

    let first = &pool[0];
    let matrix =
        utility_matrix(first, &BuiltinMetric::Bleu, &MbrConfig::default()).expect("matrix");
    println!(
        "segment 0: {} distinct candidates from {} samples",
        first.candidates.len(),
        first.sample_count()
    );
    let eu = matrix.expected_utilities(true);
    for (i, c) in first.candidates.iter().enumerate().take(5) {
        println!("  x{:<3} EU {:6.2}  {}", c.multiplicity, eu[i], c.text);
    }

    let beam = build_nbest(&task.segments, &GenConfig::beam(5, 10));
    let corpus = |texts: Vec<String>| {
        corpus_bleu(
            &texts
                .iter()
                .zip(&task.references)
                .map(|(h, r)| bleu_stats(h, r))
                .sum(),
        )
    };
    println!(
        "\nbeam-5 BLEU                {:6.2}",
        corpus(beam.iter().map(|e| e.candidates[0].text.clone()).collect())
    );
    let variants = [
        ("MBR", MbrConfig::default()),
        (
            "MBR without diagonal",
            MbrConfig {
                include_diagonal: false,
                ..Default::default()
            },
        ),
        (
            "MBR, 10 pseudo-refs",
            MbrConfig {
                num_pseudo_refs: Some(10),
                ..Default::default()
            },
        ),
    ];
    for (name, cfg) in variants {
        let picks = mbr_corpus(&pool, &BuiltinMetric::Bleu, &cfg).expect("mbr");
        println!(
            "{name:<26} {:6.2}",
            corpus(picks.into_iter().map(|s| s.text).collect())
        );
    }
}
