//! Tune reranking weights with MERT on a toy dev set, then rerank a test set.
//!
//! Features are the model log-probability and a noisy copy of the hidden
//! sentence BLEU; MERT should learn to trust the second one.

use qad::corpus::NBestEntry;
use qad::generation::{build_nbest, segment_rng, uniform01, GenConfig};
use qad::mert::{mert_optimize, MertConfig, MertInstance, Objective};
use qad::metrics::{bleu_stats, corpus_bleu, sentence_bleu};
use qad::rerank::{rerank_tuned, FeatureMatrix};
use qad::toy_task::{toy_task, ToyTaskConfig};

fn noisy_oracle(seed: u64, refs: &[String]) -> (Vec<NBestEntry>, FeatureMatrix) {
    let task = toy_task(&ToyTaskConfig {
        segments: 40,
        seed,
        ..Default::default()
    })
    .expect("toy task");
    let mut entries = build_nbest(&task.segments, &GenConfig::ancestral(30, 10, seed));
    let mut rng = segment_rng(seed, 999);
    for (e, r) in entries.iter_mut().zip(task.references.iter().chain(refs)) {
        e.references = vec![r.clone()];
        for c in &mut e.candidates {
            let noise = 40.0 * (uniform01(&mut rng) - 0.5);
            c.features
                .insert("qe".into(), sentence_bleu(&c.text, r) + noise);
        }
    }
    let features = FeatureMatrix::from_entries(&entries).expect("features");
    (entries, features)
}

fn main() {
    let (dev, dev_features) = noisy_oracle(2, &[]);
    let inst = MertInstance::from_nbest(&dev, &dev_features, Objective::CorpusBleu, None)
        .expect("instance");
    let result = mert_optimize(&inst, &MertConfig::default()).expect("mert");
    println!("dev corpus BLEU after tuning: {:.2}", result.objective);
    for (name, w) in result.weights.iter() {
        println!("  {name:<8} {w:+.4}");
    }
    println!(
        "restart objectives: {:?}",
        result
            .restart_objectives
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect::<Vec<_>>()
    );

    let (test, test_features) = noisy_oracle(3, &[]);
    let bleu = |weights| {
        let picks = rerank_tuned(&test, &test_features, weights).expect("rerank");
        corpus_bleu(
            &picks
                .iter()
                .zip(&test)
                .map(|(s, e)| bleu_stats(&s.text, &e.references[0]))
                .sum(),
        )
    };
    let logprob_only = [("logprob".to_string(), 1.0)].into_iter().collect();
    println!("test BLEU, logprob only: {:.2}", bleu(&logprob_only));
    println!("test BLEU, tuned:        {:.2}", bleu(&result.weights));
}
