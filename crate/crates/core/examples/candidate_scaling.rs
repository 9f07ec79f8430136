//! Oracle reranking with growing candidate pools: more samples, better picks.
//!
//! Each segment's candidates are ancestral samples; the oracle feature is
//! sentence BLEU against the hidden reference. Pools are nested prefixes of
//! one sample stream, so larger pools only add options.

use qad::generation::{build_nbest, GenConfig};
use qad::metrics::{bleu_stats, corpus_bleu, sentence_bleu};
use qad::toy_task::{toy_task, ToyTaskConfig};

fn main() {
    let task = toy_task(&ToyTaskConfig::default()).expect("toy task");
    let refs = &task.references;
    let corpus =
        |hyps: &[String]| corpus_bleu(&hyps.iter().zip(refs).map(|(h, r)| bleu_stats(h, r)).sum());

    let beam = build_nbest(&task.segments, &GenConfig::beam(5, 10));
    let baseline: Vec<String> = beam.iter().map(|e| e.candidates[0].text.clone()).collect();
    println!("beam-5 top-1      BLEU {:6.2}", corpus(&baseline));

    let pool = build_nbest(&task.segments, &GenConfig::ancestral(200, 10, 7));
    for n in [1, 5, 20, 50, 100, 200] {
        let picks: Vec<String> = pool
            .iter()
            .zip(refs)
            .map(|(e, r)| {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (i, c) in e.candidates[..n].iter().enumerate() {
                    let s = sentence_bleu(&c.text, r);
                    if s > best_score {
                        best = i;
                        best_score = s;
                    }
                }
                e.candidates[best].text.clone()
            })
            .collect();
        println!("oracle N={n:<4}     BLEU {:6.2}", corpus(&picks));
    }
}
