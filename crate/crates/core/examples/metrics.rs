//! Sentence and corpus BLEU/chrF, and a corpus evaluation report.

use qad::metrics::{
    bleu_stats, corpus_bleu, sentence_bleu, sentence_chrf, tokenize_13a, MetricSpec,
};
use qad::report::eval_report;

fn main() {
    let pairs = [
        ("The cat sat on the mat.", "The cat sat on the mat."),
        ("The cat is on the mat.", "The cat sat on the mat."),
        ("A dog, 3.5 kg, ran off!", "The dog (3.5kg) ran away."),
        ("mat", "The cat sat on the mat."),
    ];
    println!("{:<26} {:>8} {:>8}", "hypothesis", "BLEU", "chrF");
    for (hyp, reference) in pairs {
        println!(
            "{hyp:<26} {:8.2} {:8.2}",
            sentence_bleu(hyp, reference),
            sentence_chrf(hyp, reference)
        );
    }
    println!("\n13a tokens: {:?}", tokenize_13a(pairs[2].0));

    // Corpus BLEU sums sufficient statistics; it is not a mean of sentence scores.
    let total = pairs.iter().map(|(h, r)| bleu_stats(h, r)).sum();
    println!("corpus BLEU {:.2}\n", corpus_bleu(&total));

    let hyps: Vec<String> = pairs.iter().map(|p| p.0.to_string()).collect();
    let refs: Vec<String> = pairs.iter().map(|p| p.1.to_string()).collect();
    let srcs = vec![String::new(); hyps.len()];
    let report = eval_report(
        &hyps,
        &refs,
        &srcs,
        &[MetricSpec::bleu(), MetricSpec::chrf()],
    )
    .expect("report");
    print!("{}", report.to_text());
}
