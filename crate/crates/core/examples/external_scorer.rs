//! Plug an out-of-process metric in through the line protocol.
//!
//! The stub below is a shell script that announces a reference-free metric
//! and answers every request with the hypothesis length in characters. Any
//! program that speaks the protocol (a neural QE model, say) works the same.

use qad::corpus::{Candidate, NBestEntry};
use qad::metrics::{ExternalScorer, ExternalScorerConfig, ScoreRow};
use qad::rerank::{extract_features, rerank_fixed, FeatureSource};

const STUB: &str = r#"echo "QAD-SCORER 1 chars noref"
while IFS= read -r line; do
  hyp=$(printf '%s' "$line" | cut -f2)
  echo "${#hyp}"
done"#;

fn main() {
    let config = ExternalScorerConfig::new(vec!["sh".into(), "-c".into(), STUB.into()]);
    let scorer = ExternalScorer::spawn(&config).expect("spawn scorer");
    println!("connected to {:?} ({:?})", scorer.name(), scorer.kind());

    let rows = [
        ScoreRow::new("src", "short", None),
        ScoreRow::new("src", "a bit longer", None),
    ];
    println!("direct scores: {:?}", scorer.score(&rows).expect("score"));

    let entries = vec![NBestEntry::new(
        0,
        "ein kleiner Test",
        ["a test", "a small test", "test"]
            .map(|t| Candidate::new(t).with_logprob(-1.0))
            .to_vec(),
    )];
    let features = extract_features(
        &entries,
        &[FeatureSource::Logprob, FeatureSource::Metric(&scorer)],
    )
    .expect("features");
    println!("feature columns: {:?}", features.names);
    let pick = rerank_fixed(&entries, &features, "chars").expect("rerank");
    println!("longest candidate: {:?}", pick[0].text);
}
