//! Fixed and tuned N-best reranking with a feature cache round trip.

use qad::corpus::{Candidate, NBestEntry, WeightsTable};
use qad::rerank::{
    read_feature_cache, rerank_fixed, rerank_tuned, write_feature_cache, FeatureMatrix,
};

fn main() {
    let cand = |text: &str, lp: f64, qe: f64| {
        let mut c = Candidate::new(text).with_logprob(lp);
        c.features.insert("qe".into(), qe);
        c
    };
    let entries = vec![
        NBestEntry::new(
            0,
            "das Haus",
            vec![cand("the house", -1.2, 0.71), cand("the home", -0.9, 0.55)],
        ),
        NBestEntry::new(
            1,
            "ein Test",
            vec![cand("a test", -2.0, 0.80), cand("one test", -1.1, 0.30)],
        ),
    ];
    let features = FeatureMatrix::from_entries(&entries).expect("features");

    let dir = std::env::temp_dir().join("qad-rerank-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let cache = dir.join("features.jsonl");
    write_feature_cache(&features, &cache).expect("write cache");
    let features = read_feature_cache(&cache).expect("read cache");

    for name in ["logprob", "qe"] {
        let picks = rerank_fixed(&entries, &features, name).expect("fixed");
        println!(
            "fixed on {name:<8} {:?}",
            picks.iter().map(|s| &s.text).collect::<Vec<_>>()
        );
    }
    let weights: WeightsTable = [("logprob".to_string(), 0.3), ("qe".to_string(), 1.0)]
        .into_iter()
        .collect();
    for s in rerank_tuned(&entries, &features, &weights).expect("tuned") {
        println!(
            "tuned segment {}: {:?} score {:.3} margin {:.3}",
            s.id, s.text, s.score, s.margin
        );
    }
}
