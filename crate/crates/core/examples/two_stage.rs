//! The whole pipeline in-process: sample candidates, tune weights on a dev
//! set, prune the test candidates to the reranker's top 10 and run MBR on
//! the survivors.
//!
//! Samples are left unmerged: merging can leave a segment with fewer
//! distinct candidates than the pruning size, which is rejected.

use qad::generation::Method;
use qad::pipeline::{run_pipeline, save_model_dir, RankMethod, RunConfig};
use qad::toy_task::{toy_task, ToyTaskConfig};

// Reference-free length feature served over the scorer protocol.
const LENGTH: &str = r#"echo "QAD-SCORER 1 length noref"
while IFS= read -r line; do
  hyp=$(printf '%s' "$line" | cut -f2)
  echo "${#hyp}"
done
"#;

fn main() {
    let root = std::env::temp_dir().join("qad-two-stage-example");
    std::fs::create_dir_all(&root).expect("temp dir");
    let script = root.join("length.sh");
    std::fs::write(&script, LENGTH).expect("scorer script");
    for (name, seed, segments) in [("test", 1, 30), ("dev", 2, 20)] {
        let task = toy_task(&ToyTaskConfig {
            segments,
            seed,
            ..Default::default()
        })
        .expect("toy task");
        save_model_dir(&root.join(name), &task.segments).expect("models");
        std::fs::write(
            root.join(format!("{name}.ref")),
            task.references.join("\n") + "\n",
        )
        .expect("refs");
    }
    let cfg = RunConfig {
        seed: 1,
        models: Some(root.join("test")),
        refs: Some(root.join("test.ref")),
        dev_models: Some(root.join("dev")),
        dev_refs: Some(root.join("dev.ref")),
        method: Method::Ancestral,
        samples: 60,
        max_len: 10,
        features: vec![
            "logprob".into(),
            format!("external:sh {}", script.display()),
        ],
        rank: RankMethod::TwoStage,
        prune_to: Some(10),
        out: root.join("run"),
        ..Default::default()
    };
    let outputs = run_pipeline(&cfg).expect("pipeline");
    for file in &outputs.files {
        println!("wrote {}", file.display());
    }
    if let Some(w) = &outputs.weights {
        println!("tuned weights: {:?}", w.iter().collect::<Vec<_>>());
    }
    print!(
        "{}",
        std::fs::read_to_string(root.join("run/eval.txt")).expect("eval report")
    );
}
