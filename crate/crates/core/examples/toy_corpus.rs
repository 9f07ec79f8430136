//! Write a synthetic test set and dev set for the `qad` command line.
//!
//! ```text
//! cargo run --example toy_corpus -- /tmp/toy
//! qad pipeline --models /tmp/toy/test --refs /tmp/toy/test.ref --out /tmp/run
//! ```

use std::path::PathBuf;

use qad::corpus::write_lines;
use qad::pipeline::save_model_dir;
use qad::toy_task::{toy_task, ToyTaskConfig};

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy".into()));
    for (name, seed, segments) in [("test", 1, 50), ("dev", 2, 30)] {
        let task = toy_task(&ToyTaskConfig {
            segments,
            seed,
            ..Default::default()
        })
        .expect("toy task");
        save_model_dir(&root.join(name), &task.segments).expect("write models");
        write_lines(&task.references, root.join(format!("{name}.ref"))).expect("write references");
        println!(
            "{name}: {segments} segment models in {}",
            root.join(name).display()
        );
    }
}
