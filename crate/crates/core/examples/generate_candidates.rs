//! Beam search, ancestral sampling and nucleus sampling on one toy model.

use qad::generation::{generate, to_candidate, GenConfig};
use qad::toy_task::{toy_task, ToyTaskConfig};

fn main() {
    let task = toy_task(&ToyTaskConfig {
        segments: 1,
        ..Default::default()
    })
    .expect("toy task");
    let (source, model) = &task.segments[0];
    println!(
        "source: {}\nreference: {}\n",
        source.text, task.references[0]
    );

    let configs = [
        ("beam 5", GenConfig::beam(5, 10)),
        ("ancestral x8", GenConfig::ancestral(8, 10, 1)),
        (
            "ancestral x50, merged",
            GenConfig {
                dedup: true,
                ..GenConfig::ancestral(50, 10, 1)
            },
        ),
        ("nucleus p=0.6 x8", GenConfig::nucleus(8, 0.6, 10, 1)),
    ];
    for (name, cfg) in configs {
        println!("{name}:");
        for hyp in generate(model, &cfg, source.id) {
            let cand = to_candidate(model, &hyp);
            let flag = if cand.truncated { " (truncated)" } else { "" };
            println!(
                "  x{:<3} {:8.3}  {}{flag}",
                cand.multiplicity, hyp.logprob, cand.text
            );
        }
    }
}
