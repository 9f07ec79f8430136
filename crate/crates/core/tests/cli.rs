use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qad::pipeline::save_model_dir;
use qad::toy_task::{toy_task, ToyTaskConfig};
use tempfile::TempDir;

const QAD: &str = env!("CARGO_BIN_EXE_qad");

/// A work directory holding `test/` and `dev/` model dirs plus references.
fn workdir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed, segments) in [("test", 1, 6), ("dev", 2, 5)] {
        let task = toy_task(&ToyTaskConfig {
            segments,
            seed,
            ..Default::default()
        })
        .unwrap();
        save_model_dir(&dir.path().join(name), &task.segments).unwrap();
        fs::write(
            dir.path().join(format!("{name}.ref")),
            task.references.join("\n") + "\n",
        )
        .unwrap();
    }
    dir
}

fn qad(dir: &Path, args: &[&str]) -> Output {
    Command::new(QAD)
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = qad(dir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn write_script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    format!("external:sh {}", path.display())
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["pipeline", "--help"]] {
        ok(dir.path(), args);
    }
}

#[test]
fn every_subcommand_exists() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "generate",
        "score",
        "rerank-fixed",
        "rerank-tuned",
        "mert",
        "mbr",
        "pipeline",
        "eval",
        "mqm-score",
    ] {
        ok(dir.path(), &[sub, "--help"]);
    }
}

#[test]
fn validation_errors_exit_2() {
    let w = workdir();
    let d = w.path();
    fs::write(
        d.join("bad.jsonl"),
        "{\"id\": 0, \"src\": \"s\", \"hyps\": [{\"text\": \"a\", \"logprob\": 3.0}]}\n",
    )
    .unwrap();
    fs::write(d.join("garbled.jsonl"), "not json\n").unwrap();
    fs::write(d.join("unknown.config"), "beam-sizes = 3\n").unwrap();
    let cases: &[&[&str]] = &[
        &["generate", "--model", "test", "--out", "x", "--bogus"],
        &["frobnicate"],
        &[
            "generate",
            "--model",
            "test",
            "--out",
            "x",
            "--method",
            "telepathy",
        ],
        &["generate", "--model", "test", "--out", "x", "--p", "1.5"],
        &[
            "generate",
            "--model",
            "test",
            "--out",
            "x",
            "--beam-size",
            "0",
        ],
        &["rerank-fixed", "--nbest", "bad.jsonl", "--out", "x"],
        &["rerank-fixed", "--nbest", "garbled.jsonl", "--out", "x"],
        &["mbr", "--nbest", "bad.jsonl", "--refs", "0", "--out", "x"],
        &["mqm-score", "--minor", "1", "--segments", "0"],
        &[
            "--config",
            "unknown.config",
            "generate",
            "--model",
            "test",
            "--out",
            "x",
        ],
        &[
            "pipeline", "--models", "test", "--rank", "tuned", "--out", "run",
        ],
    ];
    for args in cases {
        let out = qad(d, args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn missing_files_exit_4() {
    let w = workdir();
    let d = w.path();
    ok(
        d,
        &["generate", "--model", "test", "--out", "test.nbest.jsonl"],
    );
    let cases: &[&[&str]] = &[
        &["rerank-fixed", "--nbest", "missing.jsonl", "--out", "x"],
        &["generate", "--model", "no-such-dir", "--out", "x"],
        &["eval", "--hyps", "missing.txt", "--refs", "test.ref"],
        &[
            "--config",
            "missing.config",
            "generate",
            "--model",
            "test",
            "--out",
            "x",
        ],
        &[
            "rerank-fixed",
            "--nbest",
            "test.nbest.jsonl",
            "--out",
            "no/such/dir/out.txt",
        ],
    ];
    for args in cases {
        let out = qad(d, args);
        assert_eq!(
            code(&out),
            4,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn scorer_failures_exit_3() {
    let w = workdir();
    let d = w.path();
    ok(
        d,
        &["generate", "--model", "test", "--out", "test.nbest.jsonl"],
    );
    let garbage = write_script(
        d,
        "garbage.sh",
        "echo 'QAD-SCORER 1 g noref'\nread -r a; echo 1\nread -r b; echo abc\n",
    );
    let crash = write_script(
        d,
        "crash.sh",
        "echo 'QAD-SCORER 1 c noref'\nread -r a; exit 9\n",
    );
    let handshake = write_script(d, "hello.sh", "echo hello\n");
    for feature in [&garbage, &crash, &handshake] {
        let out = qad(
            d,
            &[
                "score",
                "--nbest",
                "test.nbest.jsonl",
                "--feature",
                feature,
                "--out",
                "f.jsonl",
            ],
        );
        assert_eq!(
            code(&out),
            3,
            "{feature}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = qad(
        d,
        &[
            "score",
            "--nbest",
            "test.nbest.jsonl",
            "--feature",
            &garbage,
            "--out",
            "f.jsonl",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = qad(
        d,
        &[
            "mbr",
            "--nbest",
            "test.nbest.jsonl",
            "--utility",
            &crash,
            "--out",
            "x",
        ],
    );
    // The scorer announces itself as reference-free: a handshake failure.
    assert_eq!(code(&out), 3);
}

#[test]
fn mqm_score_prints_the_score() {
    let dir = tempfile::tempdir().unwrap();
    let score = |args: &[&str]| {
        String::from_utf8_lossy(&ok(dir.path(), args).stdout)
            .trim()
            .to_string()
    };
    // W = 10 + 5 * 2 = 20 over 25 * 4 = 100 points.
    assert_eq!(
        score(&[
            "mqm-score",
            "--minor",
            "10",
            "--major",
            "2",
            "--segments",
            "4"
        ]),
        "80"
    );
    assert_eq!(
        score(&[
            "mqm-score",
            "--critical",
            "1",
            "--segments",
            "4",
            "--mqm-norm",
            "10"
        ]),
        "75"
    );
    assert_eq!(
        score(&["mqm-score", "--minor", "500", "--segments", "4"]),
        "0"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let w = workdir();
    let d = w.path();
    fs::write(
        d.join("exp.config"),
        "# experiment\nmodels = test\nrefs = test.ref\nbeam_size = 1\nmax-len = 10\nout = from-config\nmetric = bleu\n",
    )
    .unwrap();
    ok(d, &["--config", "exp.config", "pipeline"]);
    let resolved = read(&d.join("from-config"), "run.config");
    assert!(resolved.contains("beam-size = 1\n"), "{resolved}");
    assert!(
        resolved.contains("metric = bleu\n") && !resolved.contains("metric = chrf"),
        "{resolved}"
    );

    ok(
        d,
        &[
            "--config",
            "exp.config",
            "pipeline",
            "--beam-size",
            "3",
            "--out",
            "from-flags",
        ],
    );
    let resolved = read(&d.join("from-flags"), "run.config");
    assert!(resolved.contains("beam-size = 3\n"), "{resolved}");

    // The resolved settings reproduce the run.
    ok(
        d,
        &[
            "--config",
            "from-flags/run.config",
            "pipeline",
            "--out",
            "replay",
        ],
    );
    assert_eq!(
        read(&d.join("from-flags"), "hyps.txt"),
        read(&d.join("replay"), "hyps.txt")
    );
    assert_eq!(
        read(&d.join("from-flags"), "test.nbest.jsonl"),
        read(&d.join("replay"), "test.nbest.jsonl")
    );
}

#[test]
fn single_commands_write_resolved_settings() {
    let w = workdir();
    let d = w.path();
    ok(
        d,
        &[
            "--seed",
            "4",
            "generate",
            "--model",
            "test",
            "--method",
            "ancestral",
            "--samples",
            "7",
            "--out",
            "n.jsonl",
        ],
    );
    let settings = read(d, "n.jsonl.config");
    assert!(
        settings.contains("seed = 4\n") && settings.contains("samples = 7\n"),
        "{settings}"
    );
    // Replaying the settings file regenerates the same list.
    ok(
        d,
        &["--config", "n.jsonl.config", "generate", "--out", "m.jsonl"],
    );
    assert_eq!(read(d, "n.jsonl"), read(d, "m.jsonl"));
}

#[test]
fn pipeline_fixed_equals_generate_then_rerank() {
    let w = workdir();
    let d = w.path();
    ok(
        d,
        &[
            "pipeline",
            "--models",
            "test",
            "--refs",
            "test.ref",
            "--max-len",
            "10",
            "--out",
            "run",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--model",
            "test",
            "--refs",
            "test.ref",
            "--max-len",
            "10",
            "--out",
            "n.jsonl",
        ],
    );
    ok(
        d,
        &[
            "rerank-fixed",
            "--nbest",
            "n.jsonl",
            "--out",
            "hyps.txt",
            "--selections",
            "sel.jsonl",
        ],
    );
    assert_eq!(read(d, "n.jsonl"), read(&d.join("run"), "test.nbest.jsonl"));
    assert_eq!(read(d, "hyps.txt"), read(&d.join("run"), "hyps.txt"));
    assert_eq!(
        read(d, "sel.jsonl"),
        read(&d.join("run"), "selections.jsonl")
    );
    ok(
        d,
        &[
            "eval", "--hyps", "hyps.txt", "--refs", "test.ref", "--out", "eval.tsv",
        ],
    );
    assert_eq!(read(d, "eval.tsv"), read(&d.join("run"), "eval.tsv"));
}

#[test]
fn pipeline_two_stage_equals_individual_commands() {
    let w = workdir();
    let d = w.path();
    let gen = [
        "--method",
        "ancestral",
        "--samples",
        "12",
        "--max-len",
        "10",
    ];
    let length = format!("external:{QAD} serve-scorer --kind length");
    let mut args = vec![
        "--seed", "5", "--dedup", "pipeline", "--models", "test", "--refs", "test.ref",
    ];
    args.extend(["--dev-models", "dev", "--dev-refs", "dev.ref"]);
    args.extend(gen);
    args.extend([
        "--feature",
        "logprob",
        "--feature",
        &length,
        "--rank",
        "two-stage",
        "--prune-to",
        "4",
    ]);
    args.extend(["--restarts", "3", "--out", "run"]);
    ok(d, &args);

    let generate = |model: &str, refs: &str, out: &str| {
        let mut a = vec![
            "--seed", "5", "--dedup", "generate", "--model", model, "--refs", refs, "--out", out,
        ];
        a.extend(gen);
        ok(d, &a);
    };
    generate("test", "test.ref", "test.jsonl");
    generate("dev", "dev.ref", "dev.jsonl");
    for set in ["test", "dev"] {
        let nbest = format!("{set}.jsonl");
        let out = format!("{set}.features.jsonl");
        ok(
            d,
            &[
                "score",
                "--nbest",
                &nbest,
                "--feature",
                "logprob",
                "--feature",
                &length,
                "--out",
                &out,
            ],
        );
    }
    ok(
        d,
        &[
            "--seed",
            "5",
            "mert",
            "--nbest",
            "dev.jsonl",
            "--features",
            "dev.features.jsonl",
            "--restarts",
            "3",
            "--out",
            "w.tsv",
        ],
    );
    ok(
        d,
        &[
            "mbr",
            "--nbest",
            "test.jsonl",
            "--features",
            "test.features.jsonl",
            "--weights",
            "w.tsv",
            "--prune-to",
            "4",
            "--out",
            "hyps.txt",
            "--selections",
            "sel.jsonl",
        ],
    );
    let run = d.join("run");
    assert_eq!(read(d, "test.jsonl"), read(&run, "test.nbest.jsonl"));
    assert_eq!(
        read(d, "dev.features.jsonl"),
        read(&run, "dev.features.jsonl")
    );
    assert_eq!(read(d, "w.tsv"), read(&run, "weights.tsv"));
    assert_eq!(read(d, "w.tsv.trace.jsonl"), read(&run, "mert.trace.jsonl"));
    assert_eq!(read(d, "sel.jsonl"), read(&run, "selections.jsonl"));
    assert_eq!(read(d, "hyps.txt"), read(&run, "hyps.txt"));

    // rerank-tuned with the same weights.
    ok(
        d,
        &[
            "rerank-tuned",
            "--nbest",
            "test.jsonl",
            "--features",
            "test.features.jsonl",
            "--weights",
            "w.tsv",
            "--out",
            "t.txt",
        ],
    );
    assert_eq!(read(d, "t.txt").lines().count(), 6);
}

#[test]
fn external_utility_matches_builtin() {
    let w = workdir();
    let d = w.path();
    ok(
        d,
        &[
            "--dedup",
            "generate",
            "--model",
            "test",
            "--method",
            "ancestral",
            "--samples",
            "10",
            "--max-len",
            "10",
            "--out",
            "n.jsonl",
        ],
    );
    let external = format!("external:{QAD} serve-scorer --kind bleu");
    ok(d, &["mbr", "--nbest", "n.jsonl", "--out", "builtin.txt"]);
    ok(
        d,
        &[
            "mbr",
            "--nbest",
            "n.jsonl",
            "--utility",
            &external,
            "--out",
            "external.txt",
        ],
    );
    assert_eq!(read(d, "builtin.txt"), read(d, "external.txt"));
}
