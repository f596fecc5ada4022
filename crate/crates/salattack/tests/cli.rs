//! End-to-end runs of the command-line front end on a tiny model.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

use salattack::report;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salattack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_train_attack_metrics_and_sweep() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let pairs = root.join("pairs");
    ok(&["dataset", "--count", "6", "--height", "16", "--width", "16", "--seed", "1", "--previews", "--out", s(&data)]);
    assert!(data.join("sample0000.image.ppm").is_file());
    ok(&["dataset", "--kind", "pairs", "--count", "2", "--height", "16", "--width", "16", "--out", s(&pairs)]);

    let models = root.join("models");
    let stdout = ok(&["train", "--data", s(&data), "--epochs", "1", "--out", s(&models), "--name", "tiny"]);
    assert!(stdout.contains("held-out cc"), "{stdout}");
    let manifest = models.join("tiny.toml");
    assert!(manifest.is_file());

    let attack_dir = root.join("attack");
    let image = pairs.join("sample0000.image.sft");
    let guide = pairs.join("sample0001.image.sft");
    let stdout = ok(&[
        "attack", "--model", s(&manifest), "--image", s(&image), "--guide", s(&guide),
        "--mode", "targeted", "--layer", "4", "--loss", "cc", "--channels", "8",
        "--alpha", "0.002", "--gamma", "0.07", "--epsilon", "1e-8", "--tau1", "0.95", "--tau2", "0.3",
        "--max-iters", "4", "--norm-mode", "literal-minmax", "--clip", "true", "--out", s(&attack_dir),
    ]);
    assert!(stdout.contains("iterations"), "{stdout}");
    let log = std::fs::read_to_string(attack_dir.join("log.csv")).unwrap();
    assert!(log.starts_with("iteration,loss,d1,max-abs-delta-0,max-abs-delta-1,max-abs-delta-2\n"), "{log}");
    assert!(log.lines().count() >= 2);
    assert!(attack_dir.join("perturbation.sft").is_file());
    assert!(attack_dir.join("adversarial.sft").is_file());

    let sal = data.join("sample0000.saliency.sft");
    let sal2 = data.join("sample0001.saliency.sft");
    let stdout = ok(&["metrics", s(&sal), s(&sal2)]);
    assert!(stdout.lines().any(|l| l.starts_with("cc,")), "{stdout}");
    assert!(ok(&["metrics", s(&sal), s(&sal)]).contains("cc,1\n"));

    let plan = root.join("plan.toml");
    std::fs::write(
        &plan,
        "kind = \"permutation-check\"\nmodels = [\"models/tiny.toml\"]\noutput = \"out\"\nseed = 9\n\
         [images]\nsynthetic_pairs = 2\n[attack]\nmax_iterations = 3\n",
    )
    .unwrap();
    ok(&["sweep", s(&plan)]);
    let first = std::fs::read(root.join("out/report.csv")).unwrap();
    let rows = report::load(&root.join("out/report.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(root.join("out/config.toml").is_file());
    ok(&["sweep", s(&plan)]);
    assert_eq!(std::fs::read(root.join("out/report.csv")).unwrap(), first);
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    for args in [
        vec!["sweep", s(&missing)],
        vec!["metrics", s(&missing), s(&missing)],
        vec!["train", "--data", s(dir.path()), "--out", s(dir.path())],
    ] {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
    let bad = dir.path().join("bad.sft");
    std::fs::write(&bad, b"SFT1 2 3").unwrap();
    let out = run(&["metrics", s(&bad), s(&bad)]);
    assert!(!out.status.success());
}
