mod common;

use common::*;
use serde_json::json;

#[test]
fn phantom_with_empty_config_resolves_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.json", &json!({}));
    let out = lesionkit(&["phantom", "--config", cfg.to_str().unwrap(), "--set", "n_slices=3", "--out", "c"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("c/manifest.json").exists());
    let run = read_json(&dir.path().join("c/run.json"));
    assert_eq!(run["status"], "ok");
    assert_eq!(run["config"]["phantom"]["image_size"], 128);
    assert_eq!(run["config"]["phantom"]["lesion_radius_px"], json!([3.0, 12.0]));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({ "phantom": { "seeed": 1 } }));
    let out = lesionkit(&["phantom", "--config", cfg.to_str().unwrap(), "--out", "c"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/phantom/seeed: unknown key"), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[config]"));
    assert!(!dir.path().join("c").exists());
}

#[test]
fn json_syntax_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.json"), "{ \"n_slices\": ").unwrap();
    let out = lesionkit(&["phantom", "--config", "broken.json", "--out", "c"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("JSON syntax error"), "{}", stderr(&out));
}

#[test]
fn reversed_scale_range_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("in")).unwrap();
    let out = lesionkit(
        &["implant", "--set", "corpus=in", "--set", "pairs=in", "--set", "backend=procedural",
          "--set", "policy.ranges.scale=[1.5,0.5]", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/policy/ranges/scale"), "{}", stderr(&out));
}

#[test]
fn overrides_beat_config_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_phantom();
    cfg["phantom"]["seed"] = json!(3);
    let path = write_config(dir.path(), "p.json", &cfg);
    let p = path.to_str().unwrap();
    let out = lesionkit(&["phantom", "--config", p, "--seed", "5", "--set", "phantom.seed=9", "--out", "a"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = read_json(&dir.path().join("a/run.json"));
    assert_eq!(run["config"]["phantom"]["seed"], 9);
    assert_eq!(run["seed"], 9);
    let out = lesionkit(&["phantom", "--config", p, "--seed", "5", "--out", "b"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&dir.path().join("b/run.json"))["config"]["phantom"]["seed"], 5);
}

#[test]
fn seed_flag_rejected_where_meaningless() {
    let dir = tempfile::tempdir().unwrap();
    let out = lesionkit(&["report", "--set", "published=true", "--seed", "1", "--out", "r"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_input_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lesionkit(&["pairs", "--set", "corpus=absent", "--out", "p"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/corpus"), "{}", stderr(&out));
    let out = lesionkit(&["seg-train", "--out", "s"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/corpus: required"), "{}", stderr(&out));
}

#[test]
fn dry_run_writes_nothing_for_any_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", &tiny_phantom());
    let out = lesionkit(&["phantom", "--config", cfg.to_str().unwrap(), "--out", "c"], dir.path());
    assert_eq!(code(&out), 0);
    let out = lesionkit(&["pairs", "--set", "corpus=c", "--set", "params.patch_size=16", "--out", "p"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cases: Vec<Vec<&str>> = vec![
        vec!["phantom"],
        vec!["pairs", "--set", "corpus=c"],
        vec!["synth-train", "--set", "pairs=p"],
        vec!["synth-sample", "--set", "pairs=p", "--set", "backend=procedural"],
        vec!["implant", "--set", "corpus=c", "--set", "pairs=p", "--set", "backend=procedural"],
        vec!["seg-train", "--set", "corpus=c"],
        vec!["seg-eval", "--set", "corpus=c", "--set", "model=c"],
        vec!["experiment"],
        vec!["report", "--set", "published=true"],
    ];
    for args in cases {
        let mut full = args.clone();
        full.extend(["--dry-run", "--out", "dry"]);
        let out = lesionkit(&full, dir.path());
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(plan["subcommand"], args[0]);
        assert!(!dir.path().join("dry").exists(), "{args:?} wrote output");
    }
}

#[test]
fn pipeline_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "p.json", &tiny_phantom());
    let steps: Vec<Vec<&str>> = vec![
        vec!["phantom", "--config", cfg.to_str().unwrap(), "--out", "c"],
        vec!["pairs", "--set", "corpus=c", "--set", "params.patch_size=16", "--out", "p"],
        vec!["synth-train", "--set", "pairs=p", "--set", "held_out=p", "--set", "train.epochs=1",
             "--set", "train.net.patch_size=16", "--set", "train.net.base_channels=2", "--out", "g"],
        vec!["synth-sample", "--set", "pairs=p", "--set", "generator=g/final", "--set", "limit=2", "--out", "s"],
        vec!["implant", "--set", "corpus=c", "--set", "pairs=p", "--set", "generator=g/final", "--out", "a"],
        vec!["seg-train", "--set", "corpus=a", "--set", "train.epochs=1", "--set", "train.steps_per_epoch=2",
             "--set", "train.net.base_channels=2", "--out", "m"],
        vec!["seg-eval", "--set", "corpus=c", "--set", "model=m/final", "--out", "e"],
    ];
    for args in &steps {
        let out = lesionkit(args, d);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        let run = read_json(&d.join(args.last().unwrap()).join("run.json"));
        assert_eq!(run["status"], "ok");
        assert_eq!(run["subcommand"], args[0]);
    }
    assert!(d.join("s/sample_00001.pgm").exists());
    let manifest = read_json(&d.join("a/augment_manifest.json"));
    assert!(manifest["synthetic_total"].as_u64().unwrap() > 0);
    let eval = read_json(&d.join("e/eval.json"));
    let dice = eval["mean_dice"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&dice));
    let run = read_json(&d.join("e/run.json"));
    assert_eq!(run["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(run["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn failing_arm_gives_exit_3_and_keeps_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_experiment();
    cfg["arm_seg"] = json!({ "RealOnly": { "epochs": 1, "steps_per_epoch": 3, "batch_size": 2,
                                           "learning_rate": 1e300, "net": { "base_channels": 2 } } });
    let path = write_config(dir.path(), "x.json", &cfg);
    let out = lesionkit(&["experiment", "--config", path.to_str().unwrap(), "--out", "x"], dir.path());
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("error[partial]"));
    let report = read_json(&dir.path().join("x/report.json"));
    let arms = report["arms"].as_array().unwrap();
    let real = arms.iter().find(|a| a["arm"] == "RealOnly").unwrap();
    let comb = arms.iter().find(|a| a["arm"] == "CombinedProcedural").unwrap();
    assert!(real["runs"][0]["dice"].is_null());
    assert!(real["runs"][0]["error"].as_str().unwrap().contains("training aborted"));
    assert!(comb["runs"][0]["dice"].is_number());
    assert_eq!(read_json(&dir.path().join("x/run.json"))["status"], "partial");
    assert!(std::fs::read_to_string(dir.path().join("x/report.md")).unwrap().contains("failed"));
}

#[test]
fn report_rerenders_from_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "x.json", &tiny_experiment());
    let out = lesionkit(&["experiment", "--config", path.to_str().unwrap(), "--out", "x"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = lesionkit(&["report", "--set", "report=x", "--out", "r"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["report.md", "report.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("x").join(f)).unwrap(),
            std::fs::read(dir.path().join("r").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn from_run_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", &tiny_phantom());
    assert_eq!(code(&lesionkit(&["phantom", "--config", cfg.to_str().unwrap(), "--out", "c"], dir.path())), 0);
    let out = lesionkit(&["pairs", "--from-run", "c/run.json", "--out", "p"], dir.path());
    assert_eq!(code(&out), 2);
}
