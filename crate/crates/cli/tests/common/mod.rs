#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn lesionkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lesionkit"))
        .args(args)
        .arg("-q")
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

pub fn tiny_phantom() -> Value {
    json!({ "n_slices": 8, "phantom": { "image_size": 32, "lesion_radius_px": [2.0, 4.0], "seed": 4 } })
}

/// A two-arm experiment that finishes in seconds.
pub fn tiny_experiment() -> Value {
    json!({
        "n_slices": 10,
        "phantom": { "image_size": 32, "lesion_radius_px": [2.0, 4.0], "lesions_per_slice": [1, 2] },
        "arms": ["RealOnly", "CombinedProcedural"],
        "seeds": [0],
        "pairs": { "patch_size": 16 },
        "synth": { "epochs": 1, "net": { "patch_size": 16, "base_channels": 2 } },
        "seg": { "epochs": 1, "steps_per_epoch": 3, "batch_size": 2, "net": { "base_channels": 2 } }
    })
}

/// Every file under `dir` except `run.json`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "run.json" {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Regenerate `first` from its run.json into `second` and compare files.
pub fn assert_replays_identically(sub: &str, cwd: &Path, first: &str, second: &str) {
    let run = format!("{first}/run.json");
    let out = lesionkit(&[sub, "--from-run", &run, "--out", second], cwd);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = snapshot(&cwd.join(first));
    let b = snapshot(&cwd.join(second));
    assert!(!a.is_empty());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{sub}: {k} differs after replay");
    }
}
