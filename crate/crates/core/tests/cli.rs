use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn trimodal(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimodal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("BIOVITA_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = trimodal(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(a.path(), &["gen-data", "--species", "50", "--seed", "1"]);
    ok(b.path(), &["gen-data", "--species", "50", "--seed", "1"]);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);
}

#[test]
fn gen_data_reports_unseen_count() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(
        dir.path(),
        &["gen-data", "--species", "50", "--unseen-frac", "0.1"],
    );
    assert!(stdout.contains("unseen 5"), "{stdout}");
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("corpus.json")).unwrap()).unwrap();
    assert_eq!(summary["format"], "bvcorpus1");
    assert_eq!(summary["unseen"], 5);
    assert_eq!(summary["config"]["species"], 50);
}

#[test]
fn single_species_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let o = trimodal(dir.path(), &["gen-data", "--species", "1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn stage_two_needs_stage_one_checkpoint() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-data", "--species", "20"]);
    let o = trimodal(dir.path(), &["train", "--stage", "2"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage 1"), "{err}");
}

#[test]
fn unseen_bench_without_unseen_species_is_infeasible() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["gen-data", "--species", "30", "--unseen-frac", "0"],
    );
    ok(dir.path(), &["train", "--stage", "0", "--epochs", "1"]);
    let o = trimodal(
        dir.path(),
        &[
            "bench",
            "--subset",
            "unseen",
            "--k",
            "10",
            "--tasks-per-scenario",
            "5",
        ],
    );
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unseen"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&trimodal(dir.path(), &["frobnicate"])), 1);
    assert_eq!(
        code(&trimodal(dir.path(), &["gen-data", "--prompt", "nope"])),
        1
    );
    assert_eq!(
        code(&trimodal(dir.path(), &["gen-data", "--unseen-frac", "1.5"])),
        1
    );
    // nothing generated yet
    assert_eq!(code(&trimodal(dir.path(), &["train"])), 2);
    ok(dir.path(), &["gen-data", "--species", "20"]);
    assert_eq!(code(&trimodal(dir.path(), &["bench"])), 2);
    assert_eq!(code(&trimodal(dir.path(), &["--help"])), 0);
}

#[test]
fn full_pipeline_reruns_are_identical() {
    let run = |dir: &Path| {
        let common = [
            "--species",
            "220",
            "--unseen-frac",
            "0.5",
            "--seed",
            "3",
            "--lr",
            "0.001",
        ];
        let with = |cmd: &str, extra: &[&str]| {
            let mut args = vec![cmd];
            args.extend_from_slice(&common);
            args.extend_from_slice(extra);
            ok(dir, &args)
        };
        with("gen-data", &[]);
        with("train", &[]);
        with("bench", &["--level", "species"]);
        with("probe", &[]);
        with("report", &[])
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert_eq!(ra, rb);
    assert!(ra.contains("Average"), "{ra}");
    for name in [
        "metrics.json",
        "metrics.csv",
        "scenarios.json",
        "stage2.ckpt",
        "loss_stage1.csv",
        "traits_audio.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["format"], "bvmr1");
    assert_eq!(metrics["config"]["seed"], 3);
    let seen = metrics["metrics"]["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["level"] == "species" && b["subset"] == "seen")
        .unwrap()["average"]["top1"]
        .as_f64()
        .unwrap();
    assert!(seen >= 0.3, "seen top1 {seen}");
}
