use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurolesion"))
        .args(args)
        .env_remove("NEUROLESION_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn data_gen_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let out = cli(&["data", "gen", "--seed", "7", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("day,y1,y2,y3,y4,y5,target"));
    assert_eq!(lines.count(), 365);

    let again = dir.path().join("again.csv");
    cli(&["data", "gen", "--seed", "7", "--out", again.to_str().unwrap()]);
    assert_eq!(text, fs::read_to_string(&again).unwrap());
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&cli(&["run", "--scenario", "7", "--out", "x.json"])), 1);
    assert_eq!(code(&cli(&["run", "--scenario", "1"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(
        code(&cli(&["run", "--scenario", "1", "--seeds", "0", "--out", "x.json"])),
        1
    );
    assert_eq!(
        code(&cli(&[
            "run",
            "--scenario",
            "1",
            "--lesion-mode",
            "sever",
            "--out",
            "x.json"
        ])),
        1
    );
    assert_eq!(code(&cli(&["--help"])), 0);
    assert_eq!(code(&cli(&["--version"])), 0);
}

#[test]
fn bad_thread_count_exits_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_neurolesion"))
        .args(["config", "default"])
        .env("NEUROLESION_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("NEUROLESION_THREADS"));
}

#[test]
fn run_writes_report_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("s2.json");
    let out = cli(&[
        "run",
        "--scenario",
        "2",
        "--seeds",
        "2",
        "--epochs",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("scenario 2:"));
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(report["config"]["settings"]["train"]["epochs"], 3);
    let seeds_csv = fs::read_to_string(dir.path().join("nested").join("s2_seeds.csv")).unwrap();
    assert_eq!(seeds_csv.lines().count(), 3);
    assert!(dir.path().join("nested").join("s2_compensation.csv").exists());
}

#[test]
fn config_file_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["config", "default"]);
    assert_eq!(code(&out), 0);
    let mut settings: Value = serde_json::from_slice(&out.stdout).unwrap();
    settings["train"]["epochs"] = 2.into();
    settings["lesion"]["death_frac"] = 0.8.into();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, settings.to_string()).unwrap();
    let path = dir.path().join("r.json");
    let out = cli(&[
        "run",
        "--scenario",
        "3",
        "--seeds",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--no-freeze",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let s = &report["config"]["settings"];
    assert_eq!(s["train"]["epochs"], 2);
    assert_eq!(s["lesion"]["death_frac"], 0.8);
    assert_eq!(s["lesion"]["freeze"], false);

    fs::write(&cfg, "{not json").unwrap();
    let out = cli(&[
        "run",
        "--scenario",
        "3",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_neurolesion"))
        .args([
            "sweep",
            "--seeds",
            "2",
            "--epochs",
            "2",
            "--snn-epochs",
            "1",
            "--out",
            d,
        ])
        .env("NEUROLESION_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();

    let out = cli(&["report", "summarize", d]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);

    let missing = dir.path().join("missing");
    assert_eq!(code(&cli(&["report", "summarize", missing.to_str().unwrap()])), 1);
}
