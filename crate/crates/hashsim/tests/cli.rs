//! End-to-end checks of the command-line surface: flags, outputs, exit
//! codes, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hashsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hashsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hashsim-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn simulate_writes_outputs_and_reruns_identically() {
    let d1 = tmp_dir("sim1");
    let d2 = tmp_dir("sim2");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--n".into(),
            "4".into(),
            "--t".into(),
            "1".into(),
            "--scheduler".into(),
            "random".into(),
            "--seed".into(),
            "7".into(),
            "--max-steps".into(),
            "20000".into(),
            "--out".into(),
            out.display().to_string(),
            "--dot".into(),
        ]
    };
    let run1 = Command::new(env!("CARGO_BIN_EXE_hashsim"))
        .args(args(&d1))
        .output()
        .unwrap();
    assert!(
        run1.status.success(),
        "{}",
        String::from_utf8_lossy(&run1.stderr)
    );
    let run2 = Command::new(env!("CARGO_BIN_EXE_hashsim"))
        .args(args(&d2))
        .output()
        .unwrap();
    assert!(run2.status.success());
    // Byte-identical outputs across reruns with the same flags and seed.
    assert_eq!(read(&d1.join("trace.jsonl")), read(&d2.join("trace.jsonl")));
    assert_eq!(read(&d1.join("metrics.csv")), read(&d2.join("metrics.csv")));
    let metrics = read(&d1.join("metrics.csv"));
    assert!(metrics.starts_with("seed,n,t,steps,committedTx,maxRound\n"));
    assert!(metrics.lines().nth(1).unwrap().starts_with("7,4,1,"));
    // DOT export exists for every party and carries the styling markers.
    for p in 0..4 {
        let dot = read(&d1.join("graphs").join(format!("party_{p}.dot")));
        assert!(dot.contains("digraph"));
        assert!(dot.contains("style=dashed"));
    }
}

#[test]
fn check_accepts_own_trace_and_rejects_mutations() {
    let dir = tmp_dir("check");
    let out = hashsim(&[
        "simulate",
        "--n",
        "4",
        "--seed",
        "3",
        "--max-steps",
        "20000",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let trace_path = dir.join("trace.jsonl");
    let ok = hashsim(&["check", "--trace", trace_path.to_str().unwrap()]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    // Flip one recorded fame value: the verifier must reject it.
    let text = read(&trace_path);
    assert!(text.contains("\"fame\":\"famous\""));
    let mutated = text.replacen("\"fame\":\"famous\"", "\"fame\":\"not-famous\"", 1);
    let bad_path = dir.join("mutated.jsonl");
    std::fs::write(&bad_path, mutated).unwrap();
    let bad = hashsim(&["check", "--trace", bad_path.to_str().unwrap()]);
    assert_eq!(
        bad.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&bad.stderr)
    );

    // A tampered event payload breaks the recorded digest.
    let line = text
        .lines()
        .find(|l| l.contains("\"kind\":\"Created\"") && l.contains("\"timestamp\":0"))
        .unwrap();
    let tampered_line = line.replace("\"timestamp\":0", "\"timestamp\":9");
    let tampered = text.replace(line, &tampered_line);
    let tampered_path = dir.join("tampered.jsonl");
    std::fs::write(&tampered_path, tampered).unwrap();
    let bad2 = hashsim(&["check", "--trace", tampered_path.to_str().unwrap()]);
    assert_eq!(bad2.status.code(), Some(2));

    // An empty trace verifies vacuously.
    let empty_path = dir.join("empty.jsonl");
    std::fs::write(&empty_path, "").unwrap();
    let empty = hashsim(&["check", "--trace", empty_path.to_str().unwrap()]);
    assert!(empty.status.success());
}

#[test]
fn attack_runs_and_small_n_is_refused() {
    let dir = tmp_dir("attack");
    let out = hashsim(&[
        "attack",
        "--n",
        "7",
        "--seed",
        "11",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = read(&dir.join("metrics.csv"));
    assert!(metrics.starts_with(
        "seed,n,c,target,roundsElapsed,coinRoundsElapsed,decidedAt,supermajorityRound,coinYesCounts\n"
    ));
    let row = metrics.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "11");
    assert!(
        cols[5].parse::<u32>().unwrap() >= 1,
        "coinRoundsElapsed >= 1"
    );
    // The attack trace verifies like any other.
    let check = hashsim(&[
        "check",
        "--trace",
        dir.join("trace.jsonl").to_str().unwrap(),
    ]);
    assert!(check.status.success());

    let refused = hashsim(&[
        "attack",
        "--n",
        "6",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(refused.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&refused.stderr);
    assert!(
        msg.contains("n >= 7"),
        "refusal must cite the n >= 7 requirement: {msg}"
    );
}

#[test]
fn corruption_bound_is_rejected() {
    let dir = tmp_dir("bound");
    let out = hashsim(&[
        "simulate",
        "--n",
        "3",
        "--t",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corruption bound"));
}

#[test]
fn attack_campaign_writes_summary() {
    let dir = tmp_dir("campaign");
    let out = hashsim(&[
        "attack",
        "--n",
        "7",
        "--seeds",
        "1..30",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let metrics = read(&dir.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 31, "header plus one row per seed");
    let summary = read(&dir.join("coin_summary.csv"));
    assert!(
        summary.starts_with("n,c,runs,coinRounds,supermajorityCoinRounds,empiricalRate,exactRate,")
    );
    assert!(
        summary.contains("0.453125"),
        "exact rate column carries 58/128"
    );
}

#[test]
fn probe_reports_exact_values() {
    let dir = tmp_dir("probe");
    let out = hashsim(&[
        "probe",
        "--n-range",
        "7..13",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("58/128"));
    assert!(stdout.contains("2.206897"));
    let csv = read(&dir.join("probe.csv"));
    let row7: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row7[..3], &["7", "58", "128"]);
    let row13 = csv.lines().find(|l| l.starts_with("13,")).unwrap();
    assert!(row13.starts_with("13,2186,8192,"));
    // e^(-7/18) = 0.678...
    assert!(row7[5].starts_with("0.677"));
    // Tail-bound chain: exactProb <= 2 * bound, i.e. expected coin rounds
    // are at least e^(n/18)/2, in every row.
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let exact: f64 = cols[3].parse().unwrap();
        let expected_rounds: f64 = cols[4].parse().unwrap();
        let bound: f64 = cols[5].parse().unwrap();
        assert!(exact <= 2.0 * bound + 1e-9, "row {line}");
        assert!(expected_rounds >= 1.0 / (2.0 * bound) - 1e-9, "row {line}");
    }
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let dir = tmp_dir("config");
    let cfg_path = dir.join("run.json");
    std::fs::write(
        &cfg_path,
        r#"{"n":4,"seed":5,"coin_period":10,"max_steps":20000}"#,
    )
    .unwrap();
    let out = hashsim(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = read(&dir.join("metrics.csv"));
    // The explicit --seed flag wins over the file's seed.
    assert!(metrics.lines().nth(1).unwrap().starts_with("9,4,0,"));
}
