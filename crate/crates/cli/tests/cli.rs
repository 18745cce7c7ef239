//! The `sc3sim` binary: subcommands, exit codes and output stability.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sc3sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sc3sim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn peak_prints_the_rounded_table() {
    let o = sc3sim(&["peak"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for needle in ["19.7 TFlops", "39.3 TFlops", "78.6 TFlops", "1.2 TB/s", "51.2 GB/s"] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn peak_system_arithmetic() {
    let o = sc3sim(&["peak", "--nodes", "50", "--target-rpeak-tflops", "2353.85", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["system"]["total_pes"], 819_200);
    let mhz = v["system"]["implied_frequency_hz"].as_f64().unwrap() / 1e6;
    assert!((mhz - 718.0).abs() <= 1.0);
}

#[test]
fn missing_program_is_an_input_error() {
    let o = sc3sim(&["run", "--program", "/nonexistent/prog.s"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[input]:"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = sc3sim(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"), "{}", stderr(&o));
}

#[test]
fn unknown_preset_is_an_input_error() {
    assert_eq!(sc3sim(&["peak", "--config", "no-such-chip"]).status.code(), Some(3));
}

#[test]
fn spinning_program_trips_the_watchdog() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("spin.s");
    std::fs::write(&src, "spin: jal r0, spin\n").unwrap();
    let o = sc3sim(&["run", "--program", path_str(&src), "--watchdog-cycles", "500"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[deadlock]:"));
}

#[test]
fn corrupted_manifest_digest_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(repo("configs/suite.json")).unwrap()).unwrap();
    manifest["cases"][0]["expected_digest"] = serde_json::json!("00".repeat(32));
    let path = dir.path().join("suite.json");
    std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
    let name = manifest["cases"][0]["name"].as_str().unwrap().to_owned();
    let o = sc3sim(&["run", "--kernel", &name, "--manifest", path_str(&path)]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("check: FAIL"));
}

#[test]
fn checked_in_suite_passes() {
    let o = sc3sim(&["suite", "--config", path_str(&repo("configs/city1.json")), "--manifest", path_str(&repo("configs/suite.json")), "--jobs", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("11 of 11 cases passed"));
}

#[test]
fn kernel_run_reports_its_check() {
    let o = sc3sim(&["run", "--kernel", "dgemm-32", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("check: PASS dgemm-32"));
    assert!(stdout(&o).lines().last().unwrap().starts_with("total,"));
}

#[test]
fn json_output_is_identical_across_repeats_and_worker_counts() {
    let run = |workers: &str| {
        let o = sc3sim(&["run", "--kernel", "vecadd-dual-1024", "--format", "json", "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        o.stdout
    };
    let first = run("1");
    assert_eq!(run("1"), first);
    assert_eq!(run("3"), first);
    assert_eq!(run("8"), first);
}

#[test]
fn extrapolated_run_is_marked_model_derived() {
    let o = sc3sim(&["run", "--kernel", "vecadd-dual-1024", "--format", "json", "--extrapolate-to", "sc3-default"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["stats"]["model_derived"], true);
    assert_eq!(v["stats"]["total_pes"], 4096);
}

#[test]
fn calibrate_reports_the_target_power() {
    let o = sc3sim(&["calibrate", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let watts = v["report"]["watts"].as_f64().unwrap();
    let target = v["target"]["watts"].as_f64().unwrap();
    assert!((watts - target).abs() <= 0.01 * target);
}

#[test]
fn assemble_then_disassemble_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("vecadd.bin");
    let listing = dir.path().join("vecadd.s");
    let src = repo("kernels/vecadd-dual.s");
    assert_eq!(sc3sim(&["asm", path_str(&src), "-o", path_str(&image)]).status.code(), Some(0));
    assert_eq!(sc3sim(&["asm", "-d", path_str(&image), "-o", path_str(&listing)]).status.code(), Some(0));
    let image2 = dir.path().join("again.bin");
    assert_eq!(sc3sim(&["asm", path_str(&listing), "-o", path_str(&image2)]).status.code(), Some(0));
    assert_eq!(std::fs::read(&image).unwrap(), std::fs::read(&image2).unwrap());
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 5] = [
        ("asm", &["--disassemble", "--output"]),
        (
            "run",
            &[
                "--config", "--program", "--kernel", "--kernel-spec", "--threads-per-pe", "--manifest", "--seed",
                "--workers", "--trace", "--extrapolate-to", "--format", "--output", "--frequency-hz",
                "--watchdog-cycles", "--line-size", "--associativity",
            ],
        ),
        ("peak", &["--config", "--nodes", "--chips-per-node", "--target-rpeak-tflops", "--intensity", "--format"]),
        ("suite", &["--config", "--manifest", "--seed", "--workers", "--jobs", "--format"]),
        ("calibrate", &["--config", "--format"]),
    ];
    for (cmd, flags) in cases {
        let o = sc3sim(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
