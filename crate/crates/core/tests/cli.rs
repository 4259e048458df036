use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use mimo_pso::harness::{CONVERGENCE_HEADER, SWEEP_HEADER};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mimo-pso-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn mimo_pso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo-pso")).args(args).output().unwrap()
}

fn small(mode: &str, out: &PathBuf, extra: &[&str]) -> Output {
    let mut args = vec!["--mode", mode, "--swarm-size", "8", "--iters", "20", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mimo_pso(&args)
}

#[test]
fn single_iteration_trace_has_two_rows() {
    let out = scratch("one.csv");
    let run = mimo_pso(&["--mode", "convergence", "--swarm-size", "8", "--iters", "1", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CONVERGENCE_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("1,"));
}

#[test]
fn convergence_rerun_is_byte_identical() {
    let (a, b) = (scratch("conv-a.csv"), scratch("conv-b.csv"));
    assert!(small("convergence", &a, &["--seed", "9"]).status.success());
    assert!(small("convergence", &b, &["--seed", "9"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 22);
}

#[test]
fn sweep_is_reproducible() {
    let (a, b) = (scratch("sweep-a.csv"), scratch("sweep-b.csv"));
    let extra = ["--realizations", "1", "--snr-db", "0,10", "--weights", "0.1,0.2,0.7"];
    assert!(small("sweep", &a, &extra).status.success());
    assert!(small("sweep", &b, &extra).status.success());
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.as_bytes(), fs::read(&b).unwrap().as_slice());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",pso,") && lines[2].contains(",bd,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
}

#[test]
fn config_file_and_flag_override() {
    let cfg = scratch("run.cfg");
    let (a, b) = (scratch("cfg-a.csv"), scratch("cfg-b.csv"));
    fs::write(&cfg, "# small run\nmode = convergence\nswarm_size = 8\niters = 5\nseed = 3\n").unwrap();
    let run = mimo_pso(&["--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 7);
    let run = mimo_pso(&["--config", cfg.to_str().unwrap(), "--iters", "2", "--out", b.to_str().unwrap()]);
    assert!(run.status.success());
    assert_eq!(fs::read_to_string(&b).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes() {
    let out = scratch("codes.csv");
    assert_eq!(mimo_pso(&["--help"]).status.code(), Some(0));
    assert_eq!(small("sweep", &out, &["--users", "0"]).status.code(), Some(1));
    assert_eq!(small("sweep", &out, &["--streams", "3"]).status.code(), Some(1));
    assert_eq!(mimo_pso(&["--out", out.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(small("orbit", &out, &[]).status.code(), Some(1));
    assert_eq!(small("sweep", &out, &["--seed", "x"]).status.code(), Some(1));
    let missing = scratch("no-such-dir").join("x.csv");
    assert_eq!(small("convergence", &missing, &[]).status.code(), Some(3));
    let run = mimo_pso(&["--mode", "sweep", "--config", "/nonexistent/run.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
}
