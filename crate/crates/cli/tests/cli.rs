use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wsnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsnsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn short_scenario(dir: &Path) -> String {
    let path = dir.join("short.scn");
    fs::write(
        &path,
        "# quick run\nname = short\nsim_time_s = 20\nnodes = 30 # fewer nodes\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn print_defaults_lists_every_key() {
    let o = wsnsim(&["--print-defaults"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in [
        "nodes = 50",
        "region_m = 250",
        "radio.range_m = 35",
        "mac.queue_len = 100",
        "mode = hybrid",
    ] {
        assert!(text.lines().any(|l| l == key), "missing `{key}`");
    }
}

#[test]
fn single_run_writes_header_and_one_row() {
    let dir = TempDir::new().unwrap();
    let scn = short_scenario(dir.path());
    let o = wsnsim(&["--scenario", &scn, "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("scenario,seed,nodes,"));
    assert!(lines[1].starts_with("short,3,30,"));
    assert!(stderr(&o).contains("# override sim_time_s = 20"));
}

#[test]
fn sweep_emits_value_times_seed_rows_in_order() {
    let dir = TempDir::new().unwrap();
    let scn = short_scenario(dir.path());
    let out = dir.path().join("sweep.csv");
    let o = wsnsim(&[
        "--scenario",
        &scn,
        "--sweep",
        "offered_load=10,40",
        "--seeds",
        "1..3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["1", "2", "3", "1", "2", "3"]);
    let err = stderr(&o);
    assert!(err.contains("# sweep traffic.offered_load_kbps = 10,40"));
    assert!(err.contains("# summary traffic.offered_load_kbps"));
}

#[test]
fn parallel_and_sequential_sweeps_match_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let scn = short_scenario(dir.path());
    let run = |tag: &str, extra: &[&str]| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let trace = dir.path().join(format!("{tag}.log"));
        let mut args = vec![
            "--scenario",
            &scn,
            "--sweep",
            "nodes=20,30",
            "--seeds",
            "4..5",
            "--out",
            csv.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let o = wsnsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(csv).unwrap(), fs::read(trace).unwrap())
    };
    let par = run("par", &[]);
    let seq = run("seq", &["--sequential"]);
    assert_eq!(par, seq);
    assert!(String::from_utf8_lossy(&par.1).starts_with("# run scenario=short nodes=20 seed=4"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "nodes = 10\nradio.rang_m = 3\n").unwrap();
    let o = wsnsim(&["--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("radio.rang_m"), "{err}");

    assert_eq!(wsnsim(&["--scenario", "/nonexistent/x.scn"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["--mode", "flooding"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["--sweep", "nodes=-4"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["--seeds", "5..2"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["--seed", "1", "--seeds", "1..2"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let scn = short_scenario(dir.path());
    let o = wsnsim(&[
        "--scenario",
        &scn,
        "--out",
        dir.path().join("missing/dir.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_succeeds() {
    let o = wsnsim(&["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("--sweep"));
}
