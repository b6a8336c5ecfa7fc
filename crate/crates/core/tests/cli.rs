use std::path::Path;
use std::process::{Command, Output};

use epon_hssr::metrics::read_csv;

fn epon_sim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epon-sim")).current_dir(dir).args(args).output().expect("spawn")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_prints_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epon_sim(tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage:"), "{}", stderr(&o));
}

#[test]
fn guard_below_floor_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epon_sim(tmp.path(), &["--defaults", "--guard-time", "5ns"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("guard_time below 20ns"), "{}", stderr(&o));
    assert!(!tmp.path().join("results.csv").exists());
}

#[test]
fn config_file_in_working_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("epon-sim.json"),
        r#"{"network": {"n_onus": 4}, "offered_load": 0.3, "sim_duration": "50ms"}"#,
    )
    .unwrap();
    let o = epon_sim(tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.n_onus == 4 && r.offered_load == 0.3));
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"network": {"n_onuz": 4}}"#).unwrap();
    let o = epon_sim(tmp.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_onuz"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_csv_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epon_sim(
        tmp.path(),
        &["--defaults", "--duration", "100ms", "--sweep", "offered_load=0.2:0.4:0.1", "--sweep", "scheduler=hssr,ss", "--out", "out"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    assert_eq!(read_csv(&out.join("results.csv")).unwrap().len(), 12);
    let fig5 = std::fs::read_to_string(out.join("fig5_delay_vs_load.dat")).unwrap();
    assert_eq!(fig5.lines().count(), 4);
    for name in ["fig6_pdv_vs_load.dat", "fig7_be_penalty.dat"] {
        assert!(out.join(name).exists());
    }

    let again = epon_sim(tmp.path(), &["--figures-from", "out/results.csv", "--out", "again"]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(std::fs::read_to_string(tmp.path().join("again/fig5_delay_vs_load.dat")).unwrap(), fig5);
}

#[test]
fn figures_need_both_schedulers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epon_sim(tmp.path(), &["--defaults", "--duration", "50ms", "--sweep", "offered_load=0.2,0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = epon_sim(tmp.path(), &["--figures-from", "results.csv"]);
    assert_eq!(f.status.code(), Some(1));
    assert!(stderr(&f).contains("scheduler"), "{}", stderr(&f));

    std::fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let e = epon_sim(tmp.path(), &["--figures-from", "empty.csv"]);
    assert_eq!(e.status.code(), Some(1));
}

#[test]
fn trace_file_has_four_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epon_sim(tmp.path(), &["--defaults", "--duration", "20ms", "--trace", "trace.txt"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("trace.txt")).unwrap();
    assert!(text.lines().count() > 100);
    assert!(text.lines().all(|l| l.splitn(4, ',').count() == 4));
    assert!(text.lines().any(|l| l.contains(",Tx,")));
    assert!(text.lines().last().unwrap().contains("SimEnd"));
}
