use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rotspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn linecalc_reports_zero_field_position() {
    let out = rotspec(&["linecalc", "--b-field", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("line,"));
    assert!(text.contains("-6.617000"));
}

#[test]
fn linecalc_flags_list_entries_at_one_gauss() {
    let out = rotspec(&["linecalc", "--b-field", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let targeted: Vec<&str> = text.lines().filter(|l| l.contains(",true,")).collect();
    assert!(!targeted.is_empty());
    assert!(targeted.iter().any(|l| l.contains("A[")));
}

#[test]
fn default_config_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotspec(&["default-config", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let cfg = dir.path().join("rotspec.toml");
    assert!(cfg.exists());
    let out = rotspec(&["linecalc", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_with_one() {
    assert_eq!(rotspec(&["simulate", "--method", "III"]).status.code(), Some(1));
    assert_eq!(rotspec(&["simulate", "--list", "nope", "--reps", "1"]).status.code(), Some(1));
    assert_eq!(rotspec(&["nonsense"]).status.code(), Some(1));
    assert_eq!(rotspec(&["simulate", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(rotspec(&["selftest", "--workers", "0"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 3\n").unwrap();
    assert_eq!(rotspec(&["linecalc", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&bad, "[ions]\nmolecule_count = 0\n").unwrap();
    assert_eq!(rotspec(&["linecalc", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(rotspec(&["linecalc", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(rotspec(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path, workers: &'static str| {
        vec![
            "simulate".to_string(),
            "--method".into(),
            "II".into(),
            "--list".into(),
            "A".into(),
            "--reps".into(),
            "3".into(),
            "--seed".into(),
            "77".into(),
            "--workers".into(),
            workers.into(),
            "--out".into(),
            dir.to_str().unwrap().into(),
        ]
    };
    for (dir, w) in [(a.path(), "1"), (b.path(), "3")] {
        let argv = args(dir, w);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = rotspec(&argv);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = read_dir_sorted(a.path());
    let fb = read_dir_sorted(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "average_A.csv",
            "fits_A.csv",
            "summary_A.json",
            "timeline_A.json",
            "traces_A.csv",
            "trajectory_A.csv"
        ]
    );
    assert_eq!(fa, fb);
}

#[test]
fn spectrum_writes_one_row_per_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotspec(&[
        "spectrum",
        "--method",
        "I",
        "--list",
        "A',detuned500",
        "--reps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "list,method,mean_signal,stddev,n_reps");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("A',I,"));
    let bg: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(bg[0], "detuned500");
    assert!((bg[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let plot = fs::read_to_string(dir.path().join("spectrum_plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 3);
}
