use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinor(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinor"))
        .args(args)
        .current_dir(cwd)
        .env("SPINOR_THREADS", "1")
        .output()
        .expect("spawn spinor")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Toy preset with a short horizon writing into `out_dir`.
fn toy_config(dir: &Path, out_dir: &str, extra: &str) -> String {
    let o = spinor(&["presets", "toy"], dir);
    assert!(o.status.success());
    let text: String = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with("output_dir") && !l.starts_with("t_final") && !l.starts_with("snapshot_times"))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.join(format!("{out_dir}.cfg"));
    fs::write(
        &path,
        format!("{text}output_dir = {out_dir}\nt_final = 0.2\nsnapshot_times = 0.1\n{extra}"),
    )
    .unwrap();
    path.file_name().unwrap().to_str().unwrap().to_string()
}

#[test]
fn presets_list_both() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&spinor(&["presets"], dir.path()));
    assert!(out.contains("# preset: paper"));
    assert!(out.contains("schedule = paper-eq6"));
    assert!(out.contains("# preset: toy"));
    assert!(!spinor(&["presets", "nope"], dir.path()).status.success());
}

#[test]
fn run_writes_directory_and_analyze_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "out", "");
    let o = spinor(&["run", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "config.cfg",
        "timeseries.csv",
        "summary.txt",
        "run_info.txt",
        "snapshots.csv",
        "snapshot_0.1.csv",
        "snapshot_0.2.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join(".lock").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(stdout(&o).contains(&summary));

    let a = spinor(&["analyze", "out"], dir.path());
    assert!(a.status.success());
    assert_eq!(stdout(&a), summary);

    // a single snapshot is analyzable on its own
    let s = spinor(&["analyze", "out/snapshot_0.1.csv"], dir.path());
    assert!(s.status.success());
    let head = stdout(&s);
    let tau: f64 = head
        .lines()
        .next()
        .unwrap()
        .strip_prefix("tau = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((tau - 0.1).abs() < 1e-15, "{head}");

    // the echoed config runs again to byte-identical output
    let echo = fs::read_to_string(out.join("config.cfg"))
        .unwrap()
        .replace("output_dir = out", "output_dir = again");
    fs::write(dir.path().join("again.cfg"), echo).unwrap();
    assert!(spinor(&["run", "--config", "again.cfg"], dir.path()).status.success());
    assert_eq!(
        fs::read(out.join("timeseries.csv")).unwrap(),
        fs::read(dir.path().join("again/timeseries.csv")).unwrap()
    );
}

#[test]
fn dry_run_validates_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "dry", "");
    let o = spinor(&["run", "--dry-run", "--config", &cfg], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("2000 steps on 64 points"));
    assert!(!dir.path().join("dry").exists());
}

#[test]
fn config_errors_exit_one_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let good = toy_config(dir.path(), "good", "");
    let bad = toy_config(dir.path(), "bad", "etaa = 0.3\n");
    let o = spinor(&["run", "--config", &good, &bad], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("etaa"));
    assert!(!dir.path().join("good").exists());

    let zero = toy_config(dir.path(), "zero", "");
    let text = fs::read_to_string(dir.path().join(&zero))
        .unwrap()
        .replace("dt = 0.0001", "dt = 0");
    fs::write(dir.path().join(&zero), text).unwrap();
    assert_eq!(spinor(&["run", "--config", &zero], dir.path()).status.code(), Some(1));
}

#[test]
fn edge_leak_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "leak", "");
    let text = fs::read_to_string(dir.path().join(&cfg))
        .unwrap()
        .replace("z_min = -8.0", "z_min = -3.0")
        .replace("z_max = 8.0", "z_max = 3.0");
    fs::write(dir.path().join(&cfg), text).unwrap();
    let o = spinor(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("edge leak"));
}

#[test]
fn oracle_check_and_parallel_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let a = toy_config(dir.path(), "a", "");
    let b = toy_config(dir.path(), "b", "");
    let o = spinor(
        &["run", "--check-oracle", "--jobs", "2", "--config", &a, &b],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let gaps: Vec<f64> = text
        .lines()
        .filter_map(|l| l.strip_prefix("oracle L2 gap = "))
        .map(|g| g.parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 2);
    assert!(gaps.iter().all(|&g| g < 1e-6));
    assert!(fs::read_to_string(dir.path().join("a/run_info.txt"))
        .unwrap()
        .contains("oracle_l2_gap"));
    assert_eq!(
        fs::read(dir.path().join("a/timeseries.csv")).unwrap(),
        fs::read(dir.path().join("b/timeseries.csv")).unwrap()
    );
}

#[test]
fn missing_run_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinor(&["analyze", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
