use std::path::Path;
use std::process::{Command, Output};

fn doorcal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doorcal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = doorcal(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

/// demo, a 300 s calibration walk and a test walk.
fn prepared(seed: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--quiet", "demo", "--out-dir", "."]);
    ok(
        d,
        &[
            "-q",
            "--seed",
            seed,
            "simulate",
            "--scenario",
            "apartment.toml",
            "--duration",
            "300",
            "--out",
            "cal.csv",
        ],
    );
    ok(
        d,
        &[
            "-q",
            "--seed",
            seed,
            "simulate",
            "--scenario",
            "apartment.toml",
            "--path",
            "test_path.csv",
            "--out",
            "test.csv",
            "--poses",
            "poses.csv",
        ],
    );
    dir
}

const PIPELINE_OUTPUTS: [&str; 8] = [
    "cal.csv",
    "test.csv",
    "poses.csv",
    "pairs.txt",
    "costs.csv",
    "fixes.csv",
    "summary.csv",
    "ecdf.csv",
];

fn pipeline(seed: &str) -> tempfile::TempDir {
    let dir = prepared(seed);
    let d = dir.path();
    ok(
        d,
        &[
            "-q",
            "calibrate",
            "--scenario",
            "apartment.toml",
            "--toa",
            "cal.csv",
            "--out",
            "pairs.txt",
            "--report",
            "costs.csv",
            "--sizes",
            "4",
        ],
    );
    ok(
        d,
        &[
            "-q",
            "track",
            "--scenario",
            "apartment.toml",
            "--toa",
            "test.csv",
            "--pairs",
            "pairs.txt",
            "--out",
            "fixes.csv",
        ],
    );
    ok(
        d,
        &[
            "-q",
            "evaluate",
            "--fixes",
            "fixes.csv",
            "--reference",
            "test_path.csv",
            "--out",
            "summary.csv",
            "--ecdf",
            "ecdf.csv",
        ],
    );
    dir
}

#[test]
fn version_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--version"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        format!("doorcal {}\n", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn help_lists_every_command_and_common_flag() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(ok(dir.path(), &["--help"]).stdout).unwrap();
    for word in [
        "genmap",
        "detect",
        "simulate",
        "calibrate",
        "track",
        "evaluate",
        "--seed",
        "--config",
        "--quiet",
    ] {
        assert!(text.contains(word), "{word} missing from help");
    }
    let text = String::from_utf8(ok(dir.path(), &["calibrate", "--help"]).stdout).unwrap();
    assert!(text.contains("--sizes") && text.contains("--search"));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&doorcal(d, &["frobnicate"])), 1);
    assert_eq!(code(&doorcal(d, &["track", "--scenario", "s.toml"])), 1);
    assert_eq!(
        code(&doorcal(d, &["--seed", "minus-one", "genmap", "--out", "m.pgm"])),
        1
    );
    ok(d, &["-q", "demo", "--out-dir", "."]);
    assert_eq!(
        code(&doorcal(
            d,
            &["simulate", "--scenario", "apartment.toml", "--out", "x.csv"]
        )),
        1
    );
    ok(
        d,
        &[
            "-q",
            "simulate",
            "--scenario",
            "apartment.toml",
            "--path",
            "test_path.csv",
            "--out",
            "t.csv",
        ],
    );
    let out = doorcal(
        d,
        &[
            "calibrate",
            "--scenario",
            "apartment.toml",
            "--toa",
            "t.csv",
            "--out",
            "p.txt",
            "--report",
            "c.csv",
            "--sizes",
            "16",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&doorcal(d, &["detect", "--grid", "missing.pgm", "--out", "doors.toml"])),
        2
    );
    ok(d, &["-q", "demo", "--out-dir", "."]);
    std::fs::write(d.join("bad.csv"), "t,anchor_id,toa_s\n0,1,zzz\n").unwrap();
    let out = doorcal(
        d,
        &[
            "track",
            "--scenario",
            "apartment.toml",
            "--toa",
            "bad.csv",
            "--pairs",
            "p.txt",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    std::fs::write(d.join("cfg.toml"), "[ekf]\nnot_a_field = 1\n").unwrap();
    assert_eq!(
        code(&doorcal(d, &["--config", "cfg.toml", "genmap", "--out", "m.pgm"])),
        2
    );
}

#[test]
fn calibration_without_crossings_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["-q", "demo", "--out-dir", "."]);
    // A short back-and-forth inside room 1 never reaches a door.
    std::fs::write(d.join("still.csv"), "x,y\n1,1\n2,1\n1,1\n").unwrap();
    ok(
        d,
        &[
            "-q",
            "simulate",
            "--scenario",
            "apartment.toml",
            "--path",
            "still.csv",
            "--out",
            "s.csv",
        ],
    );
    let out = doorcal(
        d,
        &[
            "calibrate",
            "--scenario",
            "apartment.toml",
            "--toa",
            "s.csv",
            "--out",
            "p.txt",
            "--report",
            "c.csv",
            "--sizes",
            "4",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn demo_pipeline_calibrates_eight_keys_and_is_reproducible() {
    let a = pipeline("21");
    let table = String::from_utf8(read(a.path(), "pairs.txt")).unwrap();
    let keys = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("fallback"))
        .count();
    assert_eq!(keys, 8, "{table}");
    let summary = String::from_utf8(read(a.path(), "summary.csv")).unwrap();
    assert!(summary.starts_with("run,n,median_m,mean_m,p90_m\nfixes,"));

    let b = pipeline("21");
    for name in PIPELINE_OUTPUTS {
        assert_eq!(
            read(a.path(), name),
            read(b.path(), name),
            "{name} differs between runs"
        );
    }
    let c = prepared("22");
    assert_ne!(read(a.path(), "cal.csv"), read(c.path(), "cal.csv"));
}

#[test]
fn all_pairs_size_reproduces_the_fallback() {
    let dir = prepared("5");
    let d = dir.path();
    ok(
        d,
        &[
            "-q",
            "calibrate",
            "--scenario",
            "apartment.toml",
            "--toa",
            "cal.csv",
            "--out",
            "pairs.txt",
            "--report",
            "costs.csv",
            "--sizes",
            "15",
        ],
    );
    let table = String::from_utf8(read(d, "pairs.txt")).unwrap();
    let fallback = table.lines().find_map(|l| l.strip_prefix("fallback : ")).unwrap();
    assert_eq!(fallback.matches('(').count(), 15);
    for line in table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("fallback"))
    {
        assert_eq!(line.split_once(" : ").unwrap().1, fallback);
    }
}

#[test]
fn inputs_are_not_modified() {
    let dir = prepared("9");
    let d = dir.path();
    let before: Vec<Vec<u8>> = ["apartment.toml", "cal.csv", "test_path.csv"]
        .iter()
        .map(|n| read(d, n))
        .collect();
    ok(
        d,
        &[
            "-q",
            "calibrate",
            "--scenario",
            "apartment.toml",
            "--toa",
            "cal.csv",
            "--out",
            "pairs.txt",
            "--report",
            "costs.csv",
            "--sizes",
            "4",
            "--search",
            "greedy",
        ],
    );
    let after: Vec<Vec<u8>> = ["apartment.toml", "cal.csv", "test_path.csv"]
        .iter()
        .map(|n| read(d, n))
        .collect();
    assert_eq!(before, after);
}

#[test]
fn generated_maps_round_trip_through_detection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "-q",
            "--seed",
            "4",
            "genmap",
            "--out",
            "map.pgm",
            "--truth",
            "truth.toml",
        ],
    );
    ok(d, &["-q", "detect", "--grid", "map.pgm", "--out", "doors.toml"]);
    let truth = String::from_utf8(read(d, "truth.toml")).unwrap();
    let found = String::from_utf8(read(d, "doors.toml")).unwrap();
    assert!(truth.contains("[[doors]]"));
    assert_eq!(truth.matches("[[doors]]").count(), found.matches("[[doors]]").count());

    ok(
        d,
        &["-q", "detect", "--grid", "map.pgm", "--out", "one.toml", "--keep", "1"],
    );
    assert_eq!(
        String::from_utf8(read(d, "one.toml"))
            .unwrap()
            .matches("[[doors]]")
            .count(),
        1
    );
    assert_eq!(
        code(&doorcal(
            d,
            &["detect", "--grid", "map.pgm", "--out", "x.toml", "--keep", "99"]
        )),
        1
    );

    ok(d, &["-q", "--seed", "4", "genmap", "--out", "again.pgm"]);
    assert_eq!(read(d, "map.pgm"), read(d, "again.pgm"));
    assert_eq!(read(d, "map.pgm.toml"), read(d, "again.pgm.toml"));
}

#[test]
fn config_overrides_change_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["-q", "demo", "--out-dir", "."]);
    std::fs::write(
        d.join("cfg.toml"),
        "[simulation]\ntoa_noise_sigma = 0.0\n[walk]\ndt = 0.2\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "-q",
            "simulate",
            "--scenario",
            "apartment.toml",
            "--path",
            "test_path.csv",
            "--out",
            "a.csv",
        ],
    );
    ok(
        d,
        &[
            "-q",
            "--config",
            "cfg.toml",
            "simulate",
            "--scenario",
            "apartment.toml",
            "--path",
            "test_path.csv",
            "--out",
            "b.csv",
        ],
    );
    let rows = |n: &str| String::from_utf8(read(d, n)).unwrap().lines().count();
    assert!(rows("b.csv") < rows("a.csv"));
}

#[test]
fn quiet_silences_progress() {
    let dir = tempfile::tempdir().unwrap();
    let loud = ok(dir.path(), &["demo", "--out-dir", "."]);
    assert!(!loud.stderr.is_empty());
    let quiet = ok(dir.path(), &["--quiet", "demo", "--out-dir", "."]);
    assert!(quiet.stderr.is_empty() && quiet.stdout.is_empty());
}
