use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn evcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcomp"))
        .args(args)
        .output()
        .expect("failed to run evcomp")
}

fn ok(args: &[&str]) -> String {
    let out = evcomp(args);
    assert!(
        out.status.success(),
        "evcomp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn records(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn synth(dir: &TempDir, name: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let ev = p(dir, &format!("{name}.events"));
    let gt = p(dir, &format!("{name}.gt"));
    let mut args = vec!["synth", "-o", s(&ev), "--gt", s(&gt)];
    args.extend_from_slice(extra);
    ok(&args);
    (ev, gt)
}

fn success_rate(table: &str) -> f64 {
    let last = table.lines().last().unwrap();
    last.split_whitespace()
        .last()
        .unwrap()
        .trim_end_matches('%')
        .parse()
        .unwrap()
}

#[test]
fn synth_track_eval_on_clean_scene() {
    let dir = TempDir::new().unwrap();
    let (ev, gt) = synth(&dir, "clean", &["--seed", "1"]);
    let tr = p(&dir, "clean.tracks");
    ok(&["track", "-i", s(&ev), "-o", s(&tr)]);
    let table = ok(&["eval", "--gt", s(&gt), "--detections", s(&tr)]);
    let rate = success_rate(&table);
    assert!(rate >= 90.0, "success rate {rate}\n{table}");
}

#[test]
fn single_object_keeps_one_track_id() {
    let dir = TempDir::new().unwrap();
    let (ev, _) = synth(
        &dir,
        "one",
        &["--seed", "4", "--min-objects", "1", "--max-objects", "1"],
    );
    let tr = p(&dir, "one.tracks");
    ok(&["track", "-i", s(&ev), "-o", s(&tr)]);
    let recs = records(&tr);
    assert!(recs.len() >= 2, "too few records: {recs:?}");
    let ids: BTreeSet<u64> = recs.iter().map(|r| r[1] as u64).collect();
    assert_eq!(ids.len(), 1, "ids {ids:?}");
}

#[test]
fn no_object_scene_gives_no_tracks() {
    let dir = TempDir::new().unwrap();
    let (ev, _) = synth(
        &dir,
        "empty",
        &["--seed", "2", "--min-objects", "0", "--max-objects", "0"],
    );
    let tr = p(&dir, "empty.tracks");
    ok(&["track", "-i", s(&ev), "-o", s(&tr)]);
    assert!(records(&tr).is_empty());
    let text = fs::read_to_string(&tr).unwrap();
    assert!(text.lines().all(|l| l.starts_with('#')));
}

#[test]
fn eval_perfect_and_empty_detections() {
    let dir = TempDir::new().unwrap();
    let (_, gt) = synth(&dir, "e", &["--seed", "3", "--slices", "3"]);
    let perfect = ok(&["eval", "--gt", s(&gt), "--detections", s(&gt)]);
    assert!(perfect.lines().last().unwrap().ends_with("100.00%"), "{perfect}");
    let empty = p(&dir, "none.txt");
    fs::write(&empty, "").unwrap();
    let none = ok(&["eval", "--gt", s(&gt), "--detections", s(&empty)]);
    assert!(none.lines().last().unwrap().ends_with("0.00%"), "{none}");
    assert_eq!(success_rate(&none), 0.0);
}

#[test]
fn empty_event_file_fails() {
    let dir = TempDir::new().unwrap();
    let ev = p(&dir, "empty.events");
    fs::write(&ev, "# sensor 240 180\n").unwrap();
    for cmd in ["compensate", "track", "detect"] {
        let out = evcomp(&[cmd, "-i", s(&ev)]);
        assert!(!out.status.success(), "{cmd} accepted an empty file");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn malformed_event_file_reports_line() {
    let dir = TempDir::new().unwrap();
    let ev = p(&dir, "bad.events");
    fs::write(&ev, "# sensor 10 10\n0.1 1 1 1\n0.2 x 1 0\n").unwrap();
    let out = evcomp(&["compensate", "-i", s(&ev)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn render_writes_one_pair_per_slice() {
    let dir = TempDir::new().unwrap();
    let (ev, _) = synth(&dir, "r", &["--seed", "5", "--slices", "4"]);
    let out = p(&dir, "r.txt");
    let img = p(&dir, "img");
    ok(&["compensate", "-i", s(&ev), "-o", s(&out), "--render", s(&img)]);
    let slices = records(&out).len();
    assert_eq!(slices, 4);
    let names: Vec<String> = fs::read_dir(&img)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 2 * slices);
    assert_eq!(names.iter().filter(|n| n.ends_with("_before.ppm")).count(), slices);
    for n in &names {
        let bytes = fs::read(img.join(n)).unwrap();
        assert!(bytes.starts_with(b"P6\n"));
    }

    let img2 = p(&dir, "img2");
    ok(&["render", "-i", s(&ev), "--out-dir", s(&img2), "--model", "1,-1,0,0"]);
    let n2 = fs::read_dir(&img2).unwrap().count();
    assert_eq!(n2, 2 * slices);
}

#[test]
fn header_echoes_configuration() {
    let dir = TempDir::new().unwrap();
    let (ev, _) = synth(&dir, "h", &["--seed", "6", "--slices", "2"]);
    let out = p(&dir, "h.txt");
    ok(&["detect", "-i", s(&ev), "-o", s(&out), "--threshold", "0.12"]);
    let text = fs::read_to_string(&out).unwrap();
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    for key in [
        "# bin_size = 0.3",
        "# dt = 0.025",
        "# threshold = 0.12",
        "# min_area = 10",
        "# gate = 40",
    ] {
        assert!(header.contains(&key), "missing {key:?} in {header:#?}");
    }
    // A results header is a valid config file.
    let cfg = p(&dir, "h.cfg");
    fs::write(&cfg, header.join("\n")).unwrap();
    ok(&["detect", "-i", s(&ev), "-o", s(&p(&dir, "h2.txt")), "--config", s(&cfg)]);
    assert_eq!(records(&out), records(&p(&dir, "h2.txt")));
}

#[test]
fn bad_config_value_fails() {
    let dir = TempDir::new().unwrap();
    let (ev, _) = synth(&dir, "b", &["--seed", "7", "--slices", "1"]);
    assert!(!evcomp(&["detect", "-i", s(&ev), "--threshold", "1.5"]).status.success());
    assert!(!evcomp(&["detect", "-i", s(&ev), "--bin-size", "nope"]).status.success());
}

#[test]
fn fixed_seed_runs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let (ev1, gt1) = synth(&dir, "a", &["--seed", "9", "--slices", "3", "--noise", "0.1"]);
    let (ev2, gt2) = synth(&dir, "b", &["--seed", "9", "--slices", "3", "--noise", "0.1"]);
    assert_eq!(fs::read(&ev1).unwrap(), fs::read(&ev2).unwrap());
    assert_eq!(fs::read(&gt1).unwrap(), fs::read(&gt2).unwrap());
    let t1 = p(&dir, "t1");
    let t2 = p(&dir, "t2");
    ok(&["track", "-i", s(&ev1), "-o", s(&t1), "--seed", "9"]);
    ok(&["track", "-i", s(&ev1), "-o", s(&t2), "--seed", "9"]);
    let strip = |p: &Path| -> String {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# input"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&t1), strip(&t2));
}

#[test]
fn compensate_recovers_generating_model() {
    let dir = TempDir::new().unwrap();
    let (ev, gt) = synth(
        &dir,
        "m",
        &[
            "--seed",
            "11",
            "--slices",
            "4",
            "--min-objects",
            "0",
            "--max-objects",
            "0",
        ],
    );
    let truth: Vec<f64> = fs::read_to_string(&gt)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("# background model: "))
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let out = p(&dir, "m.txt");
    ok(&["compensate", "-i", s(&ev), "-o", s(&out)]);
    for r in records(&out) {
        let m = &r[3..7];
        assert!((m[0] - truth[0]).abs() <= 0.3, "h_x {} vs {}", m[0], truth[0]);
        assert!((m[1] - truth[1]).abs() <= 0.3, "h_y {} vs {}", m[1], truth[1]);
        assert!((m[2] - truth[2]).abs() <= 0.02);
        assert!((m[3] - truth[3]).abs() <= 0.02);
    }
}
