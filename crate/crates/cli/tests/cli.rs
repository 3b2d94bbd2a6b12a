use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn action_on_left_arc_fixture() {
    let bundle = fixtures().join("scenarios/s11_left_arc_slow");
    let o = forge(&["action", "--bundle", p(&bundle), "--config", "default"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "turn left, decelerating longitudinally, constant laterally");
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = forge(&["action", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_bundle_is_error() {
    let o = forge(&["action", "--bundle", "/nonexistent/bundle.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_bundle_is_finding() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("scenarios/s03_cruise.json")).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replace("\"clear\"", "\"blizzard\"").replace("\"sunny\"", "\"blizzard\"")).unwrap();
    let o = forge(&["validate", "--bundle", p(&bad)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("finding:"));
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn emit_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = fixtures().join("scenarios");
    for (run, stage) in [("a", "scene_understanding"), ("b", "scene_understanding")] {
        let out = dir.path().join(run);
        let o = forge(&["emit", "--bundle", p(&scenarios), "--stage", stage, "--seed", "7", "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree_bytes(&dir.path().join("a"));
    assert!(a.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(a, tree_bytes(&dir.path().join("b")));

    let other = dir.path().join("c");
    forge(&["emit", "--bundle", p(&scenarios), "--stage", "scene_understanding", "--seed", "8", "--out", p(&other)]);
    assert_ne!(a, tree_bytes(&other));
}

#[test]
fn eval_ground_truth_as_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let o = forge(&["emit", "--bundle", p(&fixtures().join("scenarios")), "--out", p(&ds)]);
    assert_eq!(o.status.code(), Some(0));
    let report = dir.path().join("report.json");
    let o = forge(&["eval", "--pred", p(&ds), "--truth", p(&ds), "--l2-convention", "per-step", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("alphaAcc"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["alpha_acc"], 100.0);
    assert_eq!(r["l2_convention"], "per-step");
    for k in ["l2_1s", "l2_2s", "l2_3s", "l2_avg", "rmse_spd", "rmse_ang", "rmse_acc", "rmse_rate"] {
        assert_eq!(r[k], 0.0, "{k}");
    }
}

#[test]
fn ingest_writes_canonical_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["ingest", "--bundle", p(&fixtures().join("scenarios")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    for e in std::fs::read_dir(fixtures().join("scenarios")).unwrap() {
        let path = e.unwrap().path();
        let written = dir.path().join(path.file_name().unwrap());
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&written).unwrap());
    }
}

#[test]
fn config_file_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"thresholds": {"eps_ay_min": -2.0}}"#).unwrap();
    let bundle = fixtures().join("scenarios/s11_left_arc_slow.json");
    let o = forge(&["action", "--bundle", p(&bundle), "--config", p(&cfg)]);
    assert_eq!(stdout(&o).trim(), "turn left, constant longitudinally, constant laterally");

    std::fs::write(&cfg, r#"{"thresholds": {"eps_ay_min": 2.0}}"#).unwrap();
    let o = forge(&["action", "--bundle", p(&bundle), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));

    let a = forge(&["genqa", "--bundle", p(&bundle), "--seed", "1"]);
    let b = forge(&["genqa", "--bundle", p(&bundle), "--seed", "1"]);
    assert_eq!(a.stdout, b.stdout);
}
