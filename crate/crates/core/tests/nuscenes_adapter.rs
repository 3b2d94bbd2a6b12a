//! Adapter run over the two-scene table fixture written by
//! fixtures/gen_nuscenes_mini.py. Expected values follow from the
//! generator's closed-form motion.

use std::path::{Path, PathBuf};

use forge_core::ingest::{from_nuscenes_layout, validate_bundle, AdapterOptions};
use forge_core::meta_action::{classify_meta_action, ThresholdSpace};
use forge_core::motion::WindowConfig;
use forge_core::Error;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/nuscenes_mini")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[test]
fn converts_both_scenes() {
    let out = from_nuscenes_layout(&root(), &AdapterOptions::default()).unwrap();
    let ids: Vec<&str> = out.bundles.iter().map(|b| b.scenario_id.as_str()).collect();
    assert_eq!(ids, ["cruise_diag", "brake_north"]);
    for b in &out.bundles {
        assert_eq!(validate_bundle(b), vec![], "{}", b.scenario_id);
        assert_eq!(b.ego.len(), 11);
        assert_eq!(b.views.len(), 2);
        assert!(b.views.values().all(|f| f.len() == 11));
    }

    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.warnings[0].path, "ego_pose[cruise_diag-pose-03].rotation");
}

#[test]
fn cruise_kinematics_and_participants() {
    let out = from_nuscenes_layout(&root(), &AdapterOptions::default()).unwrap();
    let b = &out.bundles[0];
    for s in &b.ego {
        assert!(close(s.v, 5.0) && close(s.yaw, 0.6) && s.delta.abs() < 1e-9, "{s:?}");
    }
    let p = &b.elements.participants;
    assert_eq!(p.len(), 2);
    let car = p.iter().find(|p| p.category == "car").unwrap();
    assert_eq!(car.status, "parked");
    assert!(close(car.location.x, 15.0) && close(car.location.y, -3.5));
    assert!(car.orientation.abs() < 1e-9);
    assert!(close(car.size.length, 4.5) && close(car.size.width, 1.9));

    let ped = p.iter().find(|p| p.category == "pedestrian").unwrap();
    assert_eq!(ped.status, "moving");
    assert!(close(ped.location.x, 20.0) && close(ped.location.y, -3.6));
    assert!(close(ped.orientation, std::f64::consts::FRAC_PI_2));
    let hist: Vec<f64> = ped.history.iter().map(|h| h.y).collect();
    assert_eq!(hist.len(), 4);
    for (h, want) in hist.iter().zip([-6.0, -5.4, -4.8, -4.2]) {
        assert!(close(*h, want), "{hist:?}");
    }
}

#[test]
fn braking_speeds_and_labels() {
    let out = from_nuscenes_layout(&root(), &AdapterOptions::default()).unwrap();
    let b = &out.bundles[1];
    // Mean speed over [t, t + 0.5] of x = 8t - t^2/2 is 7.75 - t.
    for (i, s) in b.ego.iter().enumerate() {
        let want = 7.75 - 0.5 * i.min(9) as f64;
        assert!(close(s.v, want), "sample {i}: {} vs {want}", s.v);
    }
    let (omega, w) = (ThresholdSpace::default(), WindowConfig::default());
    assert_eq!(
        classify_meta_action(&out.bundles[0], &omega, &w).unwrap().text(),
        "move straight, constant longitudinally, constant laterally"
    );
    assert_eq!(
        classify_meta_action(b, &omega, &w).unwrap().text(),
        "move straight, decelerating longitudinally, constant laterally"
    );
}

fn copy_tables(to: &Path) {
    for e in std::fs::read_dir(root()).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
    }
}

#[test]
fn missing_table_and_dangling_token() {
    let dir = tempfile::tempdir().unwrap();
    copy_tables(dir.path());
    std::fs::remove_file(dir.path().join("ego_pose.json")).unwrap();
    match from_nuscenes_layout(dir.path(), &AdapterOptions::default()) {
        Err(Error::MissingTable(t)) => assert_eq!(t, "ego_pose"),
        other => panic!("{other:?}"),
    }

    copy_tables(dir.path());
    let path = dir.path().join("sample_annotation.json");
    let text = std::fs::read_to_string(&path).unwrap().replacen("cruise-car", "ghost-instance", 1);
    std::fs::write(&path, text).unwrap();
    match from_nuscenes_layout(dir.path(), &AdapterOptions::default()) {
        Err(Error::DanglingToken { table, token }) => {
            assert_eq!(table, "sample_annotation");
            assert_eq!(token, "ghost-instance");
        }
        other => panic!("{other:?}"),
    }
}
