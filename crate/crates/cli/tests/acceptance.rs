//! Acceptance run: one PASS/FAIL line per primary criterion.
//!
//! `cargo test -p forge-cli --test acceptance`

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forge_cli::server::{self, AppState, ServeOptions};
use forge_core::config::GlobalConfig;
use forge_core::emit::{
    apply_patches, emit_dataset, load_dataset, to_truth_records, validate_sample, write_dataset, CurationPatch, Dataset,
    PatchOp, Stage,
};
use forge_core::geometry::wrap_angle;
use forge_core::ingest::{load_bundle_dir, EgoMotionSample, ScenarioBundle};
use forge_core::meta_action::{
    classify_context, classify_meta_action, classify_steering, MetaActionLabel, SpeedLevel, SteeringLevel,
    ThresholdSpace,
};
use forge_core::metrics::{evaluate, score_meta_actions, score_text_corpus, EvalOptions, TextEvalPair};
use forge_core::motion::{
    controls_line, derive_kinematics, motion_context, parse_motion_response, render_motion_text, split_windows,
    trajectory_line, WindowConfig,
};

const GT_RUNTIME_LIMIT: Duration = Duration::from_secs(10);
const TEXT_ORACLE_TOL: f64 = 1e-4;
const KINEMATICS_REL_TOL: f64 = 0.05;
const RIGID_TOL_M: f64 = 1e-9;
const RANDOM_TRAJECTORIES: usize = 10_000;
const METEOR_FLOOR: f64 = 99.0;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenarios() -> PathBuf {
    root().join("fixtures/scenarios")
}

fn corpus() -> Vec<ScenarioBundle> {
    let cfg = GlobalConfig::default();
    load_bundle_dir(&scenarios(), &cfg.windows, &cfg.vocabulary).expect("fixture corpus loads")
}

fn gt_law() -> Check {
    let start = Instant::now();
    let cfg = GlobalConfig::default();
    let ds = emit_dataset(&corpus(), Stage::EndToEnd, &cfg).map_err(|e| e.to_string())?;
    let truth = to_truth_records(&ds);
    let ev = evaluate(&truth, &truth, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let r = &ev.report;
    let elapsed = start.elapsed();
    ensure(ds.samples.len() == 20, || format!("{} samples", ds.samples.len()))?;
    ensure(r.alpha_acc == Some(100.0), || format!("alpha_acc {:?}", r.alpha_acc))?;
    for (name, v) in [
        ("l2_1s", r.l2_1s),
        ("l2_2s", r.l2_2s),
        ("l2_3s", r.l2_3s),
        ("l2_avg", r.l2_avg),
        ("rmse_spd", r.rmse_spd),
        ("rmse_ang", r.rmse_ang),
        ("rmse_acc", r.rmse_acc),
        ("rmse_rate", r.rmse_rate),
    ] {
        ensure(v == Some(0.0), || format!("{name} {v:?}"))?;
    }
    ensure(r.bleu4 == Some(100.0) && r.rouge_l == Some(100.0), || {
        format!("bleu4 {:?} rouge_l {:?}", r.bleu4, r.rouge_l)
    })?;
    ensure(r.meteor.is_some_and(|m| m > METEOR_FLOOR), || format!("meteor {:?}", r.meteor))?;
    ensure(elapsed < GT_RUNTIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 samples, alpha 100, L2/RMSE 0, bleu4 = rouge_l = 100, meteor {:.4}, {:.2} s",
        r.meteor.unwrap_or(0.0),
        elapsed.as_secs_f64()
    ))
}

fn alpha_weights() -> Check {
    use SpeedLevel::*;
    use SteeringLevel::*;
    let truth = MetaActionLabel::new(Constant, TurnLeft, Decelerating);
    let steering_only = MetaActionLabel::new(Accelerating, TurnLeft, Accelerating);
    let speeds_only = MetaActionLabel::new(Constant, MoveStraight, Decelerating);
    let s = score_meta_actions(&[(Some(steering_only), truth)]).map_err(|e| e.to_string())?;
    let v = score_meta_actions(&[(Some(speeds_only), truth)]).map_err(|e| e.to_string())?;
    let all = score_meta_actions(&[(Some(truth), truth)]).map_err(|e| e.to_string())?;
    let none = score_meta_actions(&[(None, truth)]).map_err(|e| e.to_string())?;
    ensure(s == 70.0 && v == 30.0 && all == 100.0 && none == 0.0, || {
        format!("steering-only {s}, speeds-only {v}, exact {all}, missing {none}")
    })?;
    Ok("steering-only 70.0, speeds-only 30.0".into())
}

/// Kinematic rollout on a 0.1 s grid over 5 s with piecewise-constant
/// acceleration and yaw rate drawn per 0.5 s segment.
fn random_ego(rng: &mut ChaCha8Rng) -> Vec<EgoMotionSample> {
    let segs: Vec<(f64, f64)> = (0..10)
        .map(|_| {
            let acc = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-2.0..2.0) };
            let yr = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-0.3..0.3) };
            (acc, yr)
        })
        .collect();
    let mut v: f64 = if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..15.0) };
    let (mut x, mut y, mut yaw) = (0.0f64, 0.0f64, rng.random_range(-3.0..3.0));
    let mut out = Vec::with_capacity(51);
    for i in 0..=50 {
        let t = i as f64 * 0.1;
        out.push(EgoMotionSample { t, x, y, yaw: wrap_angle(yaw), v, delta: 0.0 });
        let (acc, yr) = segs[(i / 5).min(9)];
        x += v * 0.1 * yaw.cos();
        y += v * 0.1 * yaw.sin();
        yaw += yr * 0.1;
        v = (v + acc * 0.1).max(0.0);
    }
    out
}

fn rank(s: SteeringLevel) -> u8 {
    match s {
        SteeringLevel::TurnLeft | SteeringLevel::TurnRight => 0,
        SteeringLevel::SlightLeft | SteeringLevel::SlightRight => 1,
        SteeringLevel::MoveStraight => 2,
        SteeringLevel::Idle => 3,
    }
}

fn meta_action_engine() -> Check {
    let labels: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(root().join("fixtures/expected/labels.json")).unwrap()).unwrap();
    let (omega, w) = (ThresholdSpace::default(), WindowConfig::default());
    let bundles = corpus();
    ensure(bundles.len() >= 20 && labels.len() == bundles.len(), || "fixture count".into())?;
    for b in &bundles {
        let got = classify_meta_action(b, &omega, &w).map_err(|e| e.to_string())?.text();
        ensure(got == labels[&b.scenario_id], || format!("{}: {got} vs {}", b.scenario_id, labels[&b.scenario_id]))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut seen = BTreeMap::new();
    for n in 0..RANDOM_TRAJECTORIES {
        let ego = random_ego(&mut rng);
        let ctx = motion_context(&ego, 2.0, &w).map_err(|e| e.to_string())?;
        let label = classify_context(&ctx, &omega);
        let (f, v) = (&ctx.future, ctx.current.v);

        // Each rule evaluated on its own; exactly one must hold.
        let idle = v < omega.eps_v && f.speeds.iter().all(|&s| s < omega.eps_v);
        let straight = f
            .headings
            .iter()
            .zip(&f.points)
            .all(|(h, p)| h.abs() < omega.eps_dtheta && p.y.abs() < omega.eps_dx);
        let turn = f.headings.iter().any(|h| h.abs() >= omega.eps_dtheta);
        let slight = f.points.iter().any(|p| p.y.abs() >= omega.eps_dx);
        let fired = [
            idle,
            !idle && straight,
            !idle && !straight && turn,
            !idle && !straight && !turn && slight,
        ];
        ensure(fired.iter().filter(|&&b| b).count() == 1, || format!("trajectory {n}: rules {fired:?}"))?;
        let want = match fired.iter().position(|&b| b).unwrap() {
            0 => 3,
            1 => 2,
            2 => 0,
            _ => 1,
        };
        ensure(rank(label.steering()) == want, || format!("trajectory {n}: {}", label.text()))?;
        *seen.entry(label.steering().to_string()).or_insert(0usize) += 1;

        let mut m = f.clone();
        m.points.iter_mut().for_each(|p| p.y = -p.y);
        m.headings.iter_mut().for_each(|h| *h = -*h);
        ensure(classify_steering(&m, v, &omega) == label.steering().mirrored(), || {
            format!("trajectory {n}: mirror of {}", label.steering())
        })?;

        let looser = ThresholdSpace {
            eps_dtheta: omega.eps_dtheta * 1.5,
            eps_dx: omega.eps_dx * 1.5,
            ..omega
        };
        ensure(rank(classify_steering(f, v, &looser)) >= rank(label.steering()), || {
            format!("trajectory {n}: raising thresholds tightened the label")
        })?;
    }
    ensure(seen.len() == 6, || format!("steering levels reached: {seen:?}"))?;
    Ok(format!(
        "{} fixtures agree; {RANDOM_TRAJECTORIES} random trajectories exhaustive, mirror-symmetric, monotone",
        bundles.len()
    ))
}

#[derive(serde::Deserialize)]
struct OracleScores {
    bleu4: f64,
    rouge_l: f64,
    meteor: f64,
    cider_d: f64,
}

fn text_oracle() -> Check {
    let dir = root().join("crates/core/tests/fixtures/text_metrics");
    let pairs: Vec<TextEvalPair> = serde_json::from_str(&std::fs::read_to_string(dir.join("corpus.json")).unwrap()).unwrap();
    let want: OracleScores = serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
    let got = score_text_corpus(&pairs).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (name, g, w) in [
        ("bleu4", got.bleu4, want.bleu4),
        ("rouge_l", got.rouge_l, want.rouge_l),
        ("meteor", got.meteor, want.meteor),
        ("cider_d", got.cider_d, want.cider_d),
    ] {
        worst = worst.max((g - w).abs());
        ensure((g - w).abs() <= TEXT_ORACLE_TOL, || format!("{name}: {g} vs oracle {w}"))?;
    }
    Ok(format!("{} pairs, max deviation {worst:.2e}", pairs.len()))
}

fn rel_close(got: f64, want: f64) -> bool {
    (got - want).abs() <= KINEMATICS_REL_TOL * want.abs()
}

fn motion_math() -> Check {
    // Line with constant acceleration.
    let (v0, acc) = (3.0, 1.2);
    let line: Vec<EgoMotionSample> = (0..=50)
        .map(|i| {
            let t = i as f64 * 0.1;
            EgoMotionSample { t, x: v0 * t + 0.5 * acc * t * t, y: 0.0, yaw: 0.0, v: v0 + acc * t, delta: 0.0 }
        })
        .collect();
    let k = derive_kinematics(&line).map_err(|e| e.to_string())?;
    for r in &k.records[1..k.records.len() - 1] {
        ensure(rel_close(r.a, acc) && rel_close(r.a_lon, acc), || format!("line a {} a_lon {} at t={}", r.a, r.a_lon, r.t))?;
    }

    // Constant-speed arc with a steering ramp.
    let (radius, v, d0, rate) = (20.0, 6.0, 4.0, 2.5);
    let arc: Vec<EgoMotionSample> = (0..=50)
        .map(|i| {
            let t = i as f64 * 0.1;
            let th = v * t / radius;
            EgoMotionSample {
                t,
                x: radius * th.sin(),
                y: radius * (1.0 - th.cos()),
                yaw: wrap_angle(th),
                v,
                delta: d0 + rate * t,
            }
        })
        .collect();
    let k = derive_kinematics(&arc).map_err(|e| e.to_string())?;
    for r in &k.records[1..k.records.len() - 1] {
        ensure(rel_close(r.delta_rate, rate), || format!("arc delta_rate {} at t={}", r.delta_rate, r.t))?;
        ensure(rel_close(r.a_lat, v * v / radius), || format!("arc a_lat {} at t={}", r.a_lat, r.t))?;
        ensure(r.a.abs() < 1e-9, || format!("arc a {} at t={}", r.a, r.t))?;
    }

    // parse(render(x)) renders back to the same text on every fixture.
    let w = WindowConfig::default();
    let bundles = corpus();
    for b in &bundles {
        let t_obs = b.observation_time(&w).unwrap();
        let ctx = motion_context(&b.ego, t_obs, &w).map_err(|e| e.to_string())?;
        let gt = render_motion_text(&ctx, "").ground_truth;
        let p = parse_motion_response(&gt, &w).map_err(|e| format!("{}: {e}", b.scenario_id))?;
        let c = p.controls.complete().ok_or_else(|| format!("{}: incomplete controls", b.scenario_id))?;
        let again = format!("{}\n{}", trajectory_line(&p.future.points), controls_line(&c));
        ensure(again == gt, || format!("{}: re-render differs", b.scenario_id))?;
    }

    // Rigid motions of the world frame leave the ego-frame windows unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for b in &bundles {
        let t_obs = b.observation_time(&w).unwrap();
        let (h0, f0) = split_windows(&b.ego, t_obs, &w).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let rot: f64 = rng.random_range(-3.1..3.1);
            let (tx, ty): (f64, f64) = (rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
            let (s, c) = rot.sin_cos();
            let moved: Vec<EgoMotionSample> = b
                .ego
                .iter()
                .map(|e| EgoMotionSample {
                    x: c * e.x - s * e.y + tx,
                    y: s * e.x + c * e.y + ty,
                    yaw: wrap_angle(e.yaw + rot),
                    ..*e
                })
                .collect();
            let (h1, f1) = split_windows(&moved, t_obs, &w).map_err(|e| e.to_string())?;
            for (a, q) in h0.points.iter().chain(&f0.points).zip(h1.points.iter().chain(&f1.points)) {
                worst = worst.max(a.distance(q));
            }
        }
    }
    ensure(worst < RIGID_TOL_M, || format!("rigid-motion deviation {worst:e} m"))?;
    Ok(format!(
        "line/arc a, delta rate, a_lat within 5%; render-parse identity on {} fixtures; rigid deviation {worst:.1e} m",
        bundles.len()
    ))
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
                out.push((
                    path.strip_prefix(dir).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn forge(args: &[&str], stdout_to: Option<&Path>) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("forge {args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    if let Some(p) = stdout_to {
        std::fs::write(p, &o.stdout).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn pipeline_run(dir: &Path, stage: &str) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let bundles = dir.join("bundles");
    let src = s(&scenarios());
    forge(&["ingest", "--bundle", &src, "--out", &s(&bundles)], None)?;
    forge(&["genqa", "--bundle", &s(&bundles), "--seed", "7"], Some(&dir.join("qa.jsonl")))?;
    forge(&["action", "--bundle", &s(&bundles)], Some(&dir.join("actions.tsv")))?;
    forge(&["emit", "--bundle", &s(&bundles), "--stage", stage, "--seed", "7", "--out", &s(&dir.join("dataset"))], None)?;
    forge(&["validate", "--dataset", &s(&dir.join("dataset"))], None)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for stage in ["scene_understanding", "end_to_end"] {
        let (a, b) = (tmp.path().join(format!("{stage}-a")), tmp.path().join(format!("{stage}-b")));
        pipeline_run(&a, stage)?;
        pipeline_run(&b, stage)?;
        let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
        ensure(ta == tb, || format!("{stage}: trees differ"))?;
        files += ta.len();

        let ds = load_dataset(&a.join("dataset")).map_err(|e| e.to_string())?;
        let cfg = GlobalConfig::default();
        let lib = cfg.library().unwrap();
        let findings: usize = ds
            .samples
            .iter()
            .zip(&ds.annotations)
            .map(|(s, an)| validate_sample(s, an, &lib, &cfg.vocabulary).len())
            .sum();
        ensure(findings == 0, || format!("{stage}: {findings} consistency findings"))?;
    }
    Ok(format!("ingest/genqa/action/emit twice per stage, {files} files byte-identical, 0 findings"))
}

fn patch(sample: &str, round: usize, op: PatchOp, payload: Option<&str>, ts: &str) -> CurationPatch {
    CurationPatch {
        sample_id: sample.into(),
        round,
        op,
        payload: payload.map(Into::into),
        author: "acceptance".into(),
        timestamp: ts.into(),
        note: String::new(),
    }
}

fn curation_ledger() -> Vec<CurationPatch> {
    vec![
        patch("s03_cruise:e2e", 0, PatchOp::Edit, Some("The weather is sunny and bright."), "2026-01-01T10:00:00.000000Z"),
        patch("s09_left_arc:e2e", 1, PatchOp::Remove, None, "2026-01-01T10:00:01.000000Z"),
        patch(
            "s12_right_arc_slow:e2e",
            0,
            PatchOp::Fill,
            Some("Is the road wet?\nThe road is wet from the rain."),
            "2026-01-01T10:00:02.000000Z",
        ),
        patch("s03_cruise:e2e", 2, PatchOp::Edit, Some("The road is a city street."), "2026-01-01T10:00:03.000000Z"),
    ]
}

fn write_tree(ds: &Dataset, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    write_dataset(dir, ds).map_err(|e| e.to_string())?;
    Ok(tree_bytes(dir))
}

fn curation_semantics() -> Check {
    let cfg = GlobalConfig::default();
    let base = emit_dataset(&corpus(), Stage::EndToEnd, &cfg).map_err(|e| e.to_string())?;
    let ledger = curation_ledger();
    let patched = apply_patches(&base, &ledger).map_err(|e| e.to_string())?;

    for (b, p) in base.samples.iter().zip(&patched.samples) {
        let c0 = &b.conversation;
        let c1 = &p.conversation;
        match b.id.as_str() {
            "s03_cruise:e2e" => {
                ensure(c0.len() == c1.len(), || "edit changed the round count".into())?;
                let changed: Vec<usize> = (0..c0.len()).filter(|&i| c0[i] != c1[i]).collect();
                ensure(changed == [1, 5], || format!("s03 changed turns {changed:?}"))?;
                ensure(c1[1].text == "The weather is sunny and bright.", || "s03 round 0 text".into())?;
            }
            "s09_left_arc:e2e" => {
                let mut expect = c0.clone();
                expect.drain(2..4);
                ensure(*c1 == expect, || "remove did not drop exactly round 1".into())?;
            }
            "s12_right_arc_slow:e2e" => {
                ensure(c1.len() == c0.len() + 2, || "fill did not add one round".into())?;
                ensure(c1[..2] == c0[..2] && c1[4..] == c0[2..], || "fill disturbed other rounds".into())?;
                ensure(c1[2].text == "Is the road wet?" && c1[3].text == "The road is wet from the rain.", || {
                    format!("fill inserted {:?}", &c1[2..4])
                })?;
            }
            _ => ensure(c0 == c1, || format!("{} changed without a patch", b.id))?,
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..8 {
        let mut shuffled = ledger.clone();
        shuffled.shuffle(&mut rng);
        let again = apply_patches(&base, &shuffled).map_err(|e| e.to_string())?;
        ensure(again == patched, || "result depends on ledger order".into())?;
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = write_tree(&patched, &tmp.path().join("a"))?;
    let reloaded = load_dataset(&tmp.path().join("a")).map_err(|e| e.to_string())?;
    ensure(reloaded == patched, || "reloaded dataset differs".into())?;
    let second = write_tree(&reloaded, &tmp.path().join("b"))?;
    ensure(first == second, || "re-canonicalized tree differs".into())?;

    let rest = rest_contract()?;
    Ok(format!("{} patches hit only their rounds, 8 shuffles agree, byte-stable rewrite; REST {rest}", ledger.len()))
}

struct Client {
    addr: SocketAddr,
    agent: ureq::Agent,
}

impl Client {
    fn get(&self, path: &str) -> Result<(u16, serde_json::Value), String> {
        let mut r = self.agent.get(&format!("http://{}{path}", self.addr)).call().map_err(|e| e.to_string())?;
        let code = r.status().as_u16();
        let body = r.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((code, serde_json::from_str(&body).unwrap_or_default()))
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<(u16, serde_json::Value), String> {
        let mut r = self
            .agent
            .post(&format!("http://{}{path}", self.addr))
            .header("content-type", "application/json")
            .send(body.to_string())
            .map_err(|e| e.to_string())?;
        let code = r.status().as_u16();
        let body = r.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((code, serde_json::from_str(&body).unwrap_or_default()))
    }
}

fn rest_contract() -> Result<String, String> {
    use serde_json::json;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = GlobalConfig::default();
    let ds_dir = tmp.path().join("ds");
    let ds = emit_dataset(&corpus(), Stage::EndToEnd, &cfg).map_err(|e| e.to_string())?;
    write_dataset(&ds_dir, &ds).map_err(|e| e.to_string())?;
    let dataset_before = tree_bytes(&ds_dir);
    let ledger = ds_dir.join("patches.jsonl");
    let state = AppState::load(ServeOptions {
        ledger: ledger.clone(),
        media_root: ds_dir.join("media"),
        dataset: ds_dir.clone(),
        static_dir: None,
        library: cfg.library().unwrap(),
        vocabulary: cfg.vocabulary.clone(),
        windows: cfg.windows,
    })
    .map_err(|e| e.to_string())?;
    let listener = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            let _ = server::serve(l, state).await;
        });
    });
    let c = Client {
        addr,
        agent: ureq::Agent::config_builder().http_status_as_error(false).build().new_agent(),
    };

    let (code, list) = c.get("/api/records?status=pending&page=1&page_size=7")?;
    ensure(code == 200 && list["total"] == 20 && list["items"].as_array().map(Vec::len) == Some(7), || {
        format!("list {code} {list}")
    })?;
    let (code, rec) = c.get("/api/records/s03_cruise:e2e")?;
    ensure(code == 200 && rec["sample"]["id"] == "s03_cruise:e2e" && rec["findings"] == json!([]), || {
        format!("get {code}")
    })?;
    let edit = json!({"round": 0, "op": "edit", "payload": "The weather is sunny.", "version": 0});
    let (code, _) = c.post("/api/records/s03_cruise:e2e/patch", edit.clone())?;
    ensure(code == 200, || format!("patch {code}"))?;
    let lines = std::fs::read_to_string(&ledger).map_err(|e| e.to_string())?.lines().count();
    ensure(lines == 1, || format!("ledger has {lines} lines"))?;
    let (code, _) = c.post("/api/records/s03_cruise:e2e/patch", edit)?;
    ensure(code == 409, || format!("stale patch {code}"))?;
    let (code, _) = c.post("/api/records/ghost:e2e/patch", json!({"round": 0, "op": "remove"}))?;
    ensure(code == 404, || format!("dangling patch {code}"))?;
    let (code, _) = c.get("/api/records/ghost:e2e")?;
    ensure(code == 404, || format!("dangling get {code}"))?;
    let (_, progress) = c.get("/api/progress")?;
    ensure(progress["curated"] == 1 && progress["pending"] == 19, || format!("progress {progress}"))?;
    let mut after = tree_bytes(&ds_dir);
    after.retain(|(n, _)| n != "patches.jsonl");
    ensure(after == dataset_before, || "server modified dataset files".into())?;
    Ok("list/get/patch/409/404 ok".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("GT-as-prediction law", gt_law),
        ("alphaAcc weighting 70/30", alpha_weights),
        ("meta-action rule engine", meta_action_engine),
        ("text metrics vs reference oracle (1e-4)", text_oracle),
        ("motion math", motion_math),
        ("pipeline determinism", determinism),
        ("curation semantics and REST contract", curation_semantics),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} primary criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
