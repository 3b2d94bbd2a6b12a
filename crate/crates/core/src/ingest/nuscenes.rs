//! Adapter for nuScenes-style table directories.
//!
//! Reads the `scene`, `sample`, `sample_data`, `ego_pose` and
//! `sample_annotation` tables (one JSON array per file) and builds one
//! bundle per scene. An `instance` table is optional; when present,
//! annotation instance tokens are checked against it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{EgoMotionSample, FrameRef, ParticipantTrack, ScenarioBundle, TrackSample};
use crate::error::{Error, Finding, Result};
use crate::geometry::{wrap_angle, Point2, Pose2, Size3};
use crate::motion::WindowConfig;
use crate::scene_graph::{ParticipantView, SceneElementSet};

pub const NUSCENES_TABLES: [&str; 5] = ["scene", "sample", "sample_data", "ego_pose", "sample_annotation"];

/// Roll/pitch magnitude (rad) above which a pose is reported as non-planar.
const NON_PLANAR_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct AdapterOptions {
    pub windows: WindowConfig,
    /// Wheelbase used to recover a steering angle from yaw rate, metres.
    pub wheelbase_m: f64,
}

impl Default for AdapterOptions {
    fn default() -> Self {
        AdapterOptions {
            windows: WindowConfig::default(),
            wheelbase_m: 2.588,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdapterOutput {
    pub bundles: Vec<ScenarioBundle>,
    /// Non-fatal findings, e.g. dropped roll/pitch.
    pub warnings: Vec<Finding>,
}

#[derive(Debug, Deserialize)]
struct SceneRec {
    token: String,
    name: String,
    first_sample_token: String,
    #[serde(default)]
    bev_map: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SampleRec {
    token: String,
    timestamp: i64,
    scene_token: String,
}

#[derive(Debug, Deserialize)]
struct SampleDataRec {
    sample_token: String,
    ego_pose_token: String,
    timestamp: i64,
    filename: String,
    #[serde(default)]
    channel: Option<String>,
    #[serde(default = "yes")]
    is_key_frame: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct EgoPoseRec {
    token: String,
    timestamp: i64,
    translation: [f64; 3],
    /// w, x, y, z
    rotation: [f64; 4],
}

#[derive(Debug, Deserialize)]
struct AnnotationRec {
    sample_token: String,
    instance_token: String,
    translation: [f64; 3],
    /// width, length, height
    size: [f64; 3],
    rotation: [f64; 4],
    #[serde(default)]
    category_name: Option<String>,
    #[serde(default)]
    attribute_name: Option<String>,
}

#[derive(Debug, Deserialize)]
struct InstanceRec {
    token: String,
}

fn read_table<T: DeserializeOwned>(root: &Path, name: &str) -> Result<Vec<T>> {
    let path = root.join(format!("{name}.json"));
    if !path.exists() {
        return Err(Error::MissingTable(name.to_string()));
    }
    let bytes = std::fs::read(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::from_json(e, &bytes))
}

/// Yaw (z rotation) and the largest of |roll|, |pitch| from a (w, x, y, z) quaternion.
fn quaternion_yaw(q: [f64; 4]) -> (f64, f64) {
    let [w, x, y, z] = q;
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
    (wrap_angle(yaw), roll.abs().max(pitch.abs()))
}

/// nuScenes category names collapsed onto the participant vocabulary.
fn normalize_category(name: &str) -> String {
    let n = name.to_ascii_lowercase();
    let table = [
        ("pedestrian", "pedestrian"),
        ("bicycle", "bicycle"),
        ("motorcycle", "motorcycle"),
        ("construction", "construction vehicle"),
        ("trailer", "trailer"),
        ("truck", "truck"),
        ("bus", "bus"),
        ("car", "car"),
        ("trafficcone", "traffic cone"),
        ("barrier", "barrier"),
    ];
    table
        .iter()
        .find(|(key, _)| n.contains(key))
        .map(|(_, v)| v.to_string())
        .unwrap_or_else(|| n.rsplit('.').next().unwrap_or(&n).to_string())
}

fn status_from_attribute(attr: Option<&str>) -> String {
    attr.and_then(|a| a.rsplit('.').next())
        .map(|s| s.replace('_', " "))
        .unwrap_or_else(|| "unknown".to_string())
}

fn channel_of(rec: &SampleDataRec) -> String {
    rec.channel.clone().unwrap_or_else(|| {
        rec.filename
            .split('/')
            .nth(1)
            .unwrap_or("UNKNOWN")
            .to_string()
    })
}

#[derive(Clone, Copy)]
struct PoseAt {
    t_us: i64,
    x: f64,
    y: f64,
    yaw: f64,
}

fn interpolate(poses: &[PoseAt], t_us: i64) -> PoseAt {
    let idx = poses.partition_point(|p| p.t_us <= t_us);
    if idx == 0 {
        return PoseAt { t_us, ..poses[0] };
    }
    if idx == poses.len() {
        return PoseAt { t_us, ..poses[poses.len() - 1] };
    }
    let a = poses[idx - 1];
    let b = poses[idx];
    if a.t_us == t_us {
        return a;
    }
    let f = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
    PoseAt {
        t_us,
        x: a.x + f * (b.x - a.x),
        y: a.y + f * (b.y - a.y),
        yaw: wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw)),
    }
}

/// Reads a nuScenes-style table directory into one bundle per scene.
pub fn from_nuscenes_layout(root: &Path, opts: &AdapterOptions) -> Result<AdapterOutput> {
    let scenes: Vec<SceneRec> = read_table(root, "scene")?;
    let samples: Vec<SampleRec> = read_table(root, "sample")?;
    let sample_data: Vec<SampleDataRec> = read_table(root, "sample_data")?;
    let ego_poses: Vec<EgoPoseRec> = read_table(root, "ego_pose")?;
    let annotations: Vec<AnnotationRec> = read_table(root, "sample_annotation")?;
    let instances: Option<HashSet<String>> = if root.join("instance.json").exists() {
        Some(
            read_table::<InstanceRec>(root, "instance")?
                .into_iter()
                .map(|i| i.token)
                .collect(),
        )
    } else {
        None
    };

    let mut out = AdapterOutput::default();
    if scenes.is_empty() {
        return Ok(out);
    }

    let scene_tokens: HashSet<&str> = scenes.iter().map(|s| s.token.as_str()).collect();
    let sample_by_token: HashMap<&str, &SampleRec> = samples.iter().map(|s| (s.token.as_str(), s)).collect();
    let pose_by_token: HashMap<&str, &EgoPoseRec> = ego_poses.iter().map(|p| (p.token.as_str(), p)).collect();

    for s in &samples {
        if !scene_tokens.contains(s.scene_token.as_str()) {
            return Err(dangling("sample", &s.scene_token));
        }
    }
    for sd in &sample_data {
        if !sample_by_token.contains_key(sd.sample_token.as_str()) {
            return Err(dangling("sample_data", &sd.sample_token));
        }
        if !pose_by_token.contains_key(sd.ego_pose_token.as_str()) {
            return Err(dangling("sample_data", &sd.ego_pose_token));
        }
    }
    for a in &annotations {
        if !sample_by_token.contains_key(a.sample_token.as_str()) {
            return Err(dangling("sample_annotation", &a.sample_token));
        }
        if let Some(known) = &instances {
            if !known.contains(&a.instance_token) {
                return Err(dangling("sample_annotation", &a.instance_token));
            }
        }
    }

    for scene in &scenes {
        if !sample_by_token.contains_key(scene.first_sample_token.as_str()) {
            return Err(dangling("scene", &scene.first_sample_token));
        }
        let mut keyframes: Vec<&SampleRec> = samples.iter().filter(|s| s.scene_token == scene.token).collect();
        keyframes.sort_by_key(|s| s.timestamp);
        let key_tokens: HashSet<&str> = keyframes.iter().map(|s| s.token.as_str()).collect();

        let scene_data: Vec<&SampleDataRec> = sample_data
            .iter()
            .filter(|sd| key_tokens.contains(sd.sample_token.as_str()))
            .collect();

        let mut poses: Vec<PoseAt> = Vec::new();
        let mut seen = HashSet::new();
        for sd in &scene_data {
            let p = pose_by_token[sd.ego_pose_token.as_str()];
            if !seen.insert(p.token.as_str()) {
                continue;
            }
            let (yaw, tilt) = quaternion_yaw(p.rotation);
            if tilt > NON_PLANAR_TOLERANCE {
                out.warnings.push(Finding::new(
                    format!("ego_pose[{}].rotation", p.token),
                    format!("non-planar rotation ({tilt:.3} rad) dropped"),
                ));
            }
            poses.push(PoseAt {
                t_us: p.timestamp,
                x: p.translation[0],
                y: p.translation[1],
                yaw,
            });
        }
        poses.sort_by_key(|p| p.t_us);
        if poses.is_empty() {
            return Err(Error::Adapter(format!("scene '{}' has no ego poses", scene.name)));
        }

        let t0 = keyframes.first().map(|s| s.timestamp).unwrap_or(0);
        let rel = |t_us: i64| (t_us - t0) as f64 / 1e6;
        let resampled: Vec<PoseAt> = keyframes.iter().map(|k| interpolate(&poses, k.timestamp)).collect();
        let ego = ego_series(&resampled, rel, opts.wheelbase_m);

        let mut views: BTreeMap<String, Vec<FrameRef>> = BTreeMap::new();
        for sd in scene_data.iter().filter(|sd| sd.is_key_frame) {
            let ch = channel_of(sd);
            if ch.starts_with("CAM") {
                views.entry(ch).or_default().push(FrameRef {
                    path: sd.filename.clone(),
                    timestamp: sd.timestamp,
                });
            }
        }
        for frames in views.values_mut() {
            frames.sort_by_key(|f| f.timestamp);
        }

        let t_obs = ego.first().map(|s| s.t).unwrap_or(0.0) + opts.windows.history_s;
        let mut tracks: BTreeMap<&str, Vec<&AnnotationRec>> = BTreeMap::new();
        for a in annotations.iter().filter(|a| key_tokens.contains(a.sample_token.as_str())) {
            tracks.entry(a.instance_token.as_str()).or_default().push(a);
        }

        let obs_pose = ego
            .iter()
            .rev()
            .find(|s| s.t <= t_obs + 1e-6)
            .or(ego.first())
            .map(|s| Pose2 { x: s.x, y: s.y, yaw: s.yaw })
            .expect("non-empty ego");

        let mut participants = Vec::new();
        let mut views_of_participants = Vec::new();
        for (instance, mut anns) in tracks {
            anns.sort_by_key(|a| sample_by_token[a.sample_token.as_str()].timestamp);
            let samples: Vec<TrackSample> = anns
                .iter()
                .map(|a| TrackSample {
                    t: rel(sample_by_token[a.sample_token.as_str()].timestamp),
                    x: a.translation[0],
                    y: a.translation[1],
                    yaw: quaternion_yaw(a.rotation).0,
                })
                .collect();
            let current_index = samples.iter().rposition(|s| s.t <= t_obs + 1e-6).unwrap_or(0);
            let head = anns[current_index];
            let size = Size3 {
                length: head.size[1],
                width: head.size[0],
                height: head.size[2],
            };
            let category = normalize_category(head.category_name.as_deref().unwrap_or("object"));
            let status = status_from_attribute(head.attribute_name.as_deref());

            let cur = samples[current_index];
            views_of_participants.push(ParticipantView {
                category: category.clone(),
                status: status.clone(),
                size,
                location: obs_pose.to_local(Point2::new(cur.x, cur.y)),
                orientation: wrap_angle(cur.yaw - obs_pose.yaw),
                history: samples[..current_index]
                    .iter()
                    .filter(|s| s.t >= t_obs - opts.windows.history_s - 1e-6)
                    .map(|s| obs_pose.to_local(Point2::new(s.x, s.y)))
                    .collect(),
            });
            participants.push(ParticipantTrack {
                track_id: instance.to_string(),
                category,
                status,
                size,
                samples,
                current_index,
            });
        }

        out.bundles.push(ScenarioBundle {
            scenario_id: scene.name.clone(),
            dt: opts.windows.dt,
            views,
            bev_map: scene
                .bev_map
                .clone()
                .unwrap_or_else(|| format!("maps/bev/{}.png", scene.name)),
            ego,
            participants,
            elements: SceneElementSet {
                participants: views_of_participants,
                ..Default::default()
            },
        });
    }
    Ok(out)
}

fn dangling(table: &str, token: &str) -> Error {
    Error::DanglingToken {
        table: table.to_string(),
        token: token.to_string(),
    }
}

/// Speed from finite differences of resampled positions; steering from the
/// kinematic bicycle relation delta = atan(L * yaw_rate / v).
fn ego_series(poses: &[PoseAt], rel: impl Fn(i64) -> f64, wheelbase: f64) -> Vec<EgoMotionSample> {
    let n = poses.len();
    let mut speed = vec![0.0; n];
    let mut steer = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let dt = (poses[i + 1].t_us - poses[i].t_us) as f64 / 1e6;
        if dt <= 0.0 {
            continue;
        }
        let v = (poses[i + 1].x - poses[i].x).hypot(poses[i + 1].y - poses[i].y) / dt;
        let yaw_rate = wrap_angle(poses[i + 1].yaw - poses[i].yaw) / dt;
        speed[i] = v;
        steer[i] = if v > 0.1 {
            (wheelbase * yaw_rate / v).atan().to_degrees()
        } else {
            0.0
        };
    }
    if n >= 2 {
        speed[n - 1] = speed[n - 2];
        steer[n - 1] = steer[n - 2];
    }
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| EgoMotionSample {
            t: rel(p.t_us),
            x: p.x,
            y: p.y,
            yaw: p.yaw,
            v: speed[i],
            delta: steer[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn yaw_from_planar_quaternion() {
        let half = FRAC_PI_2 / 2.0;
        let (yaw, tilt) = quaternion_yaw([half.cos(), 0.0, 0.0, half.sin()]);
        assert!((yaw - FRAC_PI_2).abs() < 1e-12);
        assert!(tilt < 1e-12);
    }

    #[test]
    fn tilted_quaternion_flags_tilt() {
        let a: f64 = 0.2;
        let (_, tilt) = quaternion_yaw([(a / 2.0).cos(), (a / 2.0).sin(), 0.0, 0.0]);
        assert!((tilt - 0.2).abs() < 1e-9);
    }

    #[test]
    fn categories_collapse() {
        assert_eq!(normalize_category("human.pedestrian.adult"), "pedestrian");
        assert_eq!(normalize_category("vehicle.car"), "car");
        assert_eq!(normalize_category("movable_object.trafficcone"), "traffic cone");
        assert_eq!(normalize_category("animal"), "animal");
        assert_eq!(status_from_attribute(Some("vehicle.parked")), "parked");
        assert_eq!(status_from_attribute(Some("cycle.without_rider")), "without rider");
    }

    #[test]
    fn interpolation_midpoint() {
        let poses = [
            PoseAt { t_us: 0, x: 0.0, y: 0.0, yaw: 3.0 },
            PoseAt { t_us: 10, x: 10.0, y: 2.0, yaw: -3.0 },
        ];
        let m = interpolate(&poses, 5);
        assert!((m.x - 5.0).abs() < 1e-12 && (m.y - 1.0).abs() < 1e-12);
        // shortest way round through pi
        assert!((m.yaw.abs() - std::f64::consts::PI).abs() < 1e-9);
    }
}
