//! Ego motion: history/future windows in the observation-time ego frame,
//! derived control signals, and the text grammar carrying them.
//!
//! Motion block grammar (two lines, two-decimal fixed point):
//!
//! ```text
//! Trajectory: (x1,y1) (x2,y2) ... (xN,yN)
//! Controls: speed=<v> angle=<delta> accel=<a> rate=<delta_rate>
//! ```

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::ingest::{EgoMotionSample, ScenarioBundle};

const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub history_s: f64,
    pub future_s: f64,
    pub dt: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            history_s: 2.0,
            future_s: 3.0,
            dt: 0.5,
        }
    }
}

impl WindowConfig {
    pub fn history_steps(&self) -> usize {
        (self.history_s / self.dt).round() as usize
    }

    pub fn future_steps(&self) -> usize {
        (self.future_s / self.dt).round() as usize
    }
}

/// Ego-frame trajectory window anchored at `t_obs`.
///
/// The history window holds `history_steps + 1` points ending at the origin;
/// the future window holds `future_steps` points strictly after `t_obs`.
/// `headings` is the cumulative yaw change since `t_obs` and `speeds` the
/// ego speed at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    pub t_obs: f64,
    pub history_s: f64,
    pub future_s: f64,
    pub dt: f64,
    pub points: Vec<Point2>,
    pub headings: Vec<f64>,
    pub speeds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub t: f64,
    pub v: f64,
    /// Steering angle, degrees.
    pub delta: f64,
    /// Longitudinal speed change rate, m/s^2.
    pub a: f64,
    /// Steering rate, deg/s.
    pub delta_rate: f64,
    /// Ego-frame longitudinal acceleration, m/s^2.
    pub a_lon: f64,
    /// Ego-frame lateral acceleration (left positive), m/s^2.
    pub a_lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignalSeries {
    pub records: Vec<ControlRecord>,
}

/// Ground-truth control target: next-step speed and steering angle,
/// current-step acceleration and steering rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTuple {
    pub speed: f64,
    pub angle: f64,
    pub accel: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialControls {
    pub speed: Option<f64>,
    pub angle: Option<f64>,
    pub accel: Option<f64>,
    pub rate: Option<f64>,
}

impl PartialControls {
    pub fn complete(&self) -> Option<ControlTuple> {
        Some(ControlTuple {
            speed: self.speed?,
            angle: self.angle?,
            accel: self.accel?,
            rate: self.rate?,
        })
    }
}

impl From<ControlTuple> for PartialControls {
    fn from(c: ControlTuple) -> Self {
        PartialControls {
            speed: Some(c.speed),
            angle: Some(c.angle),
            accel: Some(c.accel),
            rate: Some(c.rate),
        }
    }
}

/// Ego state at time `t`, linearly interpolated between samples (yaw along
/// the shorter arc). Times within a microsecond of a sample return it exactly.
pub fn ego_state_at(ego: &[EgoMotionSample], t: f64) -> Option<EgoMotionSample> {
    let first = ego.first()?;
    let last = ego.last()?;
    if t < first.t - TIME_EPS || t > last.t + TIME_EPS {
        return None;
    }
    let idx = ego.partition_point(|s| s.t < t - TIME_EPS);
    let hit = ego.get(idx)?;
    if (hit.t - t).abs() <= TIME_EPS {
        return Some(*hit);
    }
    let a = ego[idx - 1];
    let b = *hit;
    let f = (t - a.t) / (b.t - a.t);
    let lerp = |p: f64, q: f64| p + f * (q - p);
    Some(EgoMotionSample {
        t,
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        yaw: wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw)),
        v: lerp(a.v, b.v),
        delta: lerp(a.delta, b.delta),
    })
}

fn span_error(ego: &[EgoMotionSample], from: f64, to: f64) -> Error {
    Error::Window {
        required_from: from,
        required_to: to,
        available_from: ego.first().map(|s| s.t).unwrap_or(f64::NAN),
        available_to: ego.last().map(|s| s.t).unwrap_or(f64::NAN),
    }
}

/// Ego samples on the uniform grid `t_obs - history .. t_obs + future` step `dt`.
pub fn resample_window(ego: &[EgoMotionSample], t_obs: f64, w: &WindowConfig) -> Result<Vec<EgoMotionSample>> {
    let from = t_obs - w.history_s;
    let to = t_obs + w.future_s;
    let nh = w.history_steps() as i64;
    let nf = w.future_steps() as i64;
    (-nh..=nf)
        .map(|k| ego_state_at(ego, t_obs + k as f64 * w.dt).ok_or_else(|| span_error(ego, from, to)))
        .collect()
}

fn window_from(grid: &[EgoMotionSample], origin: &EgoMotionSample, t_obs: f64, w: &WindowConfig, future: bool) -> TrajectoryWindow {
    let pose = Pose2 {
        x: origin.x,
        y: origin.y,
        yaw: origin.yaw,
    };
    let obs = w.history_steps();
    let mut headings = vec![0.0; grid.len()];
    for k in obs + 1..grid.len() {
        headings[k] = headings[k - 1] + wrap_angle(grid[k].yaw - grid[k - 1].yaw);
    }
    for k in (0..obs).rev() {
        headings[k] = headings[k + 1] - wrap_angle(grid[k + 1].yaw - grid[k].yaw);
    }
    let range = if future { obs + 1..grid.len() } else { 0..obs + 1 };
    TrajectoryWindow {
        t_obs,
        history_s: if future { 0.0 } else { w.history_s },
        future_s: if future { w.future_s } else { 0.0 },
        dt: w.dt,
        points: grid[range.clone()]
            .iter()
            .map(|s| pose.to_local(Point2::new(s.x, s.y)))
            .collect(),
        headings: headings[range.clone()].to_vec(),
        speeds: grid[range].iter().map(|s| s.v).collect(),
    }
}

/// Splits the ego series into a history window covering
/// `[t_obs - history, t_obs]` and a future window covering
/// `(t_obs, t_obs + future]`, both in the ego frame at `t_obs`.
pub fn split_windows(
    ego: &[EgoMotionSample],
    t_obs: f64,
    w: &WindowConfig,
) -> Result<(TrajectoryWindow, TrajectoryWindow)> {
    let grid = resample_window(ego, t_obs, w)?;
    let origin = grid[w.history_steps()];
    Ok((
        window_from(&grid, &origin, t_obs, w, false),
        window_from(&grid, &origin, t_obs, w, true),
    ))
}

/// Forward-difference control signals. The last sample copies the
/// penultimate sample's derivatives.
pub fn derive_kinematics(ego: &[EgoMotionSample]) -> Result<ControlSignalSeries> {
    if ego.len() < 2 {
        return Err(Error::Derivation(format!(
            "need at least 2 ego samples, got {}",
            ego.len()
        )));
    }
    let mut records = Vec::with_capacity(ego.len());
    for w in ego.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let dt = s1.t - s0.t;
        if !(dt > 0.0) {
            return Err(Error::Derivation(format!("non-increasing time at t = {}", s0.t)));
        }
        let (sin0, cos0) = s0.yaw.sin_cos();
        let (sin1, cos1) = s1.yaw.sin_cos();
        let ax = (s1.v * cos1 - s0.v * cos0) / dt;
        let ay = (s1.v * sin1 - s0.v * sin0) / dt;
        let mid = s0.yaw + 0.5 * wrap_angle(s1.yaw - s0.yaw);
        let (sm, cm) = mid.sin_cos();
        records.push(ControlRecord {
            t: s0.t,
            v: s0.v,
            delta: s0.delta,
            a: (s1.v - s0.v) / dt,
            delta_rate: (s1.delta - s0.delta) / dt,
            a_lon: cm * ax + sm * ay,
            a_lat: -sm * ax + cm * ay,
        });
    }
    let last = ego[ego.len() - 1];
    let prev = *records.last().expect("at least one record");
    records.push(ControlRecord {
        t: last.t,
        v: last.v,
        delta: last.delta,
        ..prev
    });
    Ok(ControlSignalSeries { records })
}

/// Everything the motion texts and the meta-action rules read for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionContext {
    pub history: TrajectoryWindow,
    pub future: TrajectoryWindow,
    /// Controls on the window grid, history part only (ends at `t_obs`).
    pub history_controls: Vec<ControlRecord>,
    /// Controls at `t_obs`.
    pub current: ControlRecord,
    pub target: ControlTuple,
}

pub fn motion_context(ego: &[EgoMotionSample], t_obs: f64, w: &WindowConfig) -> Result<MotionContext> {
    let grid = resample_window(ego, t_obs, w)?;
    let (history, future) = split_windows(ego, t_obs, w)?;
    let controls = derive_kinematics(&grid)?;
    let obs = w.history_steps();
    let current = controls.records[obs];
    let next = controls.records.get(obs + 1).copied().unwrap_or(current);
    Ok(MotionContext {
        history,
        future,
        history_controls: controls.records[..=obs].to_vec(),
        current,
        target: ControlTuple {
            speed: next.v,
            angle: next.delta,
            accel: current.a,
            rate: current.delta_rate,
        },
    })
}

pub fn bundle_motion_context(b: &ScenarioBundle, w: &WindowConfig) -> Result<MotionContext> {
    let t_obs = b
        .observation_time(w)
        .ok_or_else(|| Error::Derivation("empty ego series".into()))?;
    motion_context(&b.ego, t_obs, w)
}

/// Two-decimal fixed point without a negative zero.
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn points_text(points: &[Point2]) -> String {
    points
        .iter()
        .map(|p| format!("({},{})", fmt2(p.x), fmt2(p.y)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn trajectory_line(points: &[Point2]) -> String {
    format!("Trajectory: {}", points_text(points))
}

pub fn controls_line(c: &ControlTuple) -> String {
    format!(
        "Controls: speed={} angle={} accel={} rate={}",
        fmt2(c.speed),
        fmt2(c.angle),
        fmt2(c.accel),
        fmt2(c.rate)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionText {
    pub system_prompt: String,
    pub ground_truth: String,
}

/// Renders the system prompt (background, history trajectory and history
/// controls) and the ground-truth motion block.
pub fn render_motion_text(ctx: &MotionContext, background: &str) -> MotionText {
    let mut prompt = String::new();
    prompt.push_str(background);
    prompt.push('\n');
    prompt.push_str(&format!(
        "History ({} s, dt {} s, ego frame at the current time, x forward, y left, metres): {}\n",
        fmt2(ctx.history.history_s),
        fmt2(ctx.history.dt),
        points_text(&ctx.history.points)
    ));
    prompt.push_str("History controls:");
    for r in &ctx.history_controls {
        prompt.push_str(&format!(
            "\nt={} speed={} angle={} accel={} rate={}",
            fmt2(r.t - ctx.history.t_obs),
            fmt2(r.v),
            fmt2(r.delta),
            fmt2(r.a),
            fmt2(r.delta_rate)
        ));
    }
    MotionText {
        system_prompt: prompt,
        ground_truth: format!(
            "{}\n{}",
            trajectory_line(&ctx.future.points),
            controls_line(&ctx.target)
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMotion {
    pub future: TrajectoryWindow,
    pub controls: PartialControls,
}

fn trajectory_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Trajectory:((?:[ \t]*\([^()\n]*\))*)").expect("valid regex"))
}

fn point_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)").expect("valid regex")
    })
}

fn controls_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Controls:([^\n]*)").expect("valid regex"))
}

fn kv_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(speed|angle|accel|rate)=(-?\d+(?:\.\d+)?)").expect("valid regex"))
}

/// Parses the motion block out of free text. Surrounding prose is ignored;
/// the trajectory must carry exactly the configured number of future points.
pub fn parse_motion_response(text: &str, w: &WindowConfig) -> Result<ParsedMotion> {
    let caps = trajectory_re()
        .captures(text)
        .ok_or_else(|| Error::MotionParse("no motion block".into()))?;
    let body = caps.get(1).map(|m| m.as_str()).unwrap_or("");
    let mut points = Vec::new();
    for group in body.split(')').map(str::trim).filter(|g| !g.is_empty()) {
        let full = format!("{group})");
        let c = point_re()
            .captures(&full)
            .ok_or_else(|| Error::MotionParse(format!("malformed point '{full}'")))?;
        points.push(Point2::new(c[1].parse().unwrap_or(f64::NAN), c[2].parse().unwrap_or(f64::NAN)));
    }
    let expected = w.future_steps();
    if points.len() != expected {
        return Err(Error::MotionParse(format!(
            "expected {expected} points, found {}",
            points.len()
        )));
    }
    let mut controls = PartialControls::default();
    if let Some(line) = controls_re().captures(text) {
        for kv in kv_re().captures_iter(&line[1]) {
            let v: f64 = kv[2].parse().unwrap_or(f64::NAN);
            match &kv[1] {
                "speed" => controls.speed = Some(v),
                "angle" => controls.angle = Some(v),
                "accel" => controls.accel = Some(v),
                _ => controls.rate = Some(v),
            }
        }
    }
    let n = points.len();
    Ok(ParsedMotion {
        future: TrajectoryWindow {
            t_obs: 0.0,
            history_s: 0.0,
            future_s: w.future_s,
            dt: w.dt,
            points,
            headings: vec![0.0; n],
            speeds: vec![0.0; n],
        },
        controls,
    })
}
