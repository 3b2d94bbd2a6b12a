//! Meta-action classification: a steering level plus a speed level on each
//! ego axis, decided by thresholds over the observation-time accelerations
//! and the future trajectory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScenarioBundle;
use crate::motion::{bundle_motion_context, MotionContext, TrajectoryWindow, WindowConfig};

/// The seven classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSpace {
    /// Lateral acceleration bounds, m/s^2.
    pub eps_ax_min: f64,
    pub eps_ax_max: f64,
    /// Longitudinal acceleration bounds, m/s^2.
    pub eps_ay_min: f64,
    pub eps_ay_max: f64,
    /// Idle speed, m/s.
    pub eps_v: f64,
    /// Lateral displacement, m.
    pub eps_dx: f64,
    /// Cumulative yaw change, rad.
    pub eps_dtheta: f64,
}

impl Default for ThresholdSpace {
    fn default() -> Self {
        ThresholdSpace {
            eps_ax_min: -0.3,
            eps_ax_max: 0.3,
            eps_ay_min: -0.5,
            eps_ay_max: 0.5,
            eps_v: 0.2,
            eps_dx: 0.75,
            eps_dtheta: 0.1,
        }
    }
}

impl ThresholdSpace {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.eps_ax_min,
            self.eps_ax_max,
            self.eps_ay_min,
            self.eps_ay_max,
            self.eps_v,
            self.eps_dx,
            self.eps_dtheta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        if self.eps_ax_min >= self.eps_ax_max {
            return Err(Error::Config("eps_ax_min must be < eps_ax_max".into()));
        }
        if self.eps_ay_min >= self.eps_ay_max {
            return Err(Error::Config("eps_ay_min must be < eps_ay_max".into()));
        }
        if self.eps_v <= 0.0 || self.eps_dx <= 0.0 || self.eps_dtheta <= 0.0 {
            return Err(Error::Config("eps_v, eps_dx and eps_dtheta must be > 0".into()));
        }
        Ok(())
    }

    pub fn lateral_bounds(&self) -> (f64, f64) {
        (self.eps_ax_min, self.eps_ax_max)
    }

    pub fn longitudinal_bounds(&self) -> (f64, f64) {
        (self.eps_ay_min, self.eps_ay_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeedLevel {
    Decelerating,
    Constant,
    Accelerating,
}

impl SpeedLevel {
    pub const ALL: [SpeedLevel; 3] = [SpeedLevel::Decelerating, SpeedLevel::Constant, SpeedLevel::Accelerating];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpeedLevel::Decelerating => "decelerating",
            SpeedLevel::Constant => "constant",
            SpeedLevel::Accelerating => "accelerating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SteeringLevel {
    Idle,
    MoveStraight,
    SlightLeft,
    SlightRight,
    TurnLeft,
    TurnRight,
}

impl SteeringLevel {
    pub const ALL: [SteeringLevel; 6] = [
        SteeringLevel::Idle,
        SteeringLevel::MoveStraight,
        SteeringLevel::SlightLeft,
        SteeringLevel::SlightRight,
        SteeringLevel::TurnLeft,
        SteeringLevel::TurnRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SteeringLevel::Idle => "idle",
            SteeringLevel::MoveStraight => "move straight",
            SteeringLevel::SlightLeft => "slight left",
            SteeringLevel::SlightRight => "slight right",
            SteeringLevel::TurnLeft => "turn left",
            SteeringLevel::TurnRight => "turn right",
        }
    }

    pub fn mirrored(&self) -> SteeringLevel {
        match self {
            SteeringLevel::SlightLeft => SteeringLevel::SlightRight,
            SteeringLevel::SlightRight => SteeringLevel::SlightLeft,
            SteeringLevel::TurnLeft => SteeringLevel::TurnRight,
            SteeringLevel::TurnRight => SteeringLevel::TurnLeft,
            other => *other,
        }
    }
}

macro_rules! text_enum {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                <$t>::ALL
                    .iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .copied()
                    .ok_or_else(|| Error::validation(stringify!($t), format!("unknown level '{s}'")))
            }
        }
    };
}

text_enum!(SpeedLevel);
text_enum!(SteeringLevel);

/// `(lateral speed level, steering level, longitudinal speed level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaActionLabel {
    sp_x: SpeedLevel,
    st: SteeringLevel,
    sp_y: SpeedLevel,
}

impl MetaActionLabel {
    /// Builds a label; an idle steering level forces both speed levels to
    /// constant.
    pub fn new(sp_x: SpeedLevel, st: SteeringLevel, sp_y: SpeedLevel) -> Self {
        if st == SteeringLevel::Idle {
            MetaActionLabel {
                sp_x: SpeedLevel::Constant,
                st,
                sp_y: SpeedLevel::Constant,
            }
        } else {
            MetaActionLabel { sp_x, st, sp_y }
        }
    }

    pub fn lateral(&self) -> SpeedLevel {
        self.sp_x
    }

    pub fn steering(&self) -> SteeringLevel {
        self.st
    }

    pub fn longitudinal(&self) -> SpeedLevel {
        self.sp_y
    }

    /// `"<steering>, <longitudinal> longitudinally, <lateral> laterally"`
    pub fn text(&self) -> String {
        format!("{}, {} longitudinally, {} laterally", self.st, self.sp_y, self.sp_x)
    }

    /// Every label reachable under the idle collapse.
    pub fn label_space() -> Vec<MetaActionLabel> {
        let mut out: Vec<MetaActionLabel> = SteeringLevel::ALL
            .iter()
            .flat_map(|&st| {
                SpeedLevel::ALL
                    .iter()
                    .flat_map(move |&x| SpeedLevel::ALL.iter().map(move |&y| MetaActionLabel::new(x, st, y)))
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for MetaActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl FromStr for MetaActionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation("meta_action", format!("unparseable label '{s}'"));
        let parts: Vec<&str> = s.trim().trim_end_matches('.').split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let st: SteeringLevel = parts[0].parse()?;
        let sp_y: SpeedLevel = parts[1].strip_suffix(" longitudinally").ok_or_else(bad)?.parse()?;
        let sp_x: SpeedLevel = parts[2].strip_suffix(" laterally").ok_or_else(bad)?.parse()?;
        Ok(MetaActionLabel::new(sp_x, st, sp_y))
    }
}

impl Serialize for MetaActionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for MetaActionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed-interval rule: values on a bound are constant.
pub fn classify_speed_level(a: f64, (eps_min, eps_max): (f64, f64)) -> SpeedLevel {
    if a < eps_min {
        SpeedLevel::Decelerating
    } else if a > eps_max {
        SpeedLevel::Accelerating
    } else {
        SpeedLevel::Constant
    }
}

/// Hierarchical steering rules, evaluated in order: idle, move straight,
/// turn (yaw change reaches the threshold), otherwise slight. Turn and
/// slight sides are the sign at the first timestep that exceeds the
/// respective threshold, positive meaning left.
pub fn classify_steering(future: &TrajectoryWindow, v_obs: f64, omega: &ThresholdSpace) -> SteeringLevel {
    if v_obs < omega.eps_v && future.speeds.iter().all(|&v| v < omega.eps_v) {
        return SteeringLevel::Idle;
    }
    let straight = future
        .headings
        .iter()
        .zip(&future.points)
        .all(|(dth, p)| dth.abs() < omega.eps_dtheta && p.y.abs() < omega.eps_dx);
    if straight {
        return SteeringLevel::MoveStraight;
    }
    if let Some(dth) = future.headings.iter().find(|d| d.abs() >= omega.eps_dtheta) {
        return if *dth > 0.0 {
            SteeringLevel::TurnLeft
        } else {
            SteeringLevel::TurnRight
        };
    }
    let dx = future
        .points
        .iter()
        .map(|p| p.y)
        .find(|y| y.abs() >= omega.eps_dx)
        .unwrap_or(0.0);
    if dx > 0.0 {
        SteeringLevel::SlightLeft
    } else {
        SteeringLevel::SlightRight
    }
}

pub fn classify_context(ctx: &MotionContext, omega: &ThresholdSpace) -> MetaActionLabel {
    let st = classify_steering(&ctx.future, ctx.current.v, omega);
    MetaActionLabel::new(
        classify_speed_level(ctx.current.a_lat, omega.lateral_bounds()),
        st,
        classify_speed_level(ctx.current.a_lon, omega.longitudinal_bounds()),
    )
}

pub fn classify_meta_action(b: &ScenarioBundle, omega: &ThresholdSpace, w: &WindowConfig) -> Result<MetaActionLabel> {
    Ok(classify_context(&bundle_motion_context(b, w)?, omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use proptest::prelude::*;

    fn window(points: Vec<(f64, f64)>, headings: Vec<f64>, speeds: Vec<f64>) -> TrajectoryWindow {
        TrajectoryWindow {
            t_obs: 0.0,
            history_s: 0.0,
            future_s: 3.0,
            dt: 0.5,
            points: points.into_iter().map(|(x, y)| Point2::new(x, y)).collect(),
            headings,
            speeds,
        }
    }

    /// Table-driven oracle over signs and bounds.
    #[test]
    fn speed_level_table() {
        let b = (-0.5, 0.5);
        let table = [
            (0.0, SpeedLevel::Constant),
            (0.5, SpeedLevel::Constant),
            (-0.5, SpeedLevel::Constant),
            (1.2, SpeedLevel::Accelerating),
            (0.5000001, SpeedLevel::Accelerating),
            (-1.2, SpeedLevel::Decelerating),
            (-0.5000001, SpeedLevel::Decelerating),
        ];
        for (a, want) in table {
            assert_eq!(classify_speed_level(a, b), want, "a = {a}");
        }
    }

    #[test]
    fn all_zero_is_idle() {
        let w = window(vec![(0.0, 0.0); 6], vec![0.0; 6], vec![0.0; 6]);
        assert_eq!(classify_steering(&w, 0.0, &ThresholdSpace::default()), SteeringLevel::Idle);
    }

    #[test]
    fn straight_line() {
        let w = window((1..=6).map(|k| (2.5 * k as f64, 0.0)).collect(), vec![0.0; 6], vec![5.0; 6]);
        assert_eq!(classify_steering(&w, 5.0, &ThresholdSpace::default()), SteeringLevel::MoveStraight);
    }

    #[test]
    fn quarter_circle_is_turn_left() {
        // r = 10 m, v = 5 m/s: yaw change 0.25 rad per step, 1.5 rad at 3 s
        let pts = (1..=6)
            .map(|k| {
                let th = 0.25 * k as f64;
                (10.0 * th.sin(), 10.0 * (1.0 - th.cos()))
            })
            .collect();
        let hd = (1..=6).map(|k| 0.25 * k as f64).collect();
        let w = window(pts, hd, vec![5.0; 6]);
        assert_eq!(classify_steering(&w, 5.0, &ThresholdSpace::default()), SteeringLevel::TurnLeft);
    }

    #[test]
    fn lane_change_is_slight_left() {
        let ys = [0.1, 0.4, 0.8, 1.2, 1.45, 1.5];
        let hd = [0.02, 0.05, 0.06, 0.05, 0.02, 0.0];
        let pts = ys.iter().enumerate().map(|(k, &y)| (5.0 * (k + 1) as f64, y)).collect();
        let w = window(pts, hd.to_vec(), vec![10.0; 6]);
        assert_eq!(classify_steering(&w, 10.0, &ThresholdSpace::default()), SteeringLevel::SlightLeft);
    }

    #[test]
    fn s_curve_uses_first_exceeding_step() {
        let hd = vec![0.0, -0.15, 0.0, 0.3, 0.2, 0.0];
        let w = window(vec![(1.0, 0.0); 6], hd, vec![5.0; 6]);
        assert_eq!(classify_steering(&w, 5.0, &ThresholdSpace::default()), SteeringLevel::TurnRight);
    }

    #[test]
    fn idle_collapses_speeds() {
        let l = MetaActionLabel::new(SpeedLevel::Accelerating, SteeringLevel::Idle, SpeedLevel::Decelerating);
        assert_eq!(l.text(), "idle, constant longitudinally, constant laterally");
    }

    #[test]
    fn label_text_round_trip() {
        for l in MetaActionLabel::label_space() {
            assert_eq!(l.text().parse::<MetaActionLabel>().unwrap(), l);
        }
        assert!("turn left, fast".parse::<MetaActionLabel>().is_err());
    }

    #[test]
    fn reachable_label_count() {
        assert_eq!(MetaActionLabel::label_space().len(), 1 + 5 * 3 * 3);
    }

    #[test]
    fn threshold_validation() {
        assert!(ThresholdSpace::default().validate().is_ok());
        let bad = ThresholdSpace { eps_ax_min: 0.4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ThresholdSpace { eps_v: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn arb_window() -> impl Strategy<Value = (TrajectoryWindow, f64)> {
        (
            proptest::collection::vec((-3.0f64..3.0, -0.4f64..0.4, 0.0f64..0.6), 6),
            0.0f64..0.6,
        )
            .prop_map(|(steps, v_obs)| {
                let pts = steps.iter().enumerate().map(|(k, s)| (k as f64, s.0)).collect();
                let hd = steps.iter().map(|s| s.1).collect();
                let sp = steps.iter().map(|s| s.2).collect();
                (window(pts, hd, sp), v_obs)
            })
    }

    fn rank(s: SteeringLevel) -> u8 {
        match s {
            SteeringLevel::TurnLeft | SteeringLevel::TurnRight => 0,
            SteeringLevel::SlightLeft | SteeringLevel::SlightRight => 1,
            SteeringLevel::MoveStraight => 2,
            SteeringLevel::Idle => 3,
        }
    }

    proptest! {
        #[test]
        fn mirror_swaps_sides((w, v) in arb_window()) {
            let omega = ThresholdSpace::default();
            let mut m = w.clone();
            for p in &mut m.points { p.y = -p.y; }
            for h in &mut m.headings { *h = -*h; }
            prop_assert_eq!(classify_steering(&m, v, &omega), classify_steering(&w, v, &omega).mirrored());
        }

        #[test]
        fn raising_thresholds_only_relaxes((w, v) in arb_window(), lo in 0.01f64..0.5, hi in 0.0f64..0.5) {
            let base = ThresholdSpace::default();
            let a = ThresholdSpace { eps_dtheta: lo, ..base };
            let b = ThresholdSpace { eps_dtheta: lo + hi, ..base };
            prop_assert!(rank(classify_steering(&w, v, &a)) <= rank(classify_steering(&w, v, &b)));
            let a = ThresholdSpace { eps_dx: lo * 4.0, ..base };
            let b = ThresholdSpace { eps_dx: (lo + hi) * 4.0, ..base };
            let (ra, rb) = (classify_steering(&w, v, &a), classify_steering(&w, v, &b));
            prop_assert!(rank(ra) <= rank(rb));
            if rank(ra) == 0 { prop_assert_eq!(ra, rb); }
        }
    }
}
