#!/usr/bin/env python3
"""Writes the 20 analytic scenario bundles and their hand-derived labels.

Ego motion is closed form: constant-curvature arcs with a constant
along-path acceleration, or a cosine lane change on top of a straight line.
Run from anywhere; output goes next to this script.
"""

import json
import math
from pathlib import Path

HERE = Path(__file__).resolve().parent
OUT = HERE / "scenarios"
EXPECTED = HERE / "expected"

DT = 0.1
T_END = 5.0
T_OBS = 2.0
WHEELBASE = 2.588
FRAME_DT = 0.5
T0_US = 1_600_000_000_000_000


# -- canonical text -------------------------------------------------------

def fmt_float(x):
    s = f"{x:.6f}"
    if s.startswith("-") and set(s[1:]) <= set("0."):
        s = s[1:]
    return s


def dump(v, depth=0):
    pad = "  " * (depth + 1)
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        if not v:
            return "[]"
        items = [pad + dump(x, depth + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + "  " * depth + "]"
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [pad + json.dumps(k) + ": " + dump(v[k], depth + 1) for k in sorted(v)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * depth + "}"
    raise TypeError(type(v))


def r6(x):
    return round(x, 6) + 0.0


def wrap(a):
    a = math.fmod(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


# -- ego motion -----------------------------------------------------------

def times():
    n = int(round(T_END / DT))
    return [i * DT for i in range(n + 1)]


def arc(v0, acc=0.0, kappa=0.0, yaw0=0.0, x0=0.0, y0=0.0, stop=True):
    """Path with curvature `kappa` (left positive); speed v0 + acc*t,
    clamped at zero when `stop`."""
    out = []
    for t in times():
        if acc < 0 and stop and v0 + acc * t < 0:
            ts = -v0 / acc
            s = v0 * ts + 0.5 * acc * ts * ts
            v = 0.0
        else:
            s = v0 * t + 0.5 * acc * t * t
            v = v0 + acc * t
        th = yaw0 + kappa * s
        if kappa == 0.0:
            x = x0 + s * math.cos(yaw0)
            y = y0 + s * math.sin(yaw0)
        else:
            x = x0 + (math.sin(th) - math.sin(yaw0)) / kappa
            y = y0 - (math.cos(th) - math.cos(yaw0)) / kappa
        delta = math.degrees(math.atan(WHEELBASE * kappa)) if v > 0 else 0.0
        out.append((t, x, y, wrap(th), v, delta))
    return out


def start_from_stop(acc, t_go):
    out = []
    for t in times():
        tau = max(0.0, t - t_go)
        out.append((t, 0.5 * acc * tau * tau, 0.0, 0.0, acc * tau, 0.0))
    return out


def lane_change(vx0, ax, amp, t0, dur):
    """x(t) = vx0 t + ax t^2 / 2; y rises by `amp` along half a cosine
    between t0 and t0 + dur."""
    w = math.pi / dur
    out = []
    for t in times():
        x = vx0 * t + 0.5 * ax * t * t
        vx = vx0 + ax * t
        if t <= t0:
            y, vy, ay = 0.0, 0.0, 0.0
        elif t >= t0 + dur:
            y, vy, ay = amp, 0.0, 0.0
        else:
            y = 0.5 * amp * (1 - math.cos(w * (t - t0)))
            vy = 0.5 * amp * w * math.sin(w * (t - t0))
            ay = 0.5 * amp * w * w * math.cos(w * (t - t0))
        v = math.hypot(vx, vy)
        kappa = (vx * ay - vy * ax) / v ** 3
        out.append((t, x, y, math.atan2(vy, vx), v, math.degrees(math.atan(WHEELBASE * kappa))))
    return out


def mirror(samples):
    return [(t, x, -y, wrap(-yaw) if yaw != 0 else 0.0, v, -d + 0.0) for t, x, y, yaw, v, d in samples]


# -- scene ----------------------------------------------------------------

def ego_at(ego, t):
    return min(ego, key=lambda s: abs(s[0] - t))


def to_local(pose, x, y):
    _, px, py, yaw, _, _ = pose
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = x - px, y - py
    return c * dx + s * dy, -s * dx + c * dy


def participant(ego, track_id, category, status, size, start, vel, yaw):
    """Straight-line track in world coordinates, sampled at FRAME_DT."""
    samples = []
    n = int(round(T_END / FRAME_DT))
    for i in range(n + 1):
        t = i * FRAME_DT
        samples.append({
            "t": r6(t),
            "x": r6(start[0] + vel[0] * t),
            "y": r6(start[1] + vel[1] * t),
            "yaw": r6(yaw),
        })
    current = int(round(T_OBS / FRAME_DT))
    pose = ego_at(ego, T_OBS)
    cur = samples[current]
    lx, ly = to_local(pose, cur["x"], cur["y"])
    history = [to_local(pose, s["x"], s["y"]) for s in samples[current - 3:current]]
    track = {
        "track_id": track_id,
        "category": category,
        "status": status,
        "size": {"length": r6(size[0]), "width": r6(size[1]), "height": r6(size[2])},
        "samples": samples,
        "current_index": current,
    }
    view = {
        "category": category,
        "status": status,
        "size": track["size"],
        "location": {"x": r6(lx), "y": r6(ly)},
        "orientation": r6(wrap(yaw - pose[3])),
        "history": [{"x": r6(x), "y": r6(y)} for x, y in history],
    }
    return track, view


def bundle(sid, ego, weather, road=None, facilities=(), actors=()):
    frames = int(round(T_END / FRAME_DT)) + 1
    views = {
        cam: [
            {"path": f"{sid}/{cam}/{i:03d}.jpg", "timestamp": T0_US + i * int(FRAME_DT * 1_000_000)}
            for i in range(frames)
        ]
        for cam in ("CAM_BACK", "CAM_FRONT")
    }
    tracks, parts = [], []
    for i, a in enumerate(actors):
        tr, pv = participant(ego, f"{sid}-p{i}", *a)
        tracks.append(tr)
        parts.append(pv)
    elements = {
        "weather": dict(zip(("type", "time", "level"), weather)),
        "road": dict(zip(("type", "structure", "direction", "function"), road)) if road else None,
        "facilities": [dict(zip(("kind", "type", "direction"), f)) for f in facilities],
        "participants": parts,
    }
    return {
        "scenario_id": sid,
        "dt": DT,
        "views": views,
        "bev_map": f"{sid}/bev.png",
        "ego": [
            {"t": r6(t), "x": r6(x), "y": r6(y), "yaw": r6(yaw), "v": r6(v), "delta": r6(d)}
            for t, x, y, yaw, v, d in ego
        ],
        "participants": tracks,
        "elements": elements,
    }


CAR = (4.6, 1.9, 1.6)
TRUCK = (8.5, 2.5, 3.4)
PED = (0.6, 0.6, 1.75)
BIKE = (1.8, 0.6, 1.7)

URBAN = ("urban", "straight", "two-way", "through")
CROSS = ("urban", "intersection", "two-way", "junction")
HIGHWAY = ("highway", "straight", "one-way", "through")


def corpus():
    s = []
    add = lambda sid, label, ego, *a, **k: s.append((sid, label, bundle(sid, ego, *a, **k)))

    add("s01_idle_weather_only", "idle, constant longitudinally, constant laterally",
        arc(0.0), ("clear", "day", "easy"))
    add("s02_idle_creep", "idle, constant longitudinally, constant laterally",
        arc(0.1), ("cloudy", "day", "easy"), URBAN,
        actors=[("pedestrian", "moving", PED, (6.0, 3.0), (0.0, -1.2), -math.pi / 2)])
    add("s03_cruise", "move straight, constant longitudinally, constant laterally",
        arc(10.0), ("sunny", "day", "easy"), HIGHWAY,
        facilities=[("marking", "lane divider", "forward")],
        actors=[("car", "moving", CAR, (45.0, 0.2), (10.0, 0.0), 0.0)])
    add("s04_cruise_rotated", "move straight, constant longitudinally, constant laterally",
        arc(8.0, yaw0=0.7, x0=120.0, y0=-40.0), ("rainy", "dusk", "moderate"), URBAN,
        actors=[("truck", "parked", TRUCK, (150.0, -10.0), (0.0, 0.0), 0.7)])
    add("s05_accelerate", "move straight, accelerating longitudinally, constant laterally",
        arc(4.0, acc=1.5), ("clear", "day", "easy"), URBAN,
        facilities=[("sign", "speed limit sign", "forward")])
    add("s06_decelerate", "move straight, decelerating longitudinally, constant laterally",
        arc(14.0, acc=-2.0), ("foggy", "day", "hard"), HIGHWAY,
        actors=[("car", "stopped", CAR, (50.0, 0.0), (0.0, 0.0), 0.0)])
    add("s07_mild_accel", "move straight, constant longitudinally, constant laterally",
        arc(6.0, acc=0.3), ("cloudy", "night", "moderate"), URBAN)
    add("s08_start_from_stop", "move straight, accelerating longitudinally, constant laterally",
        start_from_stop(2.0, T_OBS), ("clear", "day", "easy"), CROSS,
        facilities=[("sign", "traffic light", "forward"), ("marking", "stop line", "forward")])
    add("s09_left_arc", "turn left, constant longitudinally, accelerating laterally",
        arc(8.0, kappa=1 / 40), ("clear", "day", "easy"), ("urban", "curve", "two-way", "through"),
        actors=[("cyclist", "moving", BIKE, (10.0, 6.0), (4.0, 0.0), 0.0)])
    add("s10_right_arc", "turn right, constant longitudinally, decelerating laterally",
        mirror(arc(8.0, kappa=1 / 40)), ("clear", "day", "easy"), ("urban", "curve", "two-way", "through"))
    add("s11_left_arc_slow", "turn left, decelerating longitudinally, constant laterally",
        arc(4.1, acc=-0.8, kappa=1 / 30), ("rainy", "night", "hard"), CROSS,
        facilities=[("sign", "yield sign", "left")],
        actors=[("bus", "moving", (12.0, 2.6, 3.2), (-20.0, 25.0), (6.0, 0.0), 0.0)])
    add("s12_right_arc_slow", "turn right, decelerating longitudinally, constant laterally",
        mirror(arc(4.1, acc=-0.8, kappa=1 / 30)), ("rainy", "night", "hard"), CROSS)
    add("s13_left_arc_accel", "turn left, accelerating longitudinally, accelerating laterally",
        arc(3.0, acc=1.0, kappa=1 / 50), ("sunny", "day", "easy"), ("residential", "curve", "two-way", "access"))
    add("s14_right_turn_tight", "turn right, constant longitudinally, decelerating laterally",
        mirror(arc(5.0, kappa=1 / 12)), ("cloudy", "day", "moderate"), CROSS,
        facilities=[("marking", "turn arrow", "right"), ("marking", "crosswalk", "right")],
        actors=[("pedestrian", "standing", PED, (14.0, -8.0), (0.0, 0.0), math.pi / 2),
                ("car", "moving", CAR, (-15.0, 0.0), (5.0, 0.0), 0.0)])
    add("s15_lane_change_left", "slight left, constant longitudinally, accelerating laterally",
        lane_change(10.0, 0.0, 1.5, T_OBS, 3.0), ("clear", "day", "easy"), HIGHWAY,
        actors=[("truck", "moving", TRUCK, (30.0, 0.0), (8.0, 0.0), 0.0)])
    add("s16_lane_change_right", "slight right, constant longitudinally, decelerating laterally",
        mirror(lane_change(10.0, 0.0, 1.5, T_OBS, 3.0)), ("clear", "day", "easy"), HIGHWAY)
    add("s17_lane_change_left_braking", "slight left, decelerating longitudinally, accelerating laterally",
        lane_change(14.0, -1.0, 1.5, T_OBS, 3.0), ("snowy", "day", "hard"), URBAN,
        actors=[("car", "stopped", CAR, (45.0, 0.0), (0.0, 0.0), 0.0)])
    add("s18_swerve_left", "turn left, constant longitudinally, accelerating laterally",
        lane_change(10.0, 0.0, 3.5, T_OBS, 3.0), ("clear", "day", "easy"), URBAN,
        actors=[("barrier", "stationary", (2.0, 0.5, 1.0), (40.0, 0.0), (0.0, 0.0), 0.0)])
    add("s19_stop", "move straight, decelerating longitudinally, constant laterally",
        arc(7.0, acc=-2.0), ("clear", "night", "moderate"), CROSS,
        facilities=[("sign", "stop sign", "forward")],
        actors=[("motorcycle", "moving", (2.2, 0.8, 1.4), (12.0, -12.0), (0.0, 5.0), math.pi / 2)])
    add("s20_u_turn", "turn left, constant longitudinally, accelerating laterally",
        arc(4.0, kappa=1 / 6, yaw0=2.5), ("cloudy", "dusk", "moderate"), ("urban", "roundabout", "one-way", "junction"),
        facilities=[("sign", "no entry sign", "right")])
    return s


def scene_rounds(b):
    """Question options that apply: three weather, four road, two per
    facility, five per participant plus one when it has a history."""
    e = b["elements"]
    n = 3 if e["weather"] else 0
    n += 4 if e["road"] else 0
    n += 2 * len(e["facilities"])
    n += sum(6 if p["history"] else 5 for p in e["participants"])
    return n


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    EXPECTED.mkdir(parents=True, exist_ok=True)
    labels, tasks = {}, {}
    for sid, label, b in corpus():
        (OUT / f"{sid}.json").write_text(dump(b) + "\n")
        labels[sid] = label
        tasks[f"{sid}:e2e"] = ["Z_sce"] * scene_rounds(b) + ["Z_act", "Z_int", "Z_mot", "Z_sig"]
    (EXPECTED / "labels.json").write_text(dump(labels) + "\n")
    (EXPECTED / "e2e_tasks.json").write_text(dump(tasks) + "\n")


if __name__ == "__main__":
    main()
