"""Writes fixtures/nuscenes_mini: two scenes in the nuScenes table layout.

cruise_diag  ego at 5 m/s along world heading 0.6 rad from (100, 200);
             a car 15 m ahead and 3.5 m right of the ego at t = 2 s, parked;
             a pedestrian crossing; one ego pose tilted by 0.1 rad roll.
brake_north  ego heading +pi/2, x(t) = 8 t - 0.5 t^2 along the heading.

Keyframes every 0.5 s over 0..5 s, two cameras per keyframe.
"""

import json
import math
import os

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "nuscenes_mini")
T0 = 1_600_000_000_000_000
CAMS = ["CAM_BACK", "CAM_FRONT"]


def quat(yaw, roll=0.0):
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    return [cr * cy, sr * cy, sr * sy, cr * sy]


def world(origin, yaw, fwd, left):
    x0, y0 = origin
    return (x0 + fwd * math.cos(yaw) - left * math.sin(yaw), y0 + fwd * math.sin(yaw) + left * math.cos(yaw))


tables = {k: [] for k in ["scene", "sample", "sample_data", "ego_pose", "sample_annotation", "instance"]}


def scene(name, origin, yaw, s_of_t, actors, tilt_at=None):
    scene_tok = f"{name}-scene"
    n = 11
    for i in range(n):
        t = i * 0.5
        ts = T0 + int(round(t * 1e6))
        s_tok = f"{name}-sample-{i:02d}"
        tables["sample"].append({"token": s_tok, "timestamp": ts, "scene_token": scene_tok})
        x, y = world(origin, yaw, s_of_t(t), 0.0)
        pose_tok = f"{name}-pose-{i:02d}"
        roll = 0.1 if i == tilt_at else 0.0
        tables["ego_pose"].append({"token": pose_tok, "timestamp": ts, "translation": [x, y, 0.0], "rotation": quat(yaw, roll)})
        for cam in CAMS:
            tables["sample_data"].append({
                "sample_token": s_tok,
                "ego_pose_token": pose_tok,
                "timestamp": ts,
                "filename": f"samples/{cam}/{name}__{cam}__{ts}.jpg",
                "is_key_frame": True,
            })
        for a in actors:
            fwd, left = a["pos"](t)
            ax, ay = world(origin, yaw, fwd, left)
            tables["sample_annotation"].append({
                "sample_token": s_tok,
                "instance_token": a["token"],
                "translation": [ax, ay, 0.8],
                "size": a["size"],
                "rotation": quat(yaw + a["rel_yaw"]),
                "category_name": a["category"],
                "attribute_name": a["attribute"],
            })
    for a in actors:
        tables["instance"].append({"token": a["token"]})
    tables["scene"].append({"token": scene_tok, "name": name, "first_sample_token": f"{name}-sample-00"})


# Ego path length at t: 5 t; the parked car sits at path length 10 + 15 = 25, 3.5 m right.
scene(
    "cruise_diag",
    (100.0, 200.0),
    0.6,
    lambda t: 5.0 * t,
    [
        {"token": "cruise-car", "pos": lambda t: (25.0, -3.5), "size": [1.9, 4.5, 1.6], "rel_yaw": 0.0,
         "category": "vehicle.car", "attribute": "vehicle.parked"},
        {"token": "cruise-ped", "pos": lambda t: (30.0, -6.0 + 1.2 * t), "size": [0.6, 0.7, 1.75],
         "rel_yaw": math.pi / 2, "category": "human.pedestrian.adult", "attribute": "pedestrian.moving"},
    ],
    tilt_at=3,
)
scene("brake_north", (-40.0, 10.0), math.pi / 2, lambda t: 8.0 * t - 0.5 * t * t, [])

os.makedirs(ROOT, exist_ok=True)
for name, rows in tables.items():
    with open(os.path.join(ROOT, f"{name}.json"), "w") as f:
        json.dump(rows, f, indent=1)
        f.write("\n")
