#!/usr/bin/env python3
"""Regenerates the embodiment registry under configs/registry/.

The five robots are surrogate stand-ins: joint maps, PD gains, and inertial
numbers are project data, not vendor values. Keeping the generator in the
repo makes the registry reproducible and reviewable; rerun it after editing
the tables below.

Slot layout (32 unified slots):
  0-11  legs, right/left interleaved: hip pitch, hip roll, hip yaw, knee,
        ankle pitch, ankle roll (right = even, left = odd)
  12-14 waist roll, pitch, yaw
  15-17 head roll, pitch, yaw
  18-24 right arm: shoulder pitch/roll/yaw, elbow, wrist roll/pitch/yaw
  25-31 left arm, same order
"""

import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "configs" / "registry"

SLOT_NAMES = {
    0: "right_hip_pitch", 1: "left_hip_pitch",
    2: "right_hip_roll", 3: "left_hip_roll",
    4: "right_hip_yaw", 5: "left_hip_yaw",
    6: "right_knee", 7: "left_knee",
    8: "right_ankle_pitch", 9: "left_ankle_pitch",
    10: "right_ankle_roll", 11: "left_ankle_roll",
    12: "waist_roll", 13: "waist_pitch", 14: "waist_yaw",
    15: "head_roll", 16: "head_pitch", 17: "head_yaw",
    18: "right_shoulder_pitch", 19: "right_shoulder_roll",
    20: "right_shoulder_yaw", 21: "right_elbow",
    22: "right_wrist_roll", 23: "right_wrist_pitch", 24: "right_wrist_yaw",
    25: "left_shoulder_pitch", 26: "left_shoulder_roll",
    27: "left_shoulder_yaw", 28: "left_elbow",
    29: "left_wrist_roll", 30: "left_wrist_pitch", 31: "left_wrist_yaw",
}


def semantic(slot):
    name = SLOT_NAMES[slot]
    side = "left" if name.startswith("left") else ("right" if name.startswith("right") else "none")
    kind = name.replace("left_", "").replace("right_", "")
    return side, kind


# Default pose, PD gains, and actuation contributions keyed by joint kind.
DEFAULT_POSE = {
    "hip_pitch": -0.20, "hip_roll": 0.0, "hip_yaw": 0.0,
    "knee": 0.40, "ankle_pitch": -0.20, "ankle_roll": 0.0,
    "waist_roll": 0.0, "waist_pitch": 0.0, "waist_yaw": 0.0,
    "head_roll": 0.0, "head_pitch": 0.0, "head_yaw": 0.0,
    "shoulder_pitch": 0.25, "shoulder_roll": 0.10, "shoulder_yaw": 0.0,
    "elbow": 0.60, "wrist_roll": 0.0, "wrist_pitch": 0.0, "wrist_yaw": 0.0,
}
STIFFNESS = {
    "hip_pitch": 60, "hip_roll": 60, "hip_yaw": 60, "knee": 80,
    "ankle_pitch": 40, "ankle_roll": 40,
    "waist_roll": 80, "waist_pitch": 80, "waist_yaw": 80,
    "head_roll": 20, "head_pitch": 20, "head_yaw": 20,
    "shoulder_pitch": 40, "shoulder_roll": 40, "shoulder_yaw": 40,
    "elbow": 35, "wrist_roll": 15, "wrist_pitch": 15, "wrist_yaw": 15,
}
DAMPING = {
    "hip_pitch": 3.0, "hip_roll": 3.0, "hip_yaw": 3.0, "knee": 4.0,
    "ankle_pitch": 2.0, "ankle_roll": 2.0,
    "waist_roll": 4.0, "waist_pitch": 4.0, "waist_yaw": 4.0,
    "head_roll": 1.0, "head_pitch": 1.0, "head_yaw": 1.0,
    "shoulder_pitch": 2.0, "shoulder_roll": 2.0, "shoulder_yaw": 2.0,
    "elbow": 1.5, "wrist_roll": 0.5, "wrist_pitch": 0.5, "wrist_yaw": 0.5,
}
# Rows of the base actuation model: which joint kinds push which base rate.
ACTUATION = {
    "vx": {"hip_pitch": -0.25, "knee": 0.18, "ankle_pitch": -0.08},
    "vy": {"hip_roll": 0.28, "ankle_roll": 0.08},
    "yaw": {"hip_yaw": 0.40, "waist_yaw": 0.25},
    "height": {"knee": -0.22, "hip_pitch": -0.05},
    "pitch": {"hip_pitch": 0.15, "waist_pitch": 0.30, "head_pitch": 0.02},
}

ROBOTS = [
    dict(
        id=0, name="H1surrogate", height=0.98, swing=0.12, scale=1.00,
        torso=(17.5, (0.0, 0.0, 0.16)), foot=(0.65, 0.012),
        joint_map=[5, 3, 1, 7, 9, 4, 2, 0, 6, 8, 14,
                   25, 26, 27, 28, 18, 19, 20, 21],
    ),
    dict(
        id=1, name="G1surrogate", height=0.74, swing=0.08, scale=0.92,
        torso=(9.8, (0.0, 0.0, 0.12)), foot=(0.45, 0.007),
        joint_map=[1, 3, 5, 7, 9, 11, 0, 2, 4, 6, 8, 10, 14, 12, 13,
                   25, 26, 27, 28, 29, 30, 31, 18, 19, 20, 21, 22, 23, 24],
    ),
    dict(
        id=2, name="T1surrogate", height=0.68, swing=0.08, scale=1.08,
        torso=(8.2, (0.0, 0.0, 0.11)), foot=(0.40, 0.006),
        joint_map=[17, 16, 25, 26, 27, 28, 18, 19, 20, 21, 14,
                   1, 3, 5, 7, 9, 11, 0, 2, 4, 6, 8, 10],
    ),
    dict(
        id=3, name="N1surrogate", height=0.82, swing=0.09, scale=0.97,
        torso=(11.4, (0.0, 0.0, 0.13)), foot=(0.50, 0.008),
        joint_map=[1, 3, 5, 7, 9, 11, 0, 2, 4, 6, 8, 10, 14,
                   25, 26, 27, 28, 29, 18, 19, 20, 21, 22],
    ),
    dict(
        id=4, name="AdamSurrogate", height=0.92, swing=0.10, scale=1.03,
        torso=(14.6, (0.0, 0.0, 0.15)), foot=(0.55, 0.010),
        joint_map=[12, 13, 14, 1, 3, 5, 7, 9, 11, 0, 2, 4, 6, 8, 10,
                   25, 26, 27, 28, 29, 18, 19, 20, 21, 22],
    ),
]

LEG_KINDS = {"hip_pitch", "hip_roll", "hip_yaw", "knee", "ankle_pitch", "ankle_roll"}


def fmt(x):
    if isinstance(x, float):
        s = f"{x:.10g}"
        return s if ("." in s or "e" in s or "inf" in s or "nan" in s) else s + ".0"
    return str(x)


def fmt_list(xs):
    return "[" + ", ".join(fmt(x) for x in xs) + "]"


def body_yaml(mass, com, inertia):
    return (f"{{mass: {fmt(mass)}, com: {fmt_list(com)}, "
            f"inertia: {fmt_list(inertia)}}}")


def gen_robot(r):
    rng = random.Random(1234 + r["id"])
    jm = r["joint_map"]
    n = len(jm)
    kinds = []
    sides = []
    for s in jm:
        side, kind = semantic(s)
        sides.append(side)
        kinds.append(kind)

    default_pose = []
    for side, kind in zip(sides, kinds):
        v = DEFAULT_POSE[kind]
        if kind == "shoulder_roll":
            v = v if side == "left" else -v
        default_pose.append(round(v, 6))
    stiffness = [float(STIFFNESS[k]) for k in kinds]
    damping = [float(DAMPING[k]) for k in kinds]

    upper = [i for i, k in enumerate(kinds) if k not in LEG_KINDS]
    hips = [i for i, k in enumerate(kinds) if k in ("hip_roll", "hip_yaw")]

    rows = {}
    for row_name, contrib in ACTUATION.items():
        row = []
        for kind in kinds:
            coeff = contrib.get(kind, 0.0)
            if coeff != 0.0:
                coeff *= r["scale"] * (1.0 + 0.10 * rng.uniform(-1.0, 1.0))
            row.append(round(coeff, 6))
        rows[row_name] = row

    tm, tcom = r["torso"]
    tin = [round(0.42 * tm / 17.5, 6), round(0.38 * tm / 17.5, 6),
           round(0.11 * tm / 17.5, 6), 0.001, 0.002, 0.0005]
    fm, fin_diag = r["foot"]
    foot_inertia = [fin_diag, round(fin_diag * 1.4, 6), round(fin_diag * 0.5, 6),
                    0.0001, 0.0002, 0.0]
    left_foot = body_yaml(fm, (0.03, 0.01, -0.04), foot_inertia)
    right_foot = body_yaml(fm, (0.03, -0.01, -0.04), foot_inertia)

    lines = [
        "schema_version: 1",
        f"id: {r['id']}",
        f"name: {r['name']}",
        f"n_dofs: {n}",
        f"joint_map: {fmt_list(jm)}",
        f"default_pose: {fmt_list(default_pose)}",
        f"stiffness: {fmt_list(stiffness)}",
        f"damping: {fmt_list(damping)}",
        f"upper_joints: {fmt_list(upper)}",
        f"hip_joints: {fmt_list(hips)}",
        f"swing_height_targets: {fmt_list([r['swing'], r['swing']])}",
        f"nominal_base_height: {fmt(r['height'])}",
        "bodies:",
        f"  torso: {body_yaml(tm, tcom, tin)}",
        f"  left_foot: {left_foot}",
        f"  right_foot: {right_foot}",
        "actuation:",
    ]
    for row_name in ("vx", "vy", "yaw", "height", "pitch"):
        lines.append(f"  {row_name}: {fmt_list(rows[row_name])}")
    lines.append("")
    return "\n".join(lines), (tm, tcom, tin, fm, foot_inertia)


def features(body):
    mass, com, inertia = body
    return [mass, *com, *inertia]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    raw_rows = []
    for r in ROBOTS:
        text, (tm, tcom, tin, fm, fin) = gen_robot(r)
        (OUT / f"{r['name'].lower()}.yaml").write_text(text)
        row = []
        row += features((tm, tcom, tin))
        row += features((fm, (0.03, 0.01, -0.04), fin))
        row += features((fm, (0.03, -0.01, -0.04), fin))
        raw_rows.append(row)
        print(f"wrote {r['name'].lower()}.yaml ({len(r['joint_map'])} dofs)")

    dims = len(raw_rows[0])
    mean = [sum(r[j] for r in raw_rows) / len(raw_rows) for j in range(dims)]
    std = [math.sqrt(sum((r[j] - mean[j]) ** 2 for r in raw_rows) / len(raw_rows))
           for j in range(dims)]
    lines = [
        "schema_version: 1",
        "# z-score constants for the 30-dim inertial feature block",
        "# (population statistics over the robots in this directory).",
        "embodiment_observation:",
        f"  mean: {fmt_list([round(v, 12) for v in mean])}",
        f"  std: {fmt_list([round(v, 12) for v in std])}",
        "",
    ]
    (OUT / "normalization.yaml").write_text("\n".join(lines))
    print("wrote normalization.yaml")


if __name__ == "__main__":
    main()
