"""Writes arm_reach.yaml and arm_blocked.yaml.

The chain uses modified Denavit-Hartenberg numbers of a common 7-joint
research arm. Link shapes and obstacles are rough approximations made for
this repository, not manufacturer data.
"""

import math
from pathlib import Path

import numpy as np

# (a_prev, d, alpha_prev) per joint
DH = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -math.pi / 2),
    (0.0, 0.316, math.pi / 2),
    (0.0825, 0.0, math.pi / 2),
    (-0.0825, 0.384, -math.pi / 2),
    (0.0, 0.0, math.pi / 2),
    (0.088, 0.0, math.pi / 2),
]
HOME = [0.0, -math.pi / 4, 0.0, -3 * math.pi / 4, 0.0, math.pi / 2, math.pi / 4]
EE_OFFSET = 0.2


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def joint_origin(a, d, alpha):
    r = rot_x(alpha)
    return r, np.array([a, 0.0, 0.0]) + r @ np.array([0.0, 0.0, d])


def quat_x(alpha):
    return [math.cos(alpha / 2), math.sin(alpha / 2), 0.0, 0.0]


def quat_between(u, v):
    """Unit quaternion (w, x, y, z) rotating unit vector u onto v."""
    w = 1.0 + float(np.dot(u, v))
    if w < 1e-12:
        return [0.0, 0.0, 1.0, 0.0]
    x, y, z = np.cross(u, v)
    q = np.array([w, x, y, z])
    return list(q / np.linalg.norm(q))


def fk(theta):
    frames = []
    r, p = np.eye(3), np.zeros(3)
    for (a, d, alpha), q in zip(DH, theta):
        ro, po = joint_origin(a, d, alpha)
        p = p + r @ po
        r = r @ ro @ rot_z(q)
        frames.append((r.copy(), p.copy()))
    return frames


def segment_body(name, link, start, end, radius):
    """Ellipsoid on `link` covering the segment start-end (link coordinates)."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    axis = end - start
    half = 0.5 * np.linalg.norm(axis)
    q = quat_between(np.array([1.0, 0.0, 0.0]), axis / np.linalg.norm(axis))
    return {
        "name": name,
        "link": link,
        "shape": f"{{type: ellipsoid, semi_axes: [{half + radius:.4f}, {radius}, {radius}]}}",
        "pose": f"{{position: {fmt(0.5 * (start + end))}, quaternion: {fmt(q, 16)}}}",
    }


def sphere_body(name, link, center, radius):
    return {
        "name": name,
        "link": link,
        "shape": f"{{type: sphere, radius: {radius}}}",
        "pose": f"{{position: {fmt(center)}}}",
    }


def fmt(v, digits=6):
    return "[" + ", ".join(f"{float(x):.{digits}g}" for x in v) + "]"


def bodies():
    # Previous frame origin expressed in the next frame: -R^T p.
    def prev_origin(j):
        r, p = joint_origin(*DH[j])
        return -r.T @ p

    return [
        sphere_body("shoulder", 1, [0.0, 0.0, 0.0], 0.09),
        segment_body("upper_arm", 2, prev_origin(2), [0.0, 0.0, 0.0], 0.07),
        sphere_body("elbow", 3, [0.0, 0.0, 0.0], 0.09),
        segment_body("forearm", 4, prev_origin(4), [0.0, 0.0, -0.06], 0.07),
        sphere_body("wrist", 5, [0.0, 0.0, 0.0], 0.08),
        segment_body("hand", 6, [0.0, 0.0, 0.05], [0.0, 0.0, 0.16], 0.06),
        sphere_body("fingertip", 6, [0.0, 0.0, EE_OFFSET], 0.03),
    ]


def write(path, name, comment, target, obstacles, horizon):
    lines = [f"# {line}" for line in comment]
    lines += [
        f"name: {name}",
        "robot:",
        "  type: chain",
        "  joints:",
    ]
    for a, d, alpha in DH:
        lines.append(
            f"    - {{type: revolute, axis: [0, 0, 1], origin: {{position: "
            f"{fmt(joint_origin(a, d, alpha)[1], 16)}, quaternion: {fmt(quat_x(alpha), 16)}}}}}"
        )
    lines.append(f"  initial_joints: {fmt(HOME, 16)}")
    lines.append("  bodies:")
    for b in bodies():
        lines.append(f"    - name: {b['name']}")
        lines.append(f"      link: {b['link']}")
        lines.append(f"      shape: {b['shape']}")
        lines.append(f"      local_pose: {b['pose']}")
    lines += [
        "  end_effector:",
        "    link: 6",
        f"    local_pose: {{position: [0, 0, {EE_OFFSET}]}}",
        "controller:",
        "  type: resolved_rate",
        f"  target: {fmt(target)}",
        "  kp: 2.0",
        "  kp_null: 1.0",
        "  epsilon: 0.1",
        "obstacles:",
    ]
    for oname, center, half in obstacles:
        lines.append(f"  - name: {oname}")
        lines.append(f"    shape: {{type: box, half_extents: {fmt(half)}}}")
        lines.append(f"    pose: {{position: {fmt(center)}}}")
    lines += [
        "cbf: {beta: 1.03, gamma: 5.0}",
        f"timing: {{dt_sim: 0.001, dt_ctrl: 0.01, horizon: {horizon}}}",
        "stop: {target_tolerance: 0.01, stall_window: 1.0, stall_displacement: 1.0e-4}",
        "input_bounds: {lower: [-0.6, -0.6, -0.6, -0.6, -0.6, -0.6, -0.6], upper: [0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6]}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


BLOCKS = [
    ("block_low", [0.55, 0.0, 0.1], [0.1, 0.1, 0.1]),
    ("block_left", [0.35, 0.4, 0.15], [0.1, 0.1, 0.15]),
    ("block_right", [0.35, -0.4, 0.25], [0.1, 0.1, 0.25]),
]

if __name__ == "__main__":
    here = Path(__file__).resolve().parent
    frames = fk(HOME)
    r7, p7 = frames[-1]
    print("home end effector:", p7 + r7 @ np.array([0.0, 0.0, EE_OFFSET]))
    write(
        here / "arm_reach.yaml",
        "arm_reach",
        ["Seven-joint arm reaching a free target next to three blocks.",
         "Generated by make_arm_scenarios.py; geometry is approximate."],
        [0.55, 0.4, 0.2],
        BLOCKS,
        15.0,
    )
    write(
        here / "arm_blocked.yaml",
        "arm_blocked",
        ["Seven-joint arm asked to reach the centre of the low block. The",
         "safety filter should hold it at a safe pose near the block.",
         "Generated by make_arm_scenarios.py; geometry is approximate."],
        BLOCKS[0][1],
        BLOCKS,
        15.0,
    )
