"""Reference robot descriptions.

The desk-quad is the default test platform: a 50 kg point-foot quadruped,
4 legs x 3 revolute joints (hip roll, hip pitch, knee pitch), trunk
0.6 x 0.4 m hip spacing, 0.35 + 0.35 m leg segments.
"""

import numpy as np

# (prefix, hip x, hip y, roll-axis sign for mirrored hips)
_LEGS = (
    ("fl", 0.3, 0.2),
    ("fr", 0.3, -0.2),
    ("hl", -0.3, 0.2),
    ("hr", -0.3, -0.2),
)

# nominal stance joint angles per leg: roll, hip pitch, knee pitch
STANCE_HIP_PITCH = 0.45
STANCE_KNEE = -0.9
UPPER_LEN = 0.35
LOWER_LEN = 0.35


def desk_quad_text(wheels=False):
    """Robot description text for the desk-quad (optionally wheeled feet)."""
    out = [
        "robot: desk-quad",
        "gravity: 9.81",
        "friction: 0.8",
        "",
        "link: trunk",
        "joint: floating",
        "mass: 30.0",
        "inertia: 0.5 1.0 1.3 0 0 0",
    ]
    for prefix, hx, hy in _LEGS:
        out += [
            "",
            f"link: {prefix}_hip",
            "parent: trunk",
            "joint: revolute",
            "axis: 1 0 0",
            f"origin: {hx} {hy} 0",
            "mass: 1.5",
            "inertia: 0.004 0.004 0.004 0 0 0",
            "velocity_limit: 12.0",
            "",
            f"link: {prefix}_upper",
            f"parent: {prefix}_hip",
            "joint: revolute",
            "axis: 0 1 0",
            "origin: 0 0 0",
            "mass: 2.0",
            "com: 0 0 -0.175",
            "inertia: 0.021 0.021 0.002 0 0 0",
            "velocity_limit: 12.0",
            "",
            f"link: {prefix}_lower",
            f"parent: {prefix}_upper",
            "joint: revolute",
            "axis: 0 1 0",
            f"origin: 0 0 -{UPPER_LEN}",
            "mass: 1.5",
            "com: 0 0 -0.175",
            "inertia: 0.016 0.016 0.0015 0 0 0",
            "velocity_limit: 12.0",
        ]
    for prefix, hx, hy in _LEGS:
        out += [
            "",
            f"contact: {prefix}_foot",
            f"parent: {prefix}_lower",
            f"offset: 0 0 -{LOWER_LEN}",
        ]
        if wheels:
            out += ["wheel_radius: 0.08", "wheel_axis: 0 1 0"]
    return "\n".join(out) + "\n"


def desk_quad_stance_joints():
    """Nominal stance joint vector (the static equal-load posture).

    Hind legs mirror the front ones so the leg coms cancel and the total CoM
    sits over the foot centroid.
    """
    q_jnt = np.zeros(12)
    for leg, (prefix, _, _) in enumerate(_LEGS):
        sign = 1.0 if prefix.startswith("f") else -1.0
        q_jnt[3 * leg + 1] = sign * STANCE_HIP_PITCH
        q_jnt[3 * leg + 2] = sign * STANCE_KNEE
    return q_jnt


def desk_quad_stance_height():
    """Trunk height with feet on the ground in the nominal stance."""
    z1 = UPPER_LEN * np.cos(STANCE_HIP_PITCH)
    z2 = LOWER_LEN * np.cos(STANCE_HIP_PITCH + STANCE_KNEE)
    return z1 + z2


def desk_quad_stance_q(model, yaw=0.0):
    """Full stance configuration at the origin with the given base yaw."""
    q = model.neutral_q()
    q[2] = desk_quad_stance_height()
    q[3] = np.cos(yaw / 2.0)
    q[6] = np.sin(yaw / 2.0)
    q[7:] = desk_quad_stance_joints()
    return q


def pendulum_text(n_links=2):
    """Floating root plus a chain of revolute y-axis links (test model)."""
    out = [
        "robot: pendulum",
        "link: base",
        "joint: floating",
        "mass: 5.0",
        "inertia: 0.05 0.05 0.05 0 0 0",
    ]
    parent = "base"
    for i in range(n_links):
        name = f"seg{i}"
        out += [
            f"link: {name}",
            f"parent: {parent}",
            "joint: revolute",
            "axis: 0 1 0",
            "origin: 0 0 -0.5" if i > 0 else "origin: 0 0 0",
            "mass: 1.0",
            "com: 0 0 -0.25",
            "inertia: 0.021 0.021 0.001 0 0 0",
        ]
        parent = name
    out += [
        "contact: tip",
        f"parent: {parent}",
        "offset: 0 0 -0.5",
    ]
    return "\n".join(out) + "\n"
