"""Forward kinematics and damped-least-squares IK for serial revolute chains."""

import json
from dataclasses import dataclass, field

import numpy as np

from demoforge.errors import IkUnreachable, JointLimit, ParseError
from demoforge.geometry import Pose, Quat

IK_DAMPING = 0.05
IK_STEP_CLAMP = 0.2  # rad per joint per iteration
IK_MAX_ITERS = 200


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray  # unit 3-vector in the joint's local frame
    origin: Pose  # fixed offset from the previous link
    lo: float
    hi: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ParseError("joint axis must be nonzero")
        object.__setattr__(self, "axis", axis / n)
        if not self.lo < self.hi:
            raise ParseError("joint limits need lo < hi")


@dataclass(frozen=True)
class SerialChain:
    joints: tuple
    base: Pose = field(default_factory=Pose.identity)
    tool: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise ParseError("chain needs at least one joint")

    @property
    def n(self) -> int:
        return len(self.joints)

    def limits(self):
        lo = np.array([j.lo for j in self.joints])
        hi = np.array([j.hi for j in self.joints])
        return lo, hi

    def mid_pose(self) -> np.ndarray:
        lo, hi = self.limits()
        return (lo + hi) / 2.0


def load_chain(path) -> SerialChain:
    """Chain file: JSON {joints: [{axis, origin, limits}], base?, tool?}."""
    try:
        with open(path, encoding="ascii") as fh:
            data = json.load(fh)
        joints = [
            Joint(j["axis"], Pose.from_array(j["origin"]),
                  float(j["limits"][0]), float(j["limits"][1]))
            for j in data["joints"]
        ]
        base = Pose.from_array(data["base"]) if "base" in data else Pose.identity()
        tool = Pose.from_array(data["tool"]) if "tool" in data else Pose.identity()
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError,
            IndexError) as e:
        raise ParseError(f"{path}: bad chain file ({e})") from e
    return SerialChain(tuple(joints), base, tool)


def save_chain(chain: SerialChain, path) -> None:
    data = {
        "base": chain.base.to_array().tolist(),
        "tool": chain.tool.to_array().tolist(),
        "joints": [
            {"axis": j.axis.tolist(), "origin": j.origin.to_array().tolist(),
             "limits": [j.lo, j.hi]}
            for j in chain.joints
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def _check_q(chain: SerialChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (chain.n,):
        raise JointLimit(f"expected {chain.n} joint values, got {q.shape}")
    lo, hi = chain.limits()
    if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
        bad = int(np.argmax((q < lo - 1e-12) | (q > hi + 1e-12)))
        raise JointLimit(f"joint {bad} value {q[bad]:.4f} outside "
                         f"[{lo[bad]:.4f}, {hi[bad]:.4f}]")
    return q


def _frames(chain: SerialChain, q):
    """World pose of each joint frame (pre-rotation) and the final ee pose."""
    frames = []
    t = chain.base
    for joint, qi in zip(chain.joints, q):
        t = t.compose(joint.origin)
        frames.append(t)
        t = t.compose(Pose(Quat.from_axis_angle(joint.axis, qi), np.zeros(3)))
    return frames, t.compose(chain.tool)


def fk(chain: SerialChain, q) -> Pose:
    q = _check_q(chain, q)
    return _frames(chain, q)[1]


def joint_frames(chain: SerialChain, q) -> list:
    """World pose of each joint's output frame (post-rotation), plus the ee.

    A link mesh rigidly attached downstream of joint i rides frames[i];
    the last entry is the end-effector pose.
    """
    q = _check_q(chain, q)
    pre, ee = _frames(chain, q)
    out = [
        frame.compose(Pose(Quat.from_axis_angle(joint.axis, qi), np.zeros(3)))
        for frame, joint, qi in zip(pre, chain.joints, q)
    ]
    out.append(ee)
    return out


def jacobian(chain: SerialChain, q) -> np.ndarray:
    """Geometric Jacobian, rows = [linear velocity; angular velocity]."""
    q = np.asarray(q, dtype=np.float64)
    frames, ee = _frames(chain, q)
    p_ee = ee.translation
    cols = np.empty((6, chain.n))
    for i, (joint, frame) in enumerate(zip(chain.joints, frames)):
        z = frame.rotation.rotate(joint.axis)
        cols[:3, i] = np.cross(z, p_ee - frame.translation)
        cols[3:, i] = z
    return cols


IK_RESTARTS = 10
_ERR_POS_CAP = 0.1  # m per iteration, keeps distant targets from oscillating
_ERR_ROT_CAP = 0.5  # rad per iteration


def _descend(chain, target, q, lo, hi, tol_pos, tol_rot, max_iters, damping,
             step_clamp):
    lam2 = damping * damping * np.eye(6)
    best = np.inf
    stall = 0
    for _ in range(max_iters):
        cur = _frames(chain, q)[1]
        err = np.empty(6)
        err[:3] = target.translation - cur.translation
        err[3:] = target.rotation.multiply(cur.rotation.inverse()).to_rotvec()
        pos = np.linalg.norm(err[:3])
        rot = np.linalg.norm(err[3:])
        if pos <= tol_pos and rot <= tol_rot:
            return q, 0.0
        # a 30-iteration plateau means this start is stuck, not converging
        if pos + rot < best - 1e-10:
            stall = 0
        else:
            stall += 1
            if stall >= 30:
                return None, best
        best = min(best, pos + rot)
        if pos > _ERR_POS_CAP:
            err[:3] *= _ERR_POS_CAP / pos
        if rot > _ERR_ROT_CAP:
            err[3:] *= _ERR_ROT_CAP / rot
        jac = jacobian(chain, q)
        dq = jac.T @ np.linalg.solve(jac @ jac.T + lam2, err)
        dq = np.clip(dq, -step_clamp, step_clamp)
        q = np.clip(q + dq, lo, hi)
    return None, best


def ik(chain: SerialChain, target: Pose, q0=None, tol_pos=1e-4, tol_rot=1e-3,
       max_iters=IK_MAX_ITERS, damping=IK_DAMPING, step_clamp=IK_STEP_CLAMP,
       restarts=IK_RESTARTS) -> np.ndarray:
    """Damped least squares on the 6-vector pose error.

    Descends from q0 (chain mid-pose when omitted); if that stalls, retries
    from a fixed ladder of deterministic seed configurations before giving
    up, so cold solves do not depend on a lucky initial guess.
    """
    lo, hi = chain.limits()
    q = chain.mid_pose() if q0 is None else np.asarray(q0, dtype=np.float64).copy()
    seeds = np.random.default_rng(0xD5EED).uniform(lo, hi, size=(restarts, chain.n))
    best = np.inf
    for attempt in range(restarts + 1):
        start = q if attempt == 0 else seeds[attempt - 1]
        sol, residual = _descend(chain, target, np.clip(start, lo, hi), lo, hi,
                                 tol_pos, tol_rot, max_iters, damping, step_clamp)
        if sol is not None:
            return sol
        best = min(best, residual)
    raise IkUnreachable(
        f"no solution within {max_iters} iterations x {restarts + 1} starts "
        f"(best residual {best:.2e})"
    )


def six_dof_arm() -> SerialChain:
    """Desk-scale anthropomorphic test arm, ~1.1 m reach."""
    t = Pose.from_translation
    joints = (
        Joint((0, 0, 1), t((0, 0, 0.15)), -np.pi, np.pi),
        Joint((0, 1, 0), t((0, 0, 0.10)), -2.2, 2.2),
        Joint((0, 1, 0), t((0, 0, 0.35)), -2.5, 2.5),
        Joint((0, 0, 1), t((0, 0, 0.30)), -np.pi, np.pi),
        Joint((0, 1, 0), t((0, 0, 0.10)), -2.0, 2.0),
        Joint((0, 0, 1), t((0, 0, 0.08)), -np.pi, np.pi),
    )
    return SerialChain(joints, tool=t((0, 0, 0.06)))
