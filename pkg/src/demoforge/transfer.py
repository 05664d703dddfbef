"""Segment transfer and trajectory assembly.

Given one annotated demonstration, these routines rebuild the end-effector
path for a new object instance at a new pose: the grasp segment replays
anchored to the object, the skill segment replays anchored to the goal (the
new function point retraces the source function point's world path), and
fresh transitions stitch the segments together.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from demoforge.demo import (
    Demonstration,
    DemoStep,
    GRASP_THRESHOLD,
    KeypointAnnotation,
)
from demoforge.errors import CollisionDetected, NotGrasped, ParseError
from demoforge.geometry import Pose, Quat, rot_z, slerp
from demoforge.kinematics import ik

TRANSITION_STEP = 0.01  # m between planned waypoints
TRANSITION_MIN_STEPS = 5
MAX_FUNCTION_OFFSET = 1.0  # m, sanity bound for tabletop tools


class EePath:
    """Ordered end-effector waypoints: (Pose, gripper) pairs."""

    __slots__ = ("poses", "grippers")

    def __init__(self, poses, grippers):
        self.poses = list(poses)
        self.grippers = [float(g) for g in grippers]
        if not self.poses:
            raise ParseError("empty end-effector path")
        if len(self.poses) != len(self.grippers):
            raise ParseError("pose and gripper channels differ in length")
        for g in self.grippers:
            if not math.isfinite(g):
                raise ParseError("non-finite gripper value")

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i):
        return self.poses[i], self.grippers[i]

    def __iter__(self):
        return iter(zip(self.poses, self.grippers))

    @classmethod
    def from_steps(cls, steps) -> "EePath":
        return cls([s.ee_pose for s in steps], [s.gripper for s in steps])

    def translations(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])


@dataclass
class FunctionFrame:
    """Function point expressed in the end-effector frame at grasp.

    The frame shares the end effector's orientation, so it is a pure
    translation offset.
    """

    p_fun_ee: np.ndarray

    def __post_init__(self):
        self.p_fun_ee = np.asarray(self.p_fun_ee, dtype=np.float64).reshape(3)
        if np.linalg.norm(self.p_fun_ee) >= MAX_FUNCTION_OFFSET:
            raise ParseError(
                f"function point {np.linalg.norm(self.p_fun_ee):.2f} m from "
                "the end effector; expected a hand-held tool"
            )

    def offset_pose(self) -> Pose:
        return Pose(Quat.identity(), self.p_fun_ee)


def function_frame_from_grasp(ee_pose, object_pose, x_fun_local) -> FunctionFrame:
    """Fix the function point in the ee frame at the moment of grasp."""
    world = object_pose.apply(np.asarray(x_fun_local, dtype=np.float64))
    return FunctionFrame(ee_pose.inverse().apply(world))


def carried_object_pose(ee_now: Pose, ee_at_grasp: Pose,
                        object_at_grasp: Pose) -> Pose:
    """Object pose under rigid attachment since the grasp."""
    return ee_now.compose(ee_at_grasp.inverse().compose(object_at_grasp))


def function_point_world_path(path: EePath, frame: FunctionFrame) -> np.ndarray:
    """World trajectory of the function point along an ee path, (K, 3)."""
    return np.array([pose.apply(frame.p_fun_ee) for pose in path.poses])


def object_pose_track(steps, t_init: Pose) -> list:
    """Per-step object pose implied by a trajectory: resting until grasped,
    riding the gripper while the hand is closed, frozen where released."""
    poses = []
    anchor = None  # ee-frame offset captured when the hand closes
    current = t_init
    for s in steps:
        closed = s.gripper <= GRASP_THRESHOLD
        if closed and anchor is None:
            anchor = s.ee_pose.inverse().compose(current)
        if closed:
            current = s.ee_pose.compose(anchor)
        else:
            anchor = None
        poses.append(current)
    return poses


def _shift_local(pose: Pose, delta) -> Pose:
    # translation-only shift keeps the local orientation untouched
    return Pose(pose.rotation, pose.translation + delta)


def transfer_grasp(tau_g: EePath, t_init: Pose, x_aff, x_aff_new,
                   t_new: Pose) -> EePath:
    """Replay an object-anchored segment on a new instance at a new pose.

    Each pose P maps to T_new . shift(T_init^-1 . P) where shift adds the
    affording-point delta (x_aff_new - x_aff) to the local translation only.
    """
    delta = np.asarray(x_aff_new, dtype=np.float64) - np.asarray(
        x_aff, dtype=np.float64)
    inv = t_init.inverse()
    poses = [t_new.compose(_shift_local(inv.compose(p), delta))
             for p in tau_g.poses]
    return EePath(poses, tau_g.grippers)


def transfer_skill(tau_s: EePath, t_grasp_obj: Pose, x_fun, x_fun_new,
                   grasp_pose_new: Pose, mode: str = "goal-anchored",
                   t_init: Pose = None, t_new: Pose = None) -> EePath:
    """Rebuild the skill segment so the new function point does the work.

    t_grasp_obj is the held object's pose at the skill start (the pose it
    was carried to, expressed at tau_s[0]). grasp_pose_new is the ee pose at
    the new grasp; the new object sits at t_new until grasped.

    goal-anchored (default): keep source orientations and choose translations
    so the new function point traces exactly the source function point's
    world trajectory. literal: normalize the function-point path by t_init,
    shift by the keypoint delta, re-apply t_new, then recover ee poses
    through the inverse function-frame offset.
    """
    if any(g > GRASP_THRESHOLD for g in tau_s.grippers):
        raise NotGrasped("gripper opens inside the skill segment")
    frame = function_frame_from_grasp(tau_s.poses[0], t_grasp_obj, x_fun)
    if t_new is None:
        raise ParseError("transfer_skill requires the new object pose t_new")
    frame_new = function_frame_from_grasp(grasp_pose_new, t_new, x_fun_new)

    if mode == "goal-anchored":
        poses = []
        for pose in tau_s.poses:
            fun_world = pose.apply(frame.p_fun_ee)
            t = fun_world - pose.rotation.rotate(frame_new.p_fun_ee)
            poses.append(Pose(pose.rotation, t))
        return EePath(poses, tau_s.grippers)

    if mode == "literal":
        if t_init is None:
            raise ParseError("literal mode requires the source object pose")
        delta = np.asarray(x_fun_new, dtype=np.float64) - np.asarray(
            x_fun, dtype=np.float64)
        inv_init = t_init.inverse()
        off = frame.offset_pose()
        inv_off_new = frame_new.offset_pose().inverse()
        poses = []
        for pose in tau_s.poses:
            fun_pose = pose.compose(off)
            local = _shift_local(inv_init.compose(fun_pose), delta)
            poses.append(t_new.compose(local).compose(inv_off_new))
        return EePath(poses, tau_s.grippers)

    raise ParseError(f"unknown skill transfer mode {mode!r}")


def plan_transition(start: Pose, goal: Pose, step: float = TRANSITION_STEP,
                    min_steps: int = TRANSITION_MIN_STEPS,
                    collision_check=None, gripper: float = 1.0) -> EePath:
    """Straight-line free-space motion between two poses.

    K = max(min_steps, ceil(|dt| / step)) waypoints, positions lerped and
    orientations slerped inclusively, so first/last equal the endpoints
    exactly. collision_check(pose) -> True when the pose is collision free.
    """
    if step <= 0 or min_steps < 2:
        raise ParseError("need step > 0 and min_steps >= 2")
    dist = float(np.linalg.norm(goal.translation - start.translation))
    k = max(min_steps, math.ceil(dist / step))
    poses = []
    for i in range(k):
        alpha = i / (k - 1)
        if i == 0:
            pose = start
        elif i == k - 1:
            pose = goal
        else:
            t = (1 - alpha) * start.translation + alpha * goal.translation
            pose = Pose(slerp(start.rotation, goal.rotation, alpha), t)
        if collision_check is not None and not collision_check(pose):
            raise CollisionDetected(i)
        poses.append(pose)
    return EePath(poses, [gripper] * k)


@dataclass
class PoseSampler:
    """Uniform tabletop placement: x/y box, yaw about +z, fixed height."""

    x_range: tuple
    y_range: tuple
    yaw_range: tuple
    z: float = 0.0

    def __post_init__(self):
        for name in ("x_range", "y_range", "yaw_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ParseError(f"{name} [{lo}, {hi}] is not a valid range")
            setattr(self, name, (float(lo), float(hi)))


def sample_pose(sampler: PoseSampler, rng) -> Pose:
    x = rng.uniform(*sampler.x_range)
    y = rng.uniform(*sampler.y_range)
    yaw = rng.uniform(*sampler.yaw_range)
    return Pose(rot_z(yaw), np.array([x, y, sampler.z]))


@dataclass
class TransferConfig:
    mode: str = "goal-anchored"
    step: float = TRANSITION_STEP
    min_steps: int = TRANSITION_MIN_STEPS
    collision_check: object = None
    chain: object = None  # optional kinematic chain; waypoints get IK checked
    ik_tol_pos: float = 1e-4
    ik_tol_rot: float = 1e-3


def _segment(source: Demonstration, lo: int, hi: int) -> EePath:
    return EePath.from_steps(source.steps[lo: hi + 1])


def generate_demo(source: Demonstration, keypoints_new, t_new: Pose,
                  config: TransferConfig = None, rng=None,
                  mesh_id: str = "target", seed: int = None) -> Demonstration:
    """Assemble a full trajectory for a new object instance.

    Segments: approach transition from the source's home pose, then the
    object-anchored grasp replay, a planned transition, the goal-anchored
    (or literal) skill replay, a release transition, and the object-anchored
    retreat replay. Returns a Demonstration without clouds; the gripper
    closes at the transferred grasp waypoint and stage boundaries are
    recorded.
    """
    if config is None:
        config = TransferConfig()
    if source.t_grasp is None or source.keypoints is None:
        raise ParseError("source demonstration is missing annotations")
    x_aff = source.keypoints.affording_point
    x_fun = source.keypoints.function_point
    if isinstance(keypoints_new, KeypointAnnotation):
        x_aff_new, x_fun_new = (keypoints_new.affording_point,
                                keypoints_new.function_point)
    else:
        x_aff_new = np.asarray(keypoints_new["affording_point"], np.float64)
        x_fun_new = np.asarray(keypoints_new["function_point"], np.float64)
    t_init = source.source_object_pose
    t_s, t_e = source.skill_range
    t_g = source.t_grasp

    grasp_src = _segment(source, 0, t_g)
    skill_src = _segment(source, t_s, t_e)

    grasp_new = transfer_grasp(grasp_src, t_init, x_aff, x_aff_new, t_new)

    # the object rides the gripper from the grasp to the skill start
    obj_at_skill = carried_object_pose(
        skill_src.poses[0], grasp_src.poses[-1], t_init)
    skill_new = transfer_skill(
        skill_src, obj_at_skill, x_fun, x_fun_new, grasp_new.poses[-1],
        mode=config.mode, t_init=t_init, t_new=t_new)

    open_g = source.steps[0].gripper
    closed_g = source.steps[t_g].gripper
    approach = plan_transition(
        source.steps[0].ee_pose, grasp_new.poses[0], config.step,
        config.min_steps, config.collision_check, gripper=open_g)
    carry = plan_transition(
        grasp_new.poses[-1], skill_new.poses[0], config.step,
        config.min_steps, config.collision_check, gripper=closed_g)

    parts = [approach, grasp_new, carry, skill_new]
    if t_e + 1 < len(source.steps):
        retreat_src = _segment(source, t_e + 1, len(source.steps) - 1)
        retreat_new = transfer_grasp(
            retreat_src, t_init, x_aff, x_aff_new, t_new)
        release = plan_transition(
            skill_new.poses[-1], retreat_new.poses[0], config.step,
            config.min_steps, config.collision_check,
            gripper=retreat_src.grippers[0])
        parts += [release, retreat_new]

    t_grasp_new = len(approach) + len(grasp_new) - 1
    s_start = len(approach) + len(grasp_new) + len(carry)
    s_end = s_start + len(skill_new) - 1

    steps = []
    q_prev = None
    t = 0
    for part in parts:
        for pose, gripper in part:
            proprio = None
            if config.chain is not None:
                q_prev = ik(config.chain, pose, q0=q_prev,
                            tol_pos=config.ik_tol_pos,
                            tol_rot=config.ik_tol_rot)
                proprio = q_prev
            steps.append(DemoStep(t, pose, gripper, None, proprio))
            t += 1

    return Demonstration(
        steps,
        t_grasp=t_grasp_new,
        skill_range=(s_start, s_end),
        source_object_pose=t_new,
        keypoints=KeypointAnnotation(x_aff_new, x_fun_new),
        mesh_id=mesh_id,
        seed=seed,
    )
