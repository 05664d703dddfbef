import numpy as np
import pytest

from demoforge.demo import DemoStep, Demonstration, KeypointAnnotation
from demoforge.errors import (
    CollisionDetected,
    NotGrasped,
    ParseError,
)
from demoforge.geometry import Pose, Quat, rot_x, rot_y, rot_z, slerp
from demoforge.kinematics import fk, six_dof_arm
from demoforge.transfer import (
    EePath,
    FunctionFrame,
    PoseSampler,
    TransferConfig,
    carried_object_pose,
    function_frame_from_grasp,
    function_point_world_path,
    generate_demo,
    plan_transition,
    sample_pose,
    transfer_grasp,
    transfer_skill,
)

T_INIT = Pose(rot_z(0.4), np.array([0.45, 0.10, 0.10]))
X_AFF = np.array([0.02, 0.00, 0.03])
X_FUN = np.array([0.10, 0.00, 0.05])


def rand_pose(rng, span=0.5):
    q = Quat.from_wxyz(rng.normal(size=4))
    return Pose(q, rng.uniform(-span, span, 3))


def rand_path(rng, n=8, closed=False):
    g = 0.0 if closed else 1.0
    return EePath([rand_pose(rng) for _ in range(n)], [g] * n)


def oracle_anchored(pose, t_init, t_new, delta):
    """Independent 4x4 matrix version of the object-anchored replay."""
    local = np.linalg.inv(t_init.matrix()) @ pose.matrix()
    local[:3, 3] += delta
    return t_new.matrix() @ local


def source_demo():
    """Hand-built pick-and-use demo: grasp at 5, skill 9..14, retreat after."""
    steps = []
    home = Pose(Quat.identity(), np.array([0.30, -0.30, 0.50]))
    for t in range(19):
        alpha = t / 18.0
        rot = rot_z(0.05 * t).multiply(rot_y(0.4 * alpha))
        trans = home.translation + np.array(
            [0.012 * t, 0.018 * t, -0.015 * t + 0.002 * t * t * 0.1])
        gripper = 1.0 if t < 5 or t > 14 else 0.0
        steps.append(DemoStep(t, Pose(rot, trans), gripper, None))
    return Demonstration(
        steps, t_grasp=5, skill_range=(9, 14),
        source_object_pose=T_INIT,
        keypoints=KeypointAnnotation(X_AFF, X_FUN),
    )


# ---- grasp transfer ----

def test_grasp_identity_round_trip():
    rng = np.random.default_rng(4)
    path = rand_path(rng)
    out = transfer_grasp(path, T_INIT, X_AFF, X_AFF, T_INIT)
    for src, dst in zip(path.poses, out.poses):
        assert np.linalg.norm(dst.to_array() - src.to_array()) < 1e-9
    assert out.grippers == path.grippers


def test_grasp_matches_matrix_oracle():
    rng = np.random.default_rng(5)
    path = rand_path(rng, n=12)
    t_new = rand_pose(rng)
    x_new = X_AFF + rng.normal(scale=0.02, size=3)
    out = transfer_grasp(path, T_INIT, X_AFF, x_new, t_new)
    delta = x_new - X_AFF
    for src, dst in zip(path.poses, out.poses):
        expected = oracle_anchored(src, T_INIT, t_new, delta)
        np.testing.assert_allclose(dst.matrix(), expected, atol=1e-12)


def test_grasp_keypoint_shift_moves_world_by_rotated_delta():
    rng = np.random.default_rng(6)
    path = rand_path(rng)
    shift = np.array([0.0, 0.0, 0.05])
    out = transfer_grasp(path, T_INIT, X_AFF, X_AFF + shift, T_INIT)
    world_shift = T_INIT.rotation.rotate(shift)
    for src, dst in zip(path.poses, out.poses):
        np.testing.assert_allclose(
            dst.translation - src.translation, world_shift, atol=1e-12)
        assert dst.rotation.angle_to(src.rotation) < 1e-12


def test_grasp_relative_pose_invariant():
    # ee pose relative to the affording point is preserved across transfer
    rng = np.random.default_rng(7)
    for _ in range(20):
        path = rand_path(rng)
        t_new = rand_pose(rng)
        x_new = rng.normal(scale=0.05, size=3)
        out = transfer_grasp(path, T_INIT, X_AFF, x_new, t_new)
        src_frame = T_INIT.compose(Pose(Quat.identity(), X_AFF))
        dst_frame = t_new.compose(Pose(Quat.identity(), x_new))
        rel_src = src_frame.inverse().compose(path.poses[-1])
        rel_dst = dst_frame.inverse().compose(out.poses[-1])
        assert np.linalg.norm(
            rel_dst.to_array() - rel_src.to_array()) < 1e-9


# ---- skill transfer ----

def near_grasp(rng, obj: Pose) -> Pose:
    # a physical grasp puts the hand within reach of the object
    return Pose(Quat.from_wxyz(rng.normal(size=4)),
                obj.translation + rng.uniform(-0.15, 0.15, 3))


def held_setup(rng):
    """Source skill path plus a consistent held-object pose at its start."""
    path = rand_path(rng, n=10, closed=True)
    ee_grasp = near_grasp(rng, T_INIT)
    obj_at_start = carried_object_pose(path.poses[0], ee_grasp, T_INIT)
    return path, ee_grasp, obj_at_start


def test_skill_same_grasp_is_identity():
    rng = np.random.default_rng(8)
    path, _, obj = held_setup(rng)
    out = transfer_skill(path, obj, X_FUN, X_FUN, path.poses[0],
                         t_new=obj)
    for src, dst in zip(path.poses, out.poses):
        assert np.linalg.norm(dst.to_array() - src.to_array()) < 1e-12


def test_skill_function_point_world_path_preserved():
    rng = np.random.default_rng(9)
    for _ in range(10):
        path, _, obj = held_setup(rng)
        t_new = rand_pose(rng)
        grasp_new = near_grasp(rng, t_new)
        x_fun_new = rng.normal(scale=0.08, size=3)
        out = transfer_skill(path, obj, X_FUN, x_fun_new, grasp_new,
                             t_new=t_new)
        frame_src = function_frame_from_grasp(path.poses[0], obj, X_FUN)
        frame_new = function_frame_from_grasp(grasp_new, t_new, x_fun_new)
        src_world = function_point_world_path(path, frame_src)
        new_world = function_point_world_path(out, frame_new)
        assert np.abs(new_world - src_world).max() < 1e-9
        # orientations untouched
        for s, d in zip(path.poses, out.poses):
            assert d.rotation.angle_to(s.rotation) < 1e-12


def test_skill_ee_frame_delta_shifts_by_rotated_delta():
    rng = np.random.default_rng(10)
    # identity start orientation and axis-aligned object make the
    # mesh-frame delta equal the ee-frame delta
    poses = [Pose(Quat.identity(), np.array([0.1 * t, 0.0, 0.3]))
             for t in range(6)]
    path = EePath(poses, [0.0] * 6)
    obj = Pose(Quat.identity(), np.array([0.2, 0.0, 0.1]))
    delta = np.array([0.03, -0.02, 0.01])
    out = transfer_skill(path, obj, X_FUN, X_FUN + delta, path.poses[0],
                         t_new=obj)
    for src, dst in zip(path.poses, out.poses):
        np.testing.assert_allclose(
            dst.translation - src.translation,
            -src.rotation.rotate(delta), atol=1e-12)


def test_skill_rejects_open_gripper():
    rng = np.random.default_rng(11)
    path, _, obj = held_setup(rng)
    bad = EePath(path.poses, [0.0] * 5 + [1.0] + [0.0] * 4)
    with pytest.raises(NotGrasped):
        transfer_skill(bad, obj, X_FUN, X_FUN, path.poses[0], t_new=obj)


def test_skill_literal_identity_and_oracle():
    rng = np.random.default_rng(12)
    path, ee_grasp, obj = held_setup(rng)
    out = transfer_skill(path, obj, X_FUN, X_FUN, path.poses[0],
                         mode="literal", t_init=obj, t_new=obj)
    for src, dst in zip(path.poses, out.poses):
        assert np.linalg.norm(dst.to_array() - src.to_array()) < 1e-9

    # literal semantics: the function-pose path is re-anchored exactly like
    # a grasp segment, then ee poses recovered through the new offset
    t_new = rand_pose(rng)
    grasp_new = near_grasp(rng, t_new)
    x_fun_new = X_FUN + rng.normal(scale=0.03, size=3)
    out = transfer_skill(path, obj, X_FUN, x_fun_new, grasp_new,
                         mode="literal", t_init=T_INIT, t_new=t_new)
    frame_src = function_frame_from_grasp(path.poses[0], obj, X_FUN)
    frame_new = function_frame_from_grasp(grasp_new, t_new, x_fun_new)
    delta = x_fun_new - X_FUN
    for src, dst in zip(path.poses, out.poses):
        fun_pose = src.compose(frame_src.offset_pose())
        expected = oracle_anchored(fun_pose, T_INIT, t_new, delta)
        expected = expected @ np.linalg.inv(frame_new.offset_pose().matrix())
        np.testing.assert_allclose(dst.matrix(), expected, atol=1e-9)


def test_function_frame_sanity_bound():
    with pytest.raises(ParseError):
        FunctionFrame([1.2, 0.0, 0.0])
    with pytest.raises(ParseError):
        transfer_skill(
            EePath([Pose.identity()], [0.0]),
            Pose.from_translation([5.0, 0, 0]), X_FUN, X_FUN,
            Pose.identity(), t_new=Pose.identity())


def test_unknown_mode_rejected():
    path = EePath([Pose.identity()], [0.0])
    with pytest.raises(ParseError):
        transfer_skill(path, Pose.identity(), X_FUN, X_FUN,
                       Pose.identity(), mode="nearest", t_new=Pose.identity())


# ---- transitions ----

def test_transition_straight_line_arithmetic():
    start = Pose.identity()
    goal = Pose.from_translation([0.10, 0.0, 0.0])
    path = plan_transition(start, goal, step=0.01, min_steps=5)
    assert len(path) == 10
    pts = path.translations()
    np.testing.assert_array_equal(pts[0], start.translation)
    np.testing.assert_array_equal(pts[-1], goal.translation)
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    np.testing.assert_allclose(gaps, 0.10 / 9, atol=1e-9)
    assert np.abs(pts[:, 1:]).max() == 0.0  # collinear with the x axis


def test_transition_same_pose_copies():
    pose = Pose(rot_x(0.3), [0.1, 0.2, 0.3])
    path = plan_transition(pose, pose, min_steps=5)
    assert len(path) == 5
    for p, _ in path:
        np.testing.assert_array_equal(p.to_array(), pose.to_array())


def test_transition_pure_rotation_fractions():
    start = Pose.identity()
    goal = Pose(rot_z(np.pi / 2), [0, 0, 0])
    path = plan_transition(start, goal, min_steps=7)
    assert len(path) == 7
    for k, (p, _) in enumerate(path):
        expected = np.pi / 2 * k / 6
        assert abs(p.rotation.angle_to(Quat.identity()) - expected) < 1e-9
        rv = p.rotation.to_rotvec()
        if expected > 0:
            np.testing.assert_allclose(rv / np.linalg.norm(rv), [0, 0, 1],
                                       atol=1e-9)


def test_transition_collision_reports_index():
    start = Pose.identity()
    goal = Pose.from_translation([0.2, 0, 0])
    with pytest.raises(CollisionDetected) as e:
        plan_transition(start, goal, step=0.01, min_steps=5,
                        collision_check=lambda p: p.translation[0] < 0.05)
    assert e.value.index == 5  # waypoint 5 sits at x = 5 * 0.2/19 > 0.05
    ok = plan_transition(start, goal, step=0.01, min_steps=5,
                         collision_check=lambda p: True)
    assert len(ok) == 20


def test_transition_bad_args():
    with pytest.raises(ParseError):
        plan_transition(Pose.identity(), Pose.identity(), step=0.0)
    with pytest.raises(ParseError):
        plan_transition(Pose.identity(), Pose.identity(), min_steps=1)


# ---- pose sampling ----

def test_sampler_degenerate_box_fixed_pose():
    sampler = PoseSampler((0.1, 0.1), (-0.2, -0.2), (0.5, 0.5), z=0.03)
    rng = np.random.default_rng(0)
    for _ in range(5):
        pose = sample_pose(sampler, rng)
        np.testing.assert_allclose(pose.translation, [0.1, -0.2, 0.03],
                                   atol=1e-15)
        assert pose.rotation.angle_to(rot_z(0.5)) < 1e-12


def test_sampler_respects_bounds():
    sampler = PoseSampler((-0.1, 0.1), (-0.1, 0.1), (0.0, np.pi), z=0.0)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        pose = sample_pose(sampler, rng)
        x, y, z = pose.translation
        assert -0.1 <= x <= 0.1 and -0.1 <= y <= 0.1 and z == 0.0
        rv = pose.rotation.to_rotvec()
        yaw = rv[2]
        assert abs(rv[0]) < 1e-12 and abs(rv[1]) < 1e-12
        assert 0.0 <= yaw <= np.pi


def ks_uniform(samples, lo, hi):
    """Kolmogorov-Smirnov statistic against U(lo, hi)."""
    x = np.sort((np.asarray(samples) - lo) / (hi - lo))
    n = len(x)
    k = np.arange(1, n + 1)
    return max(np.max(k / n - x), np.max(x - (k - 1) / n))


def test_sampler_uniform_marginals_ks():
    sampler = PoseSampler((-0.1, 0.1), (-0.1, 0.1), (0.0, np.pi), z=0.0)
    rng = np.random.default_rng(2)
    n = 10_000
    poses = [sample_pose(sampler, rng) for _ in range(n)]
    xs = [p.translation[0] for p in poses]
    ys = [p.translation[1] for p in poses]
    yaws = [p.rotation.to_rotvec()[2] for p in poses]
    crit = 1.628 / np.sqrt(n)  # KS critical value at p = 0.01
    assert ks_uniform(xs, -0.1, 0.1) < crit
    assert ks_uniform(ys, -0.1, 0.1) < crit
    assert ks_uniform(yaws, 0.0, np.pi) < crit
    with pytest.raises(ParseError):
        PoseSampler((0.1, -0.1), (0, 1), (0, 1))


# ---- full assembly ----

def test_generate_identity_round_trip():
    src = source_demo()
    out = generate_demo(src, src.keypoints, T_INIT)
    t_g = out.t_grasp
    s0, s1 = out.skill_range
    # grasp segment equals source grasp segment
    for k in range(src.t_grasp + 1):
        got = out.steps[t_g - src.t_grasp + k].ee_pose
        want = src.steps[k].ee_pose
        assert np.linalg.norm(got.to_array() - want.to_array()) < 1e-9
    # skill segment equals source skill segment
    for k in range(s1 - s0 + 1):
        got = out.steps[s0 + k].ee_pose
        want = src.steps[src.skill_range[0] + k].ee_pose
        assert np.linalg.norm(got.to_array() - want.to_array()) < 1e-9
    assert out.steps[t_g].gripper <= 0.5
    assert out.steps[t_g - 1].gripper > 0.5


def test_generate_translated_object():
    src = source_demo()
    d = np.array([0.10, 0.0, 0.0])
    t_new = Pose(T_INIT.rotation, T_INIT.translation + d)
    out = generate_demo(src, src.keypoints, t_new)
    t_g = out.t_grasp
    for k in range(src.t_grasp + 1):
        got = out.steps[t_g - src.t_grasp + k].ee_pose
        want = src.steps[k].ee_pose
        np.testing.assert_allclose(got.translation - want.translation, d,
                                   atol=1e-12)
    s0, s1 = out.skill_range
    for k in range(s1 - s0 + 1):
        got = out.steps[s0 + k].ee_pose
        want = src.steps[src.skill_range[0] + k].ee_pose
        assert np.linalg.norm(got.to_array() - want.to_array()) < 1e-9


def test_generate_function_point_invariance_random_poses():
    src = source_demo()
    rng = np.random.default_rng(3)
    sampler = PoseSampler((0.3, 0.6), (-0.2, 0.3), (0.0, np.pi), z=0.10)
    x_fun_new = X_FUN + np.array([0.02, -0.01, 0.03])
    kps = KeypointAnnotation(X_AFF + 0.01, x_fun_new)
    ee_grasp_src = src.steps[src.t_grasp].ee_pose
    frame_src = function_frame_from_grasp(ee_grasp_src, T_INIT, X_FUN)
    src_skill = EePath.from_steps(
        src.steps[src.skill_range[0]: src.skill_range[1] + 1])
    src_world = function_point_world_path(src_skill, frame_src)
    for _ in range(10):
        t_new = sample_pose(sampler, rng)
        out = generate_demo(src, kps, t_new)
        frame_new = function_frame_from_grasp(
            out.steps[out.t_grasp].ee_pose, t_new, x_fun_new)
        s0, s1 = out.skill_range
        new_skill = EePath.from_steps(out.steps[s0: s1 + 1])
        new_world = function_point_world_path(new_skill, frame_new)
        assert np.abs(new_world - src_world).max() < 1e-9


def test_generate_continuity_budget():
    src = source_demo()
    rng = np.random.default_rng(13)
    sampler = PoseSampler((0.3, 0.6), (-0.2, 0.3), (0.0, np.pi), z=0.10)
    cfg = TransferConfig(step=0.01)
    for _ in range(5):
        out = generate_demo(src, src.keypoints, sample_pose(sampler, rng),
                            config=cfg)
        pts = np.array([s.ee_pose.translation for s in out.steps])
        src_pts = np.array([s.ee_pose.translation for s in src.steps])
        src_gap = np.linalg.norm(np.diff(src_pts, axis=0), axis=1).max()
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        # planned joints obey 2x step; replayed segments keep source spacing
        assert gaps.max() <= max(2 * cfg.step, src_gap) + 1e-12


def test_generate_stage_gripper_profile():
    src = source_demo()
    out = generate_demo(src, src.keypoints, T_INIT)
    g = out.gripper_values()
    t_g = out.t_grasp
    s0, s1 = out.skill_range
    assert np.all(g[:t_g] > 0.5)
    assert np.all(g[t_g: s1 + 1] <= 0.5)
    assert out.stage_of(0) == "grasp"
    assert out.stage_of(s0) == "skill"
    assert out.stage_of(len(out) - 1) == "transition"


def test_generate_collision_propagates():
    src = source_demo()
    cfg = TransferConfig(collision_check=lambda p: False)
    with pytest.raises(CollisionDetected):
        generate_demo(src, src.keypoints, T_INIT, config=cfg)


def test_generate_requires_annotations():
    src = source_demo()
    plain = Demonstration([DemoStep(s.time_index, s.ee_pose, 1.0, None)
                           for s in src.steps])
    with pytest.raises(ParseError):
        generate_demo(plain, src.keypoints, T_INIT)


def test_generate_with_kinematic_chain():
    chain = six_dof_arm()
    steps = []
    # compact reachable demo in front of the arm, gentle wrist motion
    for t in range(12):
        rot = rot_y(np.pi / 2).multiply(rot_z(0.03 * t))
        trans = np.array([0.42 + 0.004 * t, 0.05 - 0.004 * t, 0.35])
        gripper = 1.0 if t < 4 else 0.0
        steps.append(DemoStep(t, Pose(rot, trans), gripper, None))
    src = Demonstration(
        steps, t_grasp=4, skill_range=(7, 11),
        source_object_pose=Pose(rot_z(0.2), np.array([0.45, 0.0, 0.10])),
        keypoints=KeypointAnnotation([0.01, 0.0, 0.02], [0.05, 0.0, 0.03]),
    )
    cfg = TransferConfig(chain=chain, step=0.02)
    out = generate_demo(src, src.keypoints, src.source_object_pose,
                        config=cfg)
    qs = np.array([s.proprio for s in out.steps])
    assert qs.shape == (len(out), 6)
    for s in out.steps:
        pose = fk(chain, s.proprio)
        assert np.linalg.norm(pose.translation - s.ee_pose.translation) < 1e-3
    # warm-started solutions stay on one branch
    assert np.abs(np.diff(qs, axis=0)).max() < 0.6
