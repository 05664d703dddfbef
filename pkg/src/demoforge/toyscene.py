"""Self-contained tabletop scene: a teapot family, a cup, and one scripted
pour demonstration with rendered observations.

Everything is procedural and desk-scale (meters), so the full pipeline runs
end to end without external assets: `python3 -m demoforge.toyscene --out DIR`
writes the source dataset, the target mesh family, annotations, cameras,
and a ready-to-run generation config.
"""

import argparse
import json
import os

import numpy as np

from demoforge.demo import (
    DemoStep,
    Demonstration,
    KeypointAnnotation,
    write_dataset,
)
from demoforge.geometry import Pose, Quat, rot_y, rot_z
from demoforge.mesh import TriMesh, save_obj
from demoforge.pointcloud import (
    LABEL_GOAL,
    LABEL_OBJECT,
    Workspace,
    fps,
    scan_scene,
)
from demoforge.render import Camera, look_at_pose, save_scene_cameras
from demoforge.shapes import (
    cone_mesh,
    cylinder_mesh,
    icosphere,
    merge_meshes,
    torus_arc_mesh,
)
from demoforge.transfer import object_pose_track, plan_transition

TABLE_Z = 0.0
TEAPOT_BODY = (0.055, 0.048, 0.042)  # ellipsoid semi-axes, meters
SOURCE_STEP = 0.015  # m between scripted waypoints, under the 2 cm replay budget
CUP_POSE = Pose(Quat.identity(), np.array([0.45, 0.32, 0.035]))
HOME_POSE = Pose(rot_y(0.25), np.array([0.30, -0.25, 0.45]))
WORKSPACE = Workspace((0.0, -0.6, -0.01), (1.0, 0.7, 0.8))


def teapot_mesh(body_scale=(1.0, 1.0, 1.0), handle_scale=1.0,
                spout_scale=1.0, subdivisions=3, mesh_id="teapot") -> TriMesh:
    """Ellipsoid body, arc handle on -x, conical spout on +x."""
    sx, sy, sz = body_scale
    radii = (TEAPOT_BODY[0] * sx, TEAPOT_BODY[1] * sy, TEAPOT_BODY[2] * sz)
    body = icosphere(subdivisions, radii=radii)

    handle = torus_arc_mesh(
        ring_radius=0.030 * handle_scale,
        tube_radius=0.007 * handle_scale,
        arc_deg=230.0, segments=18, tube_segments=8,
    )
    # the arc apex points toward +x; spin it around to hang off -x
    flip = rot_z(np.pi).as_matrix()
    hv = handle.vertices @ flip.T + np.array([-radii[0] * 0.92, 0.0, 0.004])
    handle = TriMesh(hv, handle.faces)

    # frustum, not a sharp cone: the rim needs real pixel area so the
    # function keypoint survives rendering at modest resolutions
    spout = cone_mesh(
        base_radius=0.013 * spout_scale,
        length=0.050 * spout_scale,
        segments=12,
        base_center=(radii[0] * 0.82, 0.0, 0.012),
        axis=(0.92, 0.0, 0.39),
        tip_radius=0.006 * spout_scale,
    )
    return merge_meshes([body, handle, spout], mesh_id=mesh_id)


def cup_mesh() -> TriMesh:
    return cylinder_mesh(radius=0.032, height=0.07, segments=20,
                         mesh_id="cup")


def mesh_family(n: int, seed: int = 7) -> list:
    """n teapot variants: (mesh_id, TriMesh), deterministic in the seed."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        body = tuple(rng.uniform(0.85, 1.20, 3))
        mesh_id = f"teapot_{k:03d}"
        out.append((mesh_id, teapot_mesh(
            body_scale=body,
            handle_scale=float(rng.uniform(0.85, 1.15)),
            spout_scale=float(rng.uniform(0.85, 1.20)),
            mesh_id=mesh_id,
        )))
    return out


def source_keypoints(mesh: TriMesh) -> KeypointAnnotation:
    """Handle apex (most -x vertex) affords the grasp; spout tip does the work."""
    aff = mesh.vertices[int(np.argmin(mesh.vertices[:, 0]))]
    fun = mesh.vertices[int(np.argmax(mesh.vertices[:, 0]))]
    return KeypointAnnotation(aff, fun)


def rest_pose(mesh: TriMesh, x: float, y: float, yaw: float = 0.0) -> Pose:
    """Sit the mesh on the table plane at (x, y)."""
    z = TABLE_Z - mesh.vertices[:, 2].min()
    return Pose(rot_z(yaw), np.array([x, y, z]))


def scene_cameras(width: int = 128, height: int = 128,
                  focal: float = 128.0) -> list:
    """Two close side views for density plus one high view for coverage.

    Goal-anchored release swings the carried object around the pour pivot by
    the sampled yaw, so set-down paths sweep ~0.6 m around the table center;
    the overhead camera's frustum covers that whole envelope on its own,
    keeping every reachable carry pose visible to at least one camera.
    """
    center = np.array([0.45, 0.08, 0.08])
    eyes = [np.array([0.18, -0.26, 0.33]), np.array([0.74, 0.40, 0.38])]
    cams = [
        Camera(focal, focal, (width - 1) / 2, (height - 1) / 2,
               width, height, look_at_pose(eye, center))
        for eye in eyes
    ]
    cams.append(Camera(focal, focal, (width - 1) / 2, (height - 1) / 2,
                       width, height,
                       look_at_pose((0.36, 0.04, 1.62), (0.36, 0.04, 0.10))))
    return cams


def _pour_skill(base: Pose, steps: int, pivot) -> list:
    """Tilt about a horizontal axis through the pivot, with a small drift."""
    poses = []
    for k in range(steps):
        a = k / (steps - 1)
        theta = 1.1 * np.sin(np.pi * a)
        drift = np.array([0.0, 0.012 * np.sin(2 * np.pi * a),
                          0.004 * np.sin(np.pi * a)])
        tilt = Pose(rot_y(theta), pivot - rot_y(theta).rotate(pivot))
        pose = Pose(Quat.identity(), drift).compose(tilt.compose(base))
        poses.append(pose)
    return poses


def build_source_demo(mesh: TriMesh, t_init: Pose, cameras,
                      n_points: int = 1024, render: bool = True,
                      cup: TriMesh = None,
                      cup_pose: Pose = CUP_POSE) -> Demonstration:
    """Scripted pour: approach, grasp the handle, carry to the cup, tilt,
    set back down, release. Observations are rendered when `render` is set."""
    kp = source_keypoints(mesh)
    handle_world = t_init.apply(kp.affording_point)
    grasp = Pose(rot_y(0.35), handle_world + np.array([0.0, 0.0, 0.010]))
    pregrasp = Pose(grasp.rotation, grasp.translation + np.array([0, 0, 0.10]))

    path = []

    def extend(segment, skip_first=True):
        items = list(segment)
        path.extend(items[1:] if skip_first else items)

    extend(plan_transition(HOME_POSE, pregrasp, SOURCE_STEP, 5, gripper=1.0),
           skip_first=False)
    extend(plan_transition(pregrasp, grasp, SOURCE_STEP, 5, gripper=1.0))
    # close and settle: three consecutive closed readings confirm the grasp
    t_grasp = len(path)
    path += [(grasp, 0.0)] * 3

    lifted = Pose(grasp.rotation, grasp.translation + np.array([0, 0, 0.12]))
    extend(plan_transition(grasp, lifted, SOURCE_STEP, 5, gripper=0.0))

    # place the spout tip over the cup rim before tilting
    fun_world = t_init.apply(kp.function_point)
    p_fun_ee = grasp.inverse().apply(fun_world)
    rim = cup_pose.translation + np.array([0.0, -0.030, 0.055])
    pour_base = Pose(grasp.rotation, rim - grasp.rotation.rotate(p_fun_ee))
    extend(plan_transition(lifted, pour_base, SOURCE_STEP, 5, gripper=0.0))

    t_skill_start = len(path)
    # the ee rides a ~0.18 m lever arm about the spout pivot; 36 samples
    # keep per-step ee motion under 2 cm
    pour = _pour_skill(pour_base, 36, rim)
    path += [(p, 0.0) for p in pour]
    t_skill_end = len(path) - 1

    setdown = Pose(grasp.rotation,
                   grasp.translation + np.array([0.05, 0.08, 0.0]))
    extend(plan_transition(pour[-1], setdown, SOURCE_STEP, 5, gripper=0.0))
    path += [(setdown, 1.0)] * 2
    retreat_to = Pose(HOME_POSE.rotation,
                      setdown.translation + np.array([-0.05, -0.08, 0.15]))
    extend(plan_transition(setdown, retreat_to, SOURCE_STEP, 5, gripper=1.0))

    steps = [DemoStep(t, pose, g, None) for t, (pose, g) in enumerate(path)]

    if render:
        if cup is None:
            cup = cup_mesh()
        obj_poses = object_pose_track(steps, t_init)
        for t, s in enumerate(steps):
            frame = scan_scene(
                [(mesh, obj_poses[t], LABEL_OBJECT),
                 (cup, cup_pose, LABEL_GOAL)],
                cameras, WORKSPACE,
            )
            s.cloud = fps(frame, n_points)

    return Demonstration(
        steps,
        t_grasp=t_grasp,
        skill_range=(t_skill_start, t_skill_end),
        source_object_pose=t_init,
        keypoints=kp,
        mesh_id=mesh.mesh_id,
        seed=None,
    )


def write_scene(out_dir, n_meshes: int = 12, seed: int = 7,
                n_points: int = 1024, resolution: int = 128) -> dict:
    """Materialize the scene on disk; returns the generation config."""
    os.makedirs(out_dir, exist_ok=True)
    mesh_dir = os.path.join(out_dir, "meshes")
    os.makedirs(mesh_dir, exist_ok=True)

    source = teapot_mesh(mesh_id="teapot_source")
    t_init = rest_pose(source, 0.45, 0.05)
    cameras = scene_cameras(resolution, resolution, float(resolution))
    demo = build_source_demo(source, t_init, cameras, n_points=n_points)

    save_obj(source, os.path.join(out_dir, "source_teapot.obj"))
    for mesh_id, mesh in mesh_family(n_meshes, seed):
        save_obj(mesh, os.path.join(mesh_dir, f"{mesh_id}.obj"))
    save_scene_cameras(cameras, os.path.join(out_dir, "scene_cameras.json"))
    write_dataset([demo], os.path.join(out_dir, "source"))

    kp = demo.keypoints
    with open(os.path.join(out_dir, "annotations.json"), "w",
              encoding="utf-8") as fh:
        json.dump({
            "skill_range": list(demo.skill_range),
            "affording_point": kp.affording_point.tolist(),
            "function_point": kp.function_point.tolist(),
            "initial_pose": t_init.to_array().tolist(),
        }, fh, indent=2)
        fh.write("\n")

    config = {
        "source_dataset": "source",
        "source_demo": 0,
        "source_mesh": "source_teapot.obj",
        "meshes_dir": "meshes",
        "results_dir": "keypoints",
        "cameras": "scene_cameras.json",
        "split": [n_meshes, 3],
        "sampler": {
            "x_range": [0.35, 0.55],
            "y_range": [-0.05, 0.15],
            "yaw_range": [0.0, np.pi],
            "z": float(t_init.translation[2]),
        },
        "mode": "goal-anchored",
        "transition": {"step": 0.015, "min_steps": 5},
        "n_points": n_points,
        "workers": 1,
        "dbscan_eps": 0.01,
        "workspace": {"lo": WORKSPACE.lo.tolist(), "hi": WORKSPACE.hi.tolist()},
        "backend": {"kind": "geometric"},
        "rig": {"views": 8, "resolution": resolution,
                "focal": float(resolution)},
        "chain": None,
        "robot_links": None,
        "seed": 1234,
    }
    with open(os.path.join(out_dir, "run_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="write the bundled tabletop scene to a directory")
    parser.add_argument("--out", required=True)
    parser.add_argument("--meshes", type=int, default=12)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--points", type=int, default=1024)
    parser.add_argument("--resolution", type=int, default=128)
    args = parser.parse_args(argv)
    write_scene(args.out, args.meshes, args.seed, args.points,
                args.resolution)
    print(f"scene written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
