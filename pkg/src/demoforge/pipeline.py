"""Run orchestration: config validation, the four toolchain commands, and a
deterministic worker pool.

Every generated demo is a pure function of (master seed, mesh id, pose
index), so datasets are byte-identical regardless of worker count or task
scheduling. Per-demo failures are logged and skipped; the manifest only ever
lists completed demos.
"""

import glob
import hashlib
import json
import logging
import multiprocessing
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from demoforge.correspondence import (
    FilesBackend,
    GeometricBackend,
    ServiceBackend,
    render_views,
    transfer_keypoint,
)
from demoforge.demo import (
    DatasetWriter,
    KeypointAnnotation,
    read_dataset,
)
from demoforge.errors import (
    ConfigError,
    DegenerateCovariance,
    DemoforgeError,
    EmptyResult,
    IndexOutOfRange,
    ParseError,
)
from demoforge.geometry import Pose
from demoforge.kinematics import joint_frames, load_chain
from demoforge.mesh import (
    apply_canonical_pose,
    canonicalize_pca,
    load_mesh,
    save_obj,
)
from demoforge.pointcloud import (
    LABEL_GOAL,
    LABEL_OBJECT,
    LABEL_ROBOT,
    Workspace,
    assemble,
    dbscan_filter,
    scan_scene,
    write_ply,
)
from demoforge.render import load_scene_cameras
from demoforge.transfer import (
    PoseSampler,
    TransferConfig,
    generate_demo,
    object_pose_track,
    sample_pose,
)

log = logging.getLogger("demoforge")

BACKEND_KINDS = ("geometric", "files", "service")
MIN_CLOUD_SIZE = 64


@dataclass
class RunConfig:
    """Validated generation run parameters; paths are resolved absolute."""

    source_dataset: str
    source_mesh: str
    meshes_dir: str
    results_dir: str
    cameras: str
    split: tuple
    sampler: PoseSampler
    out_dir: str
    source_demo: int = 0
    mode: str = "goal-anchored"
    step: float = 0.01
    min_steps: int = 5
    n_points: int = 1024
    workers: int = 1
    dbscan_eps: float = 0.01
    workspace: Workspace = None
    backend: dict = field(default_factory=lambda: {"kind": "geometric"})
    rig: dict = field(default_factory=dict)
    chain: str = None
    robot_links: list = None
    raw_meshes_dir: str = None
    canonical_overrides: dict = field(default_factory=dict)
    seed: int = 0


def _resolve(base: str, path):
    return os.path.normpath(os.path.join(base, path))


def load_run_config(path, seed=None, jobs=None, out=None,
                    command="generate") -> RunConfig:
    """Parse + validate a run config file; CLI overrides win.

    `command` selects which referenced paths must already exist, so one
    config file drives every stage of the toolchain.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    base = os.path.dirname(os.path.abspath(path))
    try:
        sampler = PoseSampler(
            tuple(raw["sampler"]["x_range"]),
            tuple(raw["sampler"]["y_range"]),
            tuple(raw["sampler"]["yaw_range"]),
            float(raw["sampler"].get("z", 0.0)),
        )
        ws = None
        if raw.get("workspace"):
            ws = Workspace(raw["workspace"]["lo"], raw["workspace"]["hi"])
        split = tuple(int(v) for v in raw["split"])
        cfg = RunConfig(
            source_dataset=_resolve(base, raw["source_dataset"]),
            source_mesh=_resolve(base, raw["source_mesh"]),
            meshes_dir=_resolve(base, raw["meshes_dir"]),
            results_dir=_resolve(base, raw["results_dir"]),
            cameras=_resolve(base, raw["cameras"]),
            split=split,
            sampler=sampler,
            out_dir=_resolve(base, out if out is not None
                             else raw.get("out_dir", "dataset")),
            source_demo=int(raw.get("source_demo", 0)),
            mode=raw.get("mode", "goal-anchored"),
            step=float(raw.get("transition", {}).get("step", 0.01)),
            min_steps=int(raw.get("transition", {}).get("min_steps", 5)),
            n_points=int(raw.get("n_points", 1024)),
            workers=int(jobs if jobs is not None else raw.get("workers", 1)),
            dbscan_eps=float(raw.get("dbscan_eps", 0.01)),
            workspace=ws,
            backend=raw.get("backend", {"kind": "geometric"}),
            rig=raw.get("rig", {}),
            chain=_resolve(base, raw["chain"]) if raw.get("chain") else None,
            robot_links=[
                {"mesh": _resolve(base, r["mesh"]), "frame": int(r["frame"])}
                for r in raw["robot_links"]
            ] if raw.get("robot_links") else None,
            raw_meshes_dir=_resolve(base, raw["raw_meshes_dir"])
            if raw.get("raw_meshes_dir") else None,
            canonical_overrides=raw.get("canonical_overrides", {}),
            seed=int(seed if seed is not None else raw.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError, ParseError) as e:
        raise ConfigError(f"bad config {path}: {e}") from e
    validate_config(cfg, command)
    return cfg


def validate_config(cfg: RunConfig, command: str = "generate") -> None:
    if cfg.n_points < MIN_CLOUD_SIZE:
        raise ConfigError(
            f"n_points {cfg.n_points} below minimum {MIN_CLOUD_SIZE}")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if len(cfg.split) != 2 or cfg.split[0] < 1 or cfg.split[1] < 1:
        raise ConfigError(f"split must be two positive counts, got {cfg.split}")
    if cfg.mode not in ("goal-anchored", "literal"):
        raise ConfigError(f"unknown transfer mode {cfg.mode!r}")
    if cfg.step <= 0 or cfg.min_steps < 2:
        raise ConfigError("transition needs step > 0 and min_steps >= 2")
    kind = cfg.backend.get("kind")
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}")

    need_dirs = []
    need_files = []
    if command == "canonicalize":
        if not cfg.raw_meshes_dir:
            raise ConfigError("config has no raw_meshes_dir to canonicalize")
        need_dirs.append("raw_meshes_dir")
    elif command == "correspond":
        need_dirs += ["source_dataset", "meshes_dir"]
        need_files.append("source_mesh")
        if kind == "files" and not os.path.isdir(cfg.backend.get("root", "")):
            raise ConfigError("files backend needs an existing root directory")
        if kind == "service" and not cfg.backend.get("url"):
            raise ConfigError("service backend needs a url")
    elif command == "generate":
        need_dirs += ["source_dataset", "meshes_dir", "results_dir"]
        need_files += ["source_mesh", "cameras"]
        if cfg.chain and not os.path.isfile(cfg.chain):
            raise ConfigError(f"chain file {cfg.chain!r} does not exist")
        for rec in cfg.robot_links or []:
            if not os.path.isfile(rec["mesh"]):
                raise ConfigError(
                    f"robot link mesh {rec['mesh']!r} does not exist")
    elif command == "inspect":
        need_dirs.append("out_dir")
    else:
        raise ConfigError(f"unknown command {command!r}")

    for name in need_dirs:
        if not os.path.isdir(getattr(cfg, name)):
            raise ConfigError(f"{name} {getattr(cfg, name)!r} is not a directory")
    for name in need_files:
        if not os.path.isfile(getattr(cfg, name)):
            raise ConfigError(f"{name} {getattr(cfg, name)!r} does not exist")


def make_backend(spec: dict):
    kind = spec.get("kind")
    if kind == "geometric":
        return GeometricBackend()
    if kind == "files":
        return FilesBackend(spec["root"])
    if kind == "service":
        return ServiceBackend(spec["url"], stride=int(spec.get("stride", 4)))
    raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}")


def _list_meshes(meshes_dir: str) -> list:
    paths = sorted(glob.glob(os.path.join(meshes_dir, "*.obj")))
    return paths


# ---- canonicalize ----


def cmd_canonicalize(mesh_paths, out_dir, overrides=None) -> dict:
    """Canonicalize each mesh into out_dir; degenerate inputs are reported
    and skipped, never fatal."""
    overrides = overrides or {}
    os.makedirs(out_dir, exist_ok=True)
    report = {"outputs": [], "degenerate": [], "failed": [],
              "warnings": [], "overrides_applied": []}
    for path in mesh_paths:
        try:
            mesh = load_mesh(path)
        except DemoforgeError as e:
            report["failed"].append({"mesh": str(path), "error": str(e)})
            continue
        try:
            if mesh.mesh_id in overrides:
                pose = Pose.from_array(overrides[mesh.mesh_id])
                canon = apply_canonical_pose(mesh, pose)
                report["overrides_applied"].append(mesh.mesh_id)
            else:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    canon = canonicalize_pca(mesh)
                for w in caught:
                    report["warnings"].append(
                        {"mesh": mesh.mesh_id, "message": str(w.message)})
        except DegenerateCovariance as e:
            report["degenerate"].append(
                {"mesh": mesh.mesh_id, "error": str(e)})
            continue
        out_path = os.path.join(out_dir, f"{mesh.mesh_id}.obj")
        save_obj(canon, out_path)
        report["outputs"].append(out_path)
    return report


# ---- correspond ----


def cmd_correspond(cfg: RunConfig) -> dict:
    """Transfer the source keypoints onto every target mesh.

    Writes one result file per mesh into results_dir; per-mesh failures are
    recorded in the report and the run continues.
    """
    backend = make_backend(cfg.backend)
    source = load_mesh(cfg.source_mesh)
    _, manifest = read_dataset(cfg.source_dataset)
    entry = manifest["demos"][cfg.source_demo]
    if entry.get("keypoints") is None:
        raise ConfigError("source demo carries no keypoint annotations")
    kp = entry["keypoints"]
    rig = {
        "n_views": int(cfg.rig.get("views", 8)),
        "resolution": int(cfg.rig.get("resolution", 256)),
        "focal": float(cfg.rig.get("focal", 256.0)),
    }
    os.makedirs(cfg.results_dir, exist_ok=True)
    src_views = render_views(source, backend, rig["n_views"],
                             rig["resolution"], rig["focal"])
    report = {"results": [], "failures": []}
    for path in _list_meshes(cfg.meshes_dir):
        mesh = load_mesh(path)
        try:
            tgt_views = render_views(mesh, backend, rig["n_views"],
                                     rig["resolution"], rig["focal"])
            aff = transfer_keypoint(
                source, kp["affording_point"], mesh, backend,
                n_views=rig["n_views"], resolution=rig["resolution"],
                focal=rig["focal"], src_views=src_views, tgt_views=tgt_views)
            fun = transfer_keypoint(
                source, kp["function_point"], mesh, backend,
                n_views=rig["n_views"], resolution=rig["resolution"],
                focal=rig["focal"], src_views=src_views, tgt_views=tgt_views)
        except DemoforgeError as e:
            log.warning("correspond failed for %s: %s", mesh.mesh_id, e)
            report["failures"].append(
                {"mesh_id": mesh.mesh_id, "error": str(e)})
            continue
        result = {
            "mesh_id": mesh.mesh_id,
            "affording_point": aff.keypoint.tolist(),
            "function_point": fun.keypoint.tolist(),
            "confidence": {"affording": aff.confidence,
                           "function": fun.confidence},
            "model": getattr(backend, "model", "geometric"),
        }
        out_path = os.path.join(cfg.results_dir, f"{mesh.mesh_id}.json")
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
        report["results"].append(out_path)
    return report


# ---- generate ----


def _mesh_entropy(mesh_id: str) -> int:
    digest = hashlib.sha256(mesh_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def task_seed(master_seed: int, mesh_id: str, pose_index: int):
    """Deterministic, order-free seed for one (mesh, pose) task."""
    return np.random.SeedSequence(
        [master_seed, _mesh_entropy(mesh_id), pose_index])


_STATE = {}


def _init_worker(state) -> None:
    _STATE.update(state)


def _build_state(cfg: RunConfig) -> dict:
    demos, _ = read_dataset(cfg.source_dataset)
    try:
        source = demos[cfg.source_demo]
    except IndexError:
        raise ConfigError(
            f"source dataset has no demo {cfg.source_demo}") from None
    if source.t_grasp is None or source.keypoints is None:
        raise ConfigError("source demo is missing stage or keypoint annotations")

    # goal points replay from the source capture; filter outliers once here
    goal_frames = []
    for s in source.steps:
        goal = s.cloud.select(s.cloud.labels == LABEL_GOAL)
        if cfg.dbscan_eps > 0 and len(goal) > 0:
            try:
                goal = dbscan_filter(goal, cfg.dbscan_eps)
            except EmptyResult:
                pass  # sparse frame; better unfiltered than empty
        goal_frames.append(goal)

    meshes = {}
    results = {}
    for path in _list_meshes(cfg.meshes_dir)[: cfg.split[0]]:
        mesh = load_mesh(path)
        result_path = os.path.join(cfg.results_dir, f"{mesh.mesh_id}.json")
        if not os.path.isfile(result_path):
            results[mesh.mesh_id] = None
        else:
            with open(result_path, encoding="utf-8") as fh:
                results[mesh.mesh_id] = json.load(fh)
        meshes[mesh.mesh_id] = mesh

    chain = load_chain(cfg.chain) if cfg.chain else None
    links = []
    for rec in cfg.robot_links or []:
        links.append((load_mesh(rec["mesh"]), rec["frame"]))

    return {
        "cfg": cfg,
        "source": source,
        "goal_frames": goal_frames,
        "meshes": meshes,
        "mesh_ids": list(meshes),
        "results": results,
        "cameras": load_scene_cameras(cfg.cameras),
        "chain": chain,
        "links": links,
    }


def _run_task(task):
    """One (mesh index, pose index) demo; returns the built Demonstration
    or a failure record. Runs in a worker process."""
    mesh_idx, pose_idx = task
    st = _STATE
    cfg = st["cfg"]
    mesh_id = st["mesh_ids"][mesh_idx]
    result = st["results"][mesh_id]
    if result is None:
        return ("fail", mesh_id, pose_idx, "no correspondence result")
    try:
        ss = task_seed(cfg.seed, mesh_id, pose_idx)
        rng = np.random.default_rng(ss)
        t_new = sample_pose(cfg.sampler, rng)
        source = st["source"]
        chain = st["chain"]
        traj = generate_demo(
            source,
            KeypointAnnotation(result["affording_point"],
                               result["function_point"]),
            t_new,
            config=TransferConfig(mode=cfg.mode, step=cfg.step,
                                  min_steps=cfg.min_steps, chain=chain),
            mesh_id=mesh_id,
            seed=int(ss.generate_state(1)[0]),
        )
        mesh = st["meshes"][mesh_id]
        obj_poses = object_pose_track(traj.steps, t_new)
        sim_frames = []
        for t, step in enumerate(traj.steps):
            items = [(mesh, obj_poses[t], LABEL_OBJECT)]
            if chain is not None and st["links"] and step.proprio is not None:
                frames = joint_frames(chain, step.proprio)
                items += [(link, frames[idx], LABEL_ROBOT)
                          for link, idx in st["links"]]
            sim_frames.append(scan_scene(items, st["cameras"], cfg.workspace))
        clouds = assemble(
            st["goal_frames"], sim_frames,
            source.skill_range[0], traj.skill_range[0], traj.skill_range,
            len(traj), rng, cfg.n_points)
        for step, cloud in zip(traj.steps, clouds):
            step.cloud = cloud
        return ("ok", mesh_id, pose_idx, traj)
    except DemoforgeError as e:
        return ("fail", mesh_id, pose_idx, f"{type(e).__name__}: {e}")


def cmd_generate(cfg: RunConfig) -> dict:
    """Run the full mesh x pose fan-out and write the dataset.

    Returns the run summary; per-demo failures are skipped and counted, so
    the manifest lists only completed demos. Demos stream to disk as tasks
    finish (in task order, so results are independent of worker count).
    """
    state = _build_state(cfg)
    n_meshes = len(state["mesh_ids"])
    if n_meshes < cfg.split[0]:
        raise ConfigError(
            f"split requests {cfg.split[0]} meshes, only {n_meshes} available")
    tasks = [(mi, j) for mi in range(cfg.split[0])
             for j in range(cfg.split[1])]

    writer = DatasetWriter(cfg.out_dir)
    failures = []
    per_mesh = {mid: {"ok": 0, "failed": 0} for mid in state["mesh_ids"]}
    if cfg.workers == 1:
        _init_worker(state)
        try:
            _consume(map(_run_task, tasks), writer, failures, per_mesh)
        finally:
            _STATE.clear()
    else:
        # fork keeps the shared read-only state out of the pickle path
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
                max_workers=cfg.workers, mp_context=ctx,
                initializer=_init_worker, initargs=(state,)) as pool:
            _consume(pool.map(_run_task, tasks, chunksize=1),
                     writer, failures, per_mesh)

    writer.close()
    summary = {
        "requested": len(tasks),
        "completed": len(writer),
        "failures": failures,
        "per_mesh": per_mesh,
        "manifest": os.path.join(cfg.out_dir, "manifest.json"),
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def _consume(outcomes, writer, failures, per_mesh) -> None:
    for status, mesh_id, pose_idx, payload in outcomes:
        if status == "ok":
            writer.add(payload)
            per_mesh[mesh_id]["ok"] += 1
        else:
            log.warning("demo (%s, %d) failed: %s", mesh_id, pose_idx, payload)
            failures.append({"mesh_id": mesh_id, "pose_index": pose_idx,
                             "error": payload})
            per_mesh[mesh_id]["failed"] += 1


# ---- inspect ----


def cmd_inspect(dataset_dir, demo_index: int, frame: int,
                ply_path=None) -> str:
    """Text summary of one stored frame, optionally dumped as a PLY."""
    demos, manifest = read_dataset(dataset_dir)
    if not 0 <= demo_index < len(demos):
        raise IndexOutOfRange(
            f"demo {demo_index} outside dataset of {len(demos)}")
    demo = demos[demo_index]
    if not 0 <= frame < len(demo):
        raise IndexOutOfRange(
            f"frame {frame} outside demo of {len(demo)} steps")
    step = demo.steps[frame]
    labels, counts = np.unique(step.cloud.labels, return_counts=True)
    hist = {int(l): int(c) for l, c in zip(labels, counts)}
    lines = [
        f"dataset: {dataset_dir}",
        f"demo {demo_index} / {len(demos)}  mesh {demo.mesh_id}",
        f"steps {len(demo)}  t_grasp {demo.t_grasp}  "
        f"skill {list(demo.skill_range) if demo.skill_range else None}",
        f"object pose {np.round(demo.source_object_pose.to_array(), 4).tolist()}",
        f"frame {frame}  stage {demo.stage_of(frame)}  "
        f"gripper {step.gripper:g}",
        f"ee pose {np.round(step.ee_pose.to_array(), 4).tolist()}",
        f"cloud {len(step.cloud)} points, labels {hist}",
        f"n_points {manifest['n_points']}",
    ]
    if demo.keypoints is not None:
        lines.append(
            f"affording {np.round(demo.keypoints.affording_point, 4).tolist()}"
            f"  function {np.round(demo.keypoints.function_point, 4).tolist()}")
    if ply_path is not None:
        write_ply(step.cloud, ply_path)
        lines.append(f"wrote {ply_path}")
    return "\n".join(lines)
