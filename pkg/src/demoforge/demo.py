"""Demonstration data model, stage boundaries, and dataset serialization.

A demonstration splits into three stages: the grasp segment [0, t_grasp],
the skill segment [t_s, t_e], and transitions everywhere else. The gripper
channel is 1 = open, 0 = closed, and must be closed from the grasp through
the end of the skill.

Dataset layout: <dir>/manifest.json plus one demo_<k>/ directory per
demonstration holding clouds.bin (little-endian float32, steps x N x 4
rows of x, y, z, label) and traj.bin (little-endian float64, steps x 8
rows of pose 7-tuple + gripper), with proprio.bin (float64 joint angles)
when every step carries proprioception.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from demoforge.errors import (
    IndexOutOfRange,
    IoError,
    KeypointOffSurface,
    NoGraspFound,
    ParseError,
)
from demoforge.geometry import Pose
from demoforge.mesh import KEYPOINT_SURFACE_TOL, surface_distance
from demoforge.pointcloud import SegmentedPointCloud

GRASP_THRESHOLD = 0.5
GRASP_PERSISTENCE = 3  # consecutive closed readings that confirm a grasp
SCHEMA_VERSION = 1


@dataclass
class DemoStep:
    time_index: int
    ee_pose: Pose
    gripper: float
    cloud: SegmentedPointCloud = None
    proprio: np.ndarray = None

    def __post_init__(self):
        if not 0.0 <= self.gripper <= 1.0:
            raise ParseError(f"gripper value {self.gripper} outside [0, 1]")
        if self.proprio is not None:
            self.proprio = np.asarray(self.proprio, dtype=np.float64)


@dataclass
class KeypointAnnotation:
    affording_point: np.ndarray
    function_point: np.ndarray

    def __post_init__(self):
        self.affording_point = np.asarray(self.affording_point, dtype=np.float64)
        self.function_point = np.asarray(self.function_point, dtype=np.float64)
        if self.affording_point.shape != (3,) or self.function_point.shape != (3,):
            raise ParseError("keypoints must be 3-vectors")


@dataclass
class Demonstration:
    steps: list
    t_grasp: int = None
    skill_range: tuple = None
    source_object_pose: Pose = field(default_factory=Pose.identity)
    keypoints: KeypointAnnotation = None
    mesh_id: str = "source"
    seed: int = None

    def __post_init__(self):
        if not self.steps:
            raise ParseError("demonstration has no steps")
        if (self.t_grasp is None) != (self.skill_range is None):
            raise ParseError("t_grasp and skill_range must be set together")
        if self.t_grasp is None:
            return
        t_s, t_e = self.skill_range
        self.skill_range = (int(t_s), int(t_e))
        if not 0 <= self.t_grasp < t_s <= t_e < len(self.steps):
            raise ParseError(
                f"stage boundaries violate 0 <= {self.t_grasp} < {t_s} "
                f"<= {t_e} < {len(self.steps)}"
            )
        g = self.gripper_values()
        if np.any(g[: self.t_grasp] <= GRASP_THRESHOLD):
            raise ParseError("gripper closed before the grasp time")
        if np.any(g[self.t_grasp: t_e + 1] > GRASP_THRESHOLD):
            raise ParseError("gripper open between grasp and skill end")

    def __len__(self) -> int:
        return len(self.steps)

    def gripper_values(self) -> np.ndarray:
        return np.array([s.gripper for s in self.steps])

    def poses(self) -> list:
        return [s.ee_pose for s in self.steps]

    def stage_of(self, t: int) -> str:
        if not 0 <= t < len(self.steps):
            raise IndexOutOfRange(f"step {t} outside demo of {len(self.steps)}")
        if self.t_grasp is None:
            return "transition"
        if t <= self.t_grasp:
            return "grasp"
        if self.skill_range[0] <= t <= self.skill_range[1]:
            return "skill"
        return "transition"


def extract_grasp_time(gripper) -> int:
    """First index where the gripper crosses closed and stays closed."""
    g = np.asarray(gripper, dtype=np.float64)
    closed = g <= GRASP_THRESHOLD
    for t in range(len(g) - GRASP_PERSISTENCE + 1):
        if closed[t: t + GRASP_PERSISTENCE].all():
            return t
    raise NoGraspFound("gripper never stays closed")


@dataclass
class Annotations:
    skill_range: tuple
    keypoints: KeypointAnnotation
    initial_pose: Pose


def load_annotations(path, mesh=None) -> Annotations:
    """Read the human annotation file; validates keypoints against mesh."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        t_s, t_e = (int(v) for v in data["skill_range"])
        kp = KeypointAnnotation(data["affording_point"], data["function_point"])
        init = Pose.from_array(data["initial_pose"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad annotation file ({e})") from e
    if t_s > t_e or t_s < 0:
        raise ParseError(f"{path}: skill range [{t_s}, {t_e}] is inverted")
    if mesh is not None:
        for name, point in (("affording_point", kp.affording_point),
                            ("function_point", kp.function_point)):
            d = surface_distance(mesh, point)
            if d > KEYPOINT_SURFACE_TOL:
                raise KeypointOffSurface(
                    f"{path}: {name} is {d * 100:.1f} cm off the mesh surface"
                )
    return Annotations((t_s, t_e), kp, init)


# ---- dataset serialization ----


def _demo_arrays(demo: Demonstration):
    steps = len(demo.steps)
    n = len(demo.steps[0].cloud.points)
    clouds = np.empty((steps, n, 4), dtype="<f4")
    traj = np.empty((steps, 8), dtype="<f8")
    for t, s in enumerate(demo.steps):
        if s.cloud is None:
            raise ParseError(f"step {t} has no cloud to serialize")
        if len(s.cloud.points) != n:
            raise ParseError("cloud size varies within a demonstration")
        clouds[t, :, :3] = s.cloud.points
        clouds[t, :, 3] = s.cloud.labels
        traj[t, :7] = s.ee_pose.to_array()
        traj[t, 7] = s.gripper
    proprio = None
    if all(s.proprio is not None for s in demo.steps):
        proprio = np.stack([s.proprio for s in demo.steps]).astype("<f8")
    return clouds, traj, proprio


class DatasetWriter:
    """Streams demonstrations into a dataset directory one at a time.

    Demo payloads hit disk inside add(), so a long run never holds more than
    the demo in flight; close() finalizes manifest.json and returns it.
    """

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self._entries = []
        self._n_points = None
        self._closed = False
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as e:
            raise IoError(f"cannot create dataset dir {out_dir}: {e}") from e

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, demo: Demonstration) -> None:
        if self._closed:
            raise IoError(f"dataset under {self.out_dir} already finalized")
        k = len(self._entries)
        if demo.steps[0].cloud is None:
            raise ParseError(f"demo {k} has no clouds to serialize")
        clouds, traj, proprio = _demo_arrays(demo)
        if self._n_points is None:
            self._n_points = clouds.shape[1]
        elif clouds.shape[1] != self._n_points:
            raise ParseError(
                f"demo {k} has N={clouds.shape[1]}, dataset uses N={self._n_points}"
            )
        sub = os.path.join(self.out_dir, f"demo_{k}")
        try:
            os.makedirs(sub, exist_ok=True)
            with open(os.path.join(sub, "clouds.bin"), "wb") as fh:
                fh.write(clouds.tobytes())
            with open(os.path.join(sub, "traj.bin"), "wb") as fh:
                fh.write(traj.tobytes())
            if proprio is not None:
                with open(os.path.join(sub, "proprio.bin"), "wb") as fh:
                    fh.write(proprio.tobytes())
        except OSError as e:
            raise IoError(f"cannot write dataset under {self.out_dir}: {e}") from e
        self._entries.append({
            "dir": f"demo_{k}",
            "steps": len(demo.steps),
            "mesh_id": demo.mesh_id,
            "pose": demo.source_object_pose.to_array().tolist(),
            "seed": demo.seed,
            "t_grasp": demo.t_grasp,
            "skill_range": list(demo.skill_range) if demo.skill_range else None,
            "keypoints": None if demo.keypoints is None else {
                "affording_point": demo.keypoints.affording_point.tolist(),
                "function_point": demo.keypoints.function_point.tolist(),
            },
            "proprio_joints": None if proprio is None else proprio.shape[1],
        })

    def close(self) -> dict:
        self._closed = True
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "n_points": self._n_points,
            "demos": self._entries,
        }
        try:
            with open(os.path.join(self.out_dir, "manifest.json"), "w",
                      encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2)
                fh.write("\n")
        except OSError as e:
            raise IoError(f"cannot write dataset under {self.out_dir}: {e}") from e
        return manifest


def write_dataset(demos, out_dir) -> dict:
    """Write all demos plus manifest.json under out_dir; returns the manifest."""
    writer = DatasetWriter(out_dir)
    for demo in demos:
        writer.add(demo)
    return writer.close()


def read_dataset(in_dir):
    """Load a dataset directory; returns (demos, manifest)."""
    try:
        with open(os.path.join(in_dir, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise IoError(f"cannot read manifest under {in_dir}: {e}") from e
    n = manifest["n_points"]
    demos = []
    for entry in manifest["demos"]:
        sub = os.path.join(in_dir, entry["dir"])
        steps = entry["steps"]
        try:
            clouds = np.fromfile(os.path.join(sub, "clouds.bin"), "<f4")
            traj = np.fromfile(os.path.join(sub, "traj.bin"), "<f8")
        except OSError as e:
            raise IoError(f"missing demo files in {sub}: {e}") from e
        if clouds.size != steps * n * 4 or traj.size != steps * 8:
            raise ParseError(f"{sub}: binary sizes disagree with the manifest")
        clouds = clouds.reshape(steps, n, 4)
        traj = traj.reshape(steps, 8)
        proprio = None
        ppath = os.path.join(sub, "proprio.bin")
        if entry.get("proprio_joints") and os.path.exists(ppath):
            proprio = np.fromfile(ppath, "<f8").reshape(steps, entry["proprio_joints"])
        demo_steps = [
            DemoStep(
                t,
                Pose.from_array(traj[t, :7]),
                float(traj[t, 7]),
                SegmentedPointCloud(clouds[t, :, :3].astype(np.float64),
                                    clouds[t, :, 3].astype(np.uint8)),
                None if proprio is None else proprio[t],
            )
            for t in range(steps)
        ]
        kp = entry.get("keypoints")
        demos.append(Demonstration(
            demo_steps,
            t_grasp=entry.get("t_grasp"),
            skill_range=tuple(entry["skill_range"]) if entry.get("skill_range") else None,
            source_object_pose=Pose.from_array(entry["pose"]),
            keypoints=None if kp is None else KeypointAnnotation(
                kp["affording_point"], kp["function_point"]),
            mesh_id=entry.get("mesh_id", "source"),
            seed=entry.get("seed"),
        ))
    return demos, manifest
