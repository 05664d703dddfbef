"""Segmented point cloud operations: crop, FPS, cluster filtering, assembly.

Clouds carry per-point semantic labels:
    0 robot, 1 object (manipulated), 2 goal (scene/goal object), 3 other.
All positions are float64 (x, y, z) in meters; dataset files store float32.
"""

import numpy as np
from sklearn.cluster import DBSCAN

from demoforge import _kernels
from demoforge.errors import EmptyResult, IndexOutOfRange, TooFewPoints
from demoforge.render import depth_to_points, render_scene

LABEL_ROBOT = 0
LABEL_OBJECT = 1
LABEL_GOAL = 2
LABEL_OTHER = 3

DEFAULT_CLOUD_SIZE = 1024
DBSCAN_MIN_PTS = 10


class SegmentedPointCloud:
    """Points (N, 3) float64 + labels (N,) uint8."""

    __slots__ = ("points", "labels")

    def __init__(self, points, labels):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lab = np.asarray(labels, dtype=np.uint8).reshape(-1)
        if pts.shape[0] != lab.shape[0]:
            raise ValueError("points and labels length mismatch")
        self.points = np.ascontiguousarray(pts)
        self.labels = np.ascontiguousarray(lab)

    def __len__(self) -> int:
        return self.points.shape[0]

    def select(self, mask_or_indices) -> "SegmentedPointCloud":
        return SegmentedPointCloud(
            self.points[mask_or_indices], self.labels[mask_or_indices]
        )

    @classmethod
    def concatenate(cls, clouds) -> "SegmentedPointCloud":
        return cls(
            np.concatenate([c.points for c in clouds], axis=0),
            np.concatenate([c.labels for c in clouds], axis=0),
        )


class Workspace:
    """Axis-aligned crop box, inclusive bounds."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(hi, dtype=np.float64).reshape(3)
        if np.any(self.lo >= self.hi):
            raise ValueError("workspace box must have lo < hi on every axis")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


def crop(cloud: SegmentedPointCloud, box: Workspace) -> SegmentedPointCloud:
    """Keep points inside the box; raises EmptyResult if none survive."""
    mask = box.contains(cloud.points)
    if not mask.any():
        raise EmptyResult("no points inside workspace box")
    return cloud.select(mask)


def fps(cloud: SegmentedPointCloud, n: int, seed=None) -> SegmentedPointCloud:
    """Greedy farthest point sampling down to exactly n points.

    The first point is the one farthest from the cloud centroid and every
    subsequent pick maximizes min-distance to the selected set, ties to the
    lowest index, so the result is fully deterministic; `seed` is accepted
    for interface compatibility and unused.
    """
    del seed
    N = len(cloud)
    if N < n:
        raise TooFewPoints(f"cloud has {N} points, requested {n}")
    if n <= 0:
        raise ValueError("sample size must be positive")
    centroid = cloud.points.mean(axis=0)
    start = int(np.argmax(np.einsum("ij,ij->i", cloud.points - centroid, cloud.points - centroid)))
    idx = _kernels.fps_indices(cloud.points, n, start)
    return cloud.select(idx)


def dbscan_filter(
    cloud: SegmentedPointCloud, eps: float, min_pts: int = DBSCAN_MIN_PTS
) -> SegmentedPointCloud:
    """Keep the largest DBSCAN cluster; outliers and smaller clusters drop.

    Equal-size clusters tie-break to the one containing the lower minimum
    point index. All-noise input raises EmptyResult.
    """
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(cloud.points).labels_
    ids = np.unique(labels[labels >= 0])
    if ids.size == 0:
        raise EmptyResult("all points classified as noise")
    best = None
    best_key = None
    for cid in ids:
        members = np.nonzero(labels == cid)[0]
        key = (-members.size, members[0])
        if best_key is None or key < best_key:
            best_key = key
            best = members
    return cloud.select(best)


def assemble(
    real_goal_frames: list,
    sim_frames: list,
    t_s: int,
    t_s_new: int,
    skill_range_new: tuple,
    horizon: int,
    rng: np.random.Generator,
    n_points: int = DEFAULT_CLOUD_SIZE,
) -> list:
    """Compose per-step observation clouds for one generated demonstration.

    For step t inside skill_range_new the goal points replay the source frame
    t - t_s_new + t_s; outside the skill the goal points come from a source
    frame drawn uniformly over the source demo's non-skill timestamps. Goal
    points always come from the source frames, robot/object points from the
    simulated frames; the concatenation is FPS-downsampled to exactly
    n_points. Frames draw from independently spawned RNG streams so the
    result does not depend on evaluation order.
    """
    if horizon != len(sim_frames):
        raise ValueError("horizon must match the simulated frame count")
    lo, hi = int(skill_range_new[0]), int(skill_range_new[1])
    n_src = len(real_goal_frames)
    goal_cache = [None] * n_src

    def goal_points(i: int) -> SegmentedPointCloud:
        if goal_cache[i] is None:
            frame = real_goal_frames[i]
            goal_cache[i] = frame.select(frame.labels == LABEL_GOAL)
        return goal_cache[i]

    # replay maps [lo, hi] onto [t_s, t_s + (hi - lo)] of the source, so
    # that window is the source skill segment; everything else may be drawn
    non_skill = [i for i in range(n_src) if not (t_s <= i <= t_s + (hi - lo))]
    streams = rng.spawn(horizon)
    out = []
    for t in range(horizon):
        if lo <= t <= hi:
            i = t - t_s_new + t_s
            if i < 0 or i >= n_src:
                raise IndexOutOfRange(
                    f"skill replay index {i} outside source demo of {n_src} steps"
                )
        else:
            if not non_skill:
                raise IndexOutOfRange("source demo has no non-skill frames to sample")
            i = non_skill[int(streams[t].integers(0, len(non_skill)))]
        merged = SegmentedPointCloud.concatenate([goal_points(i), sim_frames[t]])
        if len(merged) < n_points:
            # cyclic padding; FPS cannot upsample and a run must not die on
            # one sparse frame
            reps = np.resize(np.arange(len(merged)), n_points)
            merged = merged.select(reps)
            out.append(merged)
        else:
            out.append(fps(merged, n_points))
    return out


def scan_scene(items, cameras, workspace: Workspace = None) -> SegmentedPointCloud:
    """Fused labeled scan of posed meshes from a set of cameras.

    `items` are (mesh, pose, label) triples as taken by the renderer; every
    camera's foreground pixels are unprojected and concatenated, then cropped
    to the workspace when one is given.
    """
    clouds = []
    for cam in cameras:
        img, labels = render_scene(items, cam)
        pts, face_ids = depth_to_points(img, cam)
        if len(pts):
            clouds.append(SegmentedPointCloud(pts, labels[face_ids]))
    if not clouds:
        raise EmptyResult("no camera sees any of the meshes")
    merged = SegmentedPointCloud.concatenate(clouds)
    return crop(merged, workspace) if workspace is not None else merged


def write_ply(cloud: SegmentedPointCloud, path) -> None:
    """ASCII PLY with x, y, z float properties and a uchar label."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar label\nend_header\n")
        for p, lab in zip(cloud.points, cloud.labels):
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(lab)}\n")
