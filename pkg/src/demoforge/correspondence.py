"""Keypoint transfer between meshes via multi-view descriptor matching.

Both meshes are rendered in their canonical pose from ring rigs scaled to
their own bounding spheres. Nearest source vertices around the keypoint are
projected into each source view, matched against the target view's
descriptor map by cosine similarity, unprojected at the target's rendered
depth, and averaged with the (clamped) match weights.
"""

import io
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from demoforge.errors import (
    EmptyMask,
    IoError,
    KeypointOffSurface,
    NoVisibleNeighbors,
    ParseError,
    ZeroWeight,
)
from demoforge.geometry import Pose
from demoforge.mesh import (
    KEYPOINT_SURFACE_TOL,
    TriMesh,
    nearest_vertices,
    surface_distance,
)
from demoforge.render import (
    RIG_ELEVATION,
    RIG_FOCAL,
    RIG_RADIUS_SCALE,
    RIG_RESOLUTION,
    RIG_VIEWS,
    Camera,
    DepthImage,
    render_depth,
    ring_rig,
    shaded_render,
    unproject,
)

DMAP_MAGIC = b"DMAP"
DEFAULT_NEIGHBORS = 8


@dataclass
class DescriptorMap:
    features: np.ndarray  # (H, W, D) float32
    camera: Camera = None
    mask: np.ndarray = None  # (H, W) bool foreground

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 3:
            raise ParseError("descriptor map must be H x W x D")
        if self.mask is None:
            self.mask = np.any(self.features != 0.0, axis=2)


def write_dmap(features, path) -> None:
    arr = np.ascontiguousarray(features, dtype="<f4")
    h, w, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(DMAP_MAGIC)
        fh.write(struct.pack("<III", h, w, d))
        fh.write(arr.tobytes())


def read_dmap(source) -> np.ndarray:
    """Parse DMAP bytes or a file path into an (H, W, D) float32 array."""
    raw = source if isinstance(source, bytes) else open(source, "rb").read()
    if len(raw) < 16 or raw[:4] != DMAP_MAGIC:
        raise ParseError("not a DMAP blob")
    h, w, d = struct.unpack("<III", raw[4:16])
    expect = 16 + 4 * h * w * d
    if len(raw) != expect:
        raise ParseError(f"DMAP payload is {len(raw)} bytes, expected {expect}")
    return np.frombuffer(raw, "<f4", h * w * d, 16).reshape(h, w, d).copy()


# ---- backends ----


class GeometricBackend:
    """Descriptor = surface point over bounding radius plus outward normal."""

    dim = 6

    def describe(self, mesh: TriMesh, img: DepthImage, camera: Camera,
                 view_index: int = 0) -> DescriptorMap:
        feats = np.zeros((camera.height, camera.width, self.dim), dtype=np.float32)
        vs, us = np.nonzero(img.foreground())
        if len(us):
            pix = np.column_stack([us, vs]).astype(np.float64)
            pts = unproject(camera, pix, img.depth[vs, us])
            normals = mesh.face_normals()[img.face_id[vs, us]]
            # orient away from the centroid so both windings describe alike
            flip = np.sum(normals * (pts - mesh.centroid()), axis=1) < 0
            normals[flip] *= -1.0
            feats[vs, us, :3] = pts / mesh.bounding_radius()
            feats[vs, us, 3:] = normals
        return DescriptorMap(feats, camera, img.foreground())


class FilesBackend:
    """Reads precomputed <mesh_id>_view<k>.dmap files from a directory."""

    def __init__(self, root):
        self.root = str(root)

    def describe(self, mesh: TriMesh, img: DepthImage, camera: Camera,
                 view_index: int = 0) -> DescriptorMap:
        path = f"{self.root}/{mesh.mesh_id}_view{view_index}.dmap"
        try:
            feats = read_dmap(path)
        except OSError as e:
            raise IoError(f"missing descriptor file {path}") from e
        if feats.shape[:2] != (camera.height, camera.width):
            raise ParseError(
                f"{path}: descriptor map {feats.shape[:2]} does not match "
                f"the {camera.height}x{camera.width} render"
            )
        return DescriptorMap(feats, camera, img.foreground())


class ServiceBackend:
    """Client for the HTTP descriptor service; sends shaded renders."""

    def __init__(self, base_url, stride=4, timeout=30.0, retries=5):
        self.base_url = base_url.rstrip("/")
        self.stride = stride
        self.timeout = timeout
        self.retries = retries
        self._identity = None

    def health(self) -> dict:
        import requests

        r = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        r.raise_for_status()
        self._identity = r.json()
        return self._identity

    @property
    def model(self) -> str:
        if self._identity is None:
            self.health()
        return self._identity.get("model", "unknown")

    def describe(self, mesh: TriMesh, img: DepthImage, camera: Camera,
                 view_index: int = 0) -> DescriptorMap:
        import requests
        from PIL import Image

        gray, _ = shaded_render(mesh, Pose.identity(), camera)
        buf = io.BytesIO()
        Image.fromarray(np.round(gray * 255).astype(np.uint8), "L").save(buf, "PNG")
        delay = 0.2
        for attempt in range(self.retries):
            r = requests.post(
                f"{self.base_url}/describe",
                files={"image": ("view.png", buf.getvalue(), "image/png")},
                data={"params": json.dumps({"stride": self.stride})},
                timeout=self.timeout,
            )
            if r.status_code == 503 and attempt < self.retries - 1:
                time.sleep(delay)
                delay *= 2
                continue
            r.raise_for_status()
            return DescriptorMap(read_dmap(r.content), camera, img.foreground())
        raise IoError(f"{self.base_url}/describe kept returning 503")


# ---- matching ----


def match_pixel(src_map: DescriptorMap, u, tgt_map: DescriptorMap,
                tgt_mask=None):
    """Best cosine match of the source descriptor at sub-pixel u.

    Returns (u_prime (2,) float64 integer-valued pixel, weight). Ties pick
    the first candidate in row-major order.
    """
    mask = tgt_map.mask if tgt_mask is None else np.asarray(tgt_mask, bool)
    if not np.any(mask):
        raise EmptyMask("target foreground is empty")
    desc = _bilinear(src_map.features, float(u[0]), float(u[1]))
    feats = tgt_map.features.astype(np.float64)
    dots = np.einsum("hwd,d->hw", feats, desc)
    norms = np.linalg.norm(feats, axis=2) * max(np.linalg.norm(desc), 1e-12)
    cos = np.where(mask, dots / np.maximum(norms, 1e-12), -np.inf)
    flat = int(np.argmax(cos))
    v, uu = divmod(flat, cos.shape[1])
    return np.array([float(uu), float(v)]), float(cos[v, uu])


def _bilinear(features, u, v):
    h, w, _ = features.shape
    u = min(max(u, 0.0), w - 1.0)
    v = min(max(v, 0.0), h - 1.0)
    u0, v0 = int(u), int(v)
    u1, v1 = min(u0 + 1, w - 1), min(v0 + 1, h - 1)
    fu, fv = u - u0, v - v0
    top = (1 - fu) * features[v0, u0].astype(np.float64) \
        + fu * features[v0, u1].astype(np.float64)
    bot = (1 - fu) * features[v1, u0].astype(np.float64) \
        + fu * features[v1, u1].astype(np.float64)
    return (1 - fv) * top + fv * bot


# ---- transfer ----


@dataclass
class PairRecord:
    view: int
    vertex: int
    u_src: np.ndarray
    u_tgt: np.ndarray
    weight: float
    accepted: bool
    candidate: np.ndarray  # unprojected target point


@dataclass
class MatchResult:
    keypoint: np.ndarray  # target canonical frame
    confidence: float
    records: list = field(default_factory=list)

    def view_stats(self) -> dict:
        stats = {}
        for r in self.records:
            s = stats.setdefault(r.view, {"pairs": 0, "accepted": 0, "weights": []})
            s["pairs"] += 1
            s["accepted"] += r.accepted
            if r.accepted:
                s["weights"].append(r.weight)
        return {
            str(v): {
                "pairs": s["pairs"],
                "accepted": s["accepted"],
                "mean_weight": float(np.mean(s["weights"])) if s["weights"] else 0.0,
            }
            for v, s in sorted(stats.items())
        }


@dataclass
class MeshViews:
    mesh: TriMesh
    cameras: list
    images: list
    maps: list


def render_views(mesh: TriMesh, backend, n_views=RIG_VIEWS,
                 resolution=RIG_RESOLUTION, focal=RIG_FOCAL,
                 rig_scale=RIG_RADIUS_SCALE, elevation=RIG_ELEVATION) -> MeshViews:
    """Ring-rig renders plus descriptor maps for one canonical-pose mesh."""
    cams = ring_rig(n_views, rig_scale * mesh.bounding_radius(), elevation,
                    mesh.centroid(), width=resolution, height=resolution,
                    fx=float(focal))
    images, maps = [], []
    for k, cam in enumerate(cams):
        img = render_depth(mesh, Pose.identity(), cam)
        images.append(img)
        maps.append(backend.describe(mesh, img, cam, view_index=k))
    return MeshViews(mesh, cams, images, maps)


def transfer_keypoint(src: TriMesh, keypoint, tgt: TriMesh, backend,
                      n_views=RIG_VIEWS, m_neighbors=DEFAULT_NEIGHBORS,
                      min_weight=0.0, resolution=RIG_RESOLUTION,
                      focal=RIG_FOCAL, rig_scale=RIG_RADIUS_SCALE,
                      elevation=RIG_ELEVATION, src_views=None,
                      tgt_views=None) -> MatchResult:
    """Carry a source-surface keypoint to the target mesh.

    Meshes are expected in canonical pose; pass precomputed render_views
    results to amortize rendering over many keypoints.
    """
    keypoint = np.asarray(keypoint, dtype=np.float64)
    if surface_distance(src, keypoint) > KEYPOINT_SURFACE_TOL:
        raise KeypointOffSurface(
            f"keypoint {keypoint.tolist()} is more than "
            f"{KEYPOINT_SURFACE_TOL * 100:.0f} cm off the source surface"
        )
    if src_views is None:
        src_views = render_views(src, backend, n_views, resolution, focal,
                                 rig_scale, elevation)
    if tgt_views is None:
        tgt_views = render_views(tgt, backend, n_views, resolution, focal,
                                 rig_scale, elevation)

    idx, _ = nearest_vertices(src, keypoint, min(m_neighbors, len(src.vertices)))
    neighbors = src.vertices[idx]

    records = []
    weights = []
    candidates = []
    for i, (cam, img, smap) in enumerate(
            zip(src_views.cameras, src_views.images, src_views.maps)):
        cam_pts = cam.pose.inverse().apply(neighbors)
        tmap = tgt_views.maps[i]
        timg = tgt_views.images[i]
        tcam = tgt_views.cameras[i]
        for j, vtx in enumerate(neighbors):
            z = cam_pts[j, 2]
            if z <= 1e-6:
                continue
            u = np.array([cam.fx * cam_pts[j, 0] / z + cam.cx,
                          cam.fy * cam_pts[j, 1] / z + cam.cy])
            ui, vi = int(round(u[0])), int(round(u[1]))
            if not (0 <= ui < cam.width and 0 <= vi < cam.height):
                continue
            # occlusion test against the source's own depth buffer
            if abs(img.depth[vi, ui] - z) > 2.0 * cam.pixel_footprint(z):
                continue
            u_tgt, w = match_pixel(smap, u, tmap)
            w = max(w, 0.0)
            cand = unproject(tcam, u_tgt, timg.depth[int(u_tgt[1]), int(u_tgt[0])])
            accepted = w > min_weight
            records.append(PairRecord(i, int(idx[j]), u, u_tgt, w, accepted, cand))
            if accepted:
                weights.append(w)
                candidates.append(cand)
    if not records:
        raise NoVisibleNeighbors("keypoint neighborhood is occluded in every view")
    if not weights:
        raise ZeroWeight("all match weights were non-positive")
    weights = np.asarray(weights)
    candidates = np.asarray(candidates)
    x_new = weights @ candidates / weights.sum()
    return MatchResult(x_new, float(np.mean(weights)), records)


def write_match_result(result: MatchResult, mesh_id: str, path,
                       model: str = "geometric") -> None:
    payload = {
        "mesh_id": mesh_id,
        "keypoint": result.keypoint.tolist(),
        "confidence": result.confidence,
        "model": model,
        "views": result.view_stats(),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
