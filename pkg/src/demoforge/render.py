"""Pinhole depth rendering, projection, and multi-view camera rigs.

Camera convention: +z forward, +x right, +y down, u = fx*x/z + cx. Pixel
(u, v) samples the scene at integer coordinates, so cx = (width - 1) / 2
centers the principal point on the middle of the pixel grid. Camera poses
are camera-to-world.
"""

import json
from dataclasses import dataclass

import numpy as np

from demoforge import _kernels
from demoforge.errors import BehindCamera, ConfigError, ParseError
from demoforge.geometry import Pose, Quat

NEAR_PLANE = 1e-6  # m, camera-frame z at or below this is behind the camera

# default multi-view rig used for correspondence rendering
RIG_VIEWS = 8
RIG_ELEVATION = np.pi / 4
RIG_RADIUS_SCALE = 2.5  # times the mesh bounding-sphere radius
RIG_RESOLUTION = 256
RIG_FOCAL = 256.0


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose  # camera-to-world

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("camera focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError("principal point outside the image")

    def pixel_footprint(self, depth: float) -> float:
        """Side length in meters of one pixel at the given depth."""
        return depth / min(self.fx, self.fy)


@dataclass
class DepthImage:
    depth: np.ndarray  # (H, W) float64, +inf where nothing was hit
    face_id: np.ndarray  # (H, W) int32, -1 where nothing was hit

    def foreground(self) -> np.ndarray:
        return np.isfinite(self.depth)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose at eye with the optical axis through target."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ConfigError("look_at target coincides with the camera position")
    z = forward / norm
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:  # looking straight along up
        x = np.cross(z, (1.0, 0.0, 0.0))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.column_stack([x, y, z])
    return Pose(Quat.from_matrix(rot), eye)


def ring_rig(n, radius, elevation, look_at, width=RIG_RESOLUTION,
             height=RIG_RESOLUTION, fx=RIG_FOCAL, fy=None) -> list:
    """n cameras evenly spaced in azimuth, all aimed at look_at."""
    if n < 1:
        raise ConfigError("ring_rig needs at least one view")
    fy = fx if fy is None else fy
    look_at = np.asarray(look_at, dtype=np.float64)
    cams = []
    for k in range(n):
        az = 2.0 * np.pi * k / n
        eye = look_at + radius * np.array(
            [np.cos(elevation) * np.cos(az),
             np.cos(elevation) * np.sin(az),
             np.sin(elevation)]
        )
        cams.append(
            Camera(fx, fy, (width - 1) / 2.0, (height - 1) / 2.0,
                   width, height, look_at_pose(eye, look_at))
        )
    return cams


def project(camera: Camera, x_world):
    """World points to (pixels, camera depths); sub-pixel float coordinates."""
    pts = np.asarray(x_world, dtype=np.float64)
    single = pts.ndim == 1
    cam_pts = camera.pose.inverse().apply(pts.reshape(-1, 3))
    z = cam_pts[:, 2]
    if np.any(z <= NEAR_PLANE):
        raise BehindCamera("point at or behind the camera near plane")
    uv = np.empty((len(cam_pts), 2))
    uv[:, 0] = camera.fx * cam_pts[:, 0] / z + camera.cx
    uv[:, 1] = camera.fy * cam_pts[:, 1] / z + camera.cy
    return (uv[0], float(z[0])) if single else (uv, z)


def unproject(camera: Camera, pixel, depth):
    """Inverse pinhole mapping at the given camera depth, in world frame."""
    px = np.asarray(pixel, dtype=np.float64)
    single = px.ndim == 1
    px = px.reshape(-1, 2)
    z = np.broadcast_to(np.asarray(depth, dtype=np.float64), (len(px),))
    cam_pts = np.column_stack(
        [(px[:, 0] - camera.cx) * z / camera.fx,
         (px[:, 1] - camera.cy) * z / camera.fy,
         z]
    )
    out = camera.pose.apply(cam_pts)
    return out[0] if single else out


def render_depth(mesh, pose: Pose, camera: Camera) -> DepthImage:
    """Z-buffer rasterization of the mesh transformed by pose."""
    img = DepthImage(
        depth=np.full((camera.height, camera.width), np.inf),
        face_id=np.full((camera.height, camera.width), -1, dtype=np.int32),
    )
    v_cam = camera.pose.inverse().apply(pose.apply(mesh.vertices))
    _kernels.rasterize_mesh(v_cam, mesh.faces, camera.fx, camera.fy,
                            camera.cx, camera.cy, img.depth, img.face_id, 0)
    return img


def render_scene(items, camera: Camera):
    """Rasterize (mesh, pose, label) items into one shared z-buffer.

    Returns (DepthImage, face_labels) where face_labels maps the global face
    ids recorded in the image back to each item's label.
    """
    img = DepthImage(
        depth=np.full((camera.height, camera.width), np.inf),
        face_id=np.full((camera.height, camera.width), -1, dtype=np.int32),
    )
    world_from_cam = camera.pose.inverse()
    labels = []
    base = 0
    for mesh, pose, label in items:
        v_cam = world_from_cam.apply(pose.apply(mesh.vertices))
        _kernels.rasterize_mesh(v_cam, mesh.faces, camera.fx, camera.fy,
                                camera.cx, camera.cy, img.depth, img.face_id,
                                base)
        labels.append(np.full(len(mesh.faces), label, dtype=np.uint8))
        base += len(mesh.faces)
    face_labels = np.concatenate(labels) if labels else np.empty(0, np.uint8)
    return img, face_labels


def depth_to_points(img: DepthImage, camera: Camera):
    """Unproject every foreground pixel; row-major pixel order.

    Returns (points (M, 3) world, face ids (M,)).
    """
    vs, us = np.nonzero(img.foreground())
    if len(us) == 0:
        return np.empty((0, 3)), np.empty(0, dtype=np.int32)
    pix = np.column_stack([us, vs]).astype(np.float64)
    pts = unproject(camera, pix, img.depth[vs, us])
    return pts, img.face_id[vs, us]


def visible(img: DepthImage, camera: Camera, x_world, tolerance: float) -> bool:
    """True when x_world is in front of the rendered surface at its pixel."""
    try:
        uv, z = project(camera, np.asarray(x_world, dtype=np.float64))
    except BehindCamera:
        return False
    u = int(round(uv[0]))
    v = int(round(uv[1]))
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        return False
    return bool(abs(img.depth[v, u] - z) <= tolerance)


def shaded_render(mesh, pose: Pose, camera: Camera):
    """Flat-shaded grayscale image, Lambertian with the light at the camera.

    Returns (image (H, W) float in [0, 1], DepthImage).
    """
    img = render_depth(mesh, pose, camera)
    gray = np.zeros_like(img.depth)
    vs, us = np.nonzero(img.foreground())
    if len(us) == 0:
        return gray, img
    world_from_cam = camera.pose.inverse()
    v_cam = world_from_cam.apply(pose.apply(mesh.vertices))
    a = v_cam[mesh.faces[:, 0]]
    n = np.cross(v_cam[mesh.faces[:, 1]] - a, v_cam[mesh.faces[:, 2]] - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    pix = np.column_stack([us, vs]).astype(np.float64)
    rays = np.column_stack(
        [(pix[:, 0] - camera.cx) / camera.fx,
         (pix[:, 1] - camera.cy) / camera.fy,
         np.ones(len(pix))]
    )
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    # headlight model: |cos| folds in the two-sided winding convention
    gray[vs, us] = np.abs(np.sum(n[img.face_id[vs, us]] * rays, axis=1))
    return gray, img


# ---- scene camera files and debug dumps ----


def save_scene_cameras(cameras, path) -> None:
    payload = {
        "cameras": [
            {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
             "width": c.width, "height": c.height,
             "pose": c.pose.to_array().tolist()}
            for c in cameras
        ]
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_scene_cameras(path) -> list:
    try:
        with open(path, encoding="ascii") as fh:
            payload = json.load(fh)
        return [
            Camera(float(c["fx"]), float(c["fy"]), float(c["cx"]),
                   float(c["cy"]), int(c["width"]), int(c["height"]),
                   Pose.from_array(c["pose"]))
            for c in payload["cameras"]
        ]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad scene camera file ({e})") from e


def write_pgm(image, path) -> None:
    """Binary 8-bit PGM dump; finite values scaled to 1..255, rest 0."""
    img = np.asarray(image, dtype=np.float64)
    out = np.zeros(img.shape, dtype=np.uint8)
    finite = np.isfinite(img)
    if np.any(finite):
        lo = img[finite].min()
        hi = img[finite].max()
        span = hi - lo if hi > lo else 1.0
        out[finite] = np.round(1 + 254 * (img[finite] - lo) / span).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(out.tobytes())
