"""Triangle meshes: loading, canonicalization, geometric queries.

Canonical frame convention: vertex centroid at the origin, principal axes
aligned so the longest axis of variance runs along x, the middle along y,
the shortest along z, with signs disambiguated by per-axis coordinate
skewness. Meshes are never rescaled; scale_to_canonical records the inverse
bounding-sphere radius for callers that want unit-normalized coordinates.
"""

import warnings

import numpy as np

from demoforge.errors import DegenerateCovariance, DegenerateMesh, ParseError
from demoforge.geometry import Pose, Quat

MIN_FACE_AREA = 1e-12  # m^2, faces at or below are degenerate
EIGENVALUE_REL_TOL = 1e-9  # relative eigenvalue gap that counts as equal
AXIS_AMBIGUITY_WARN = 0.05  # warn when middle/long variances are this close
KEYPOINT_SURFACE_TOL = 0.02  # m, annotated keypoints must sit this close to the mesh


class TriMesh:
    __slots__ = ("vertices", "faces", "mesh_id", "canonical_pose", "scale_to_canonical")

    def __init__(self, vertices, faces, mesh_id="mesh", canonical_pose=None,
                 scale_to_canonical=1.0):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int32).reshape(-1, 3)
        self.mesh_id = mesh_id
        self.canonical_pose = canonical_pose
        self.scale_to_canonical = float(scale_to_canonical)
        if self.vertices.shape[0] < 3 or self.faces.shape[0] < 1:
            raise ParseError(f"{mesh_id}: mesh needs >= 3 vertices and >= 1 face")
        if self.faces.min() < 0 or self.faces.max() >= self.vertices.shape[0]:
            raise ParseError(f"{mesh_id}: face index out of range")
        if np.any(face_areas(self.vertices, self.faces) <= MIN_FACE_AREA):
            raise DegenerateMesh(f"{mesh_id}: zero-area face")

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def face_normals(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def face_areas(vertices, faces) -> np.ndarray:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


# ---- loading ----

_PLY_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_PLY_DTYPES = {
    "char": "<i1", "int8": "<i1", "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}


def load_mesh(path, mesh_id=None) -> TriMesh:
    """Load an OBJ (v/f lines) or binary little-endian PLY file."""
    path = str(path)
    if mesh_id is None:
        mesh_id = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    if path.lower().endswith(".obj"):
        verts, faces = _load_obj(path)
    elif path.lower().endswith(".ply"):
        verts, faces = _load_ply(path)
    else:
        raise ParseError(f"unsupported mesh format: {path}")
    return TriMesh(verts, faces, mesh_id=mesh_id)


def _load_obj(path):
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: bad vertex line")
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as e:
                    raise ParseError(f"{path}:{lineno}: bad vertex value") from e
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as e:
                        raise ParseError(f"{path}:{lineno}: bad face index") from e
                    if i < 1:
                        raise ParseError(f"{path}:{lineno}: face indices must be positive")
                    idx.append(i - 1)
                if len(idx) < 3:
                    raise ParseError(f"{path}:{lineno}: face needs >= 3 vertices")
                for k in range(1, len(idx) - 1):  # fan triangulation
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ParseError(f"{path}: no geometry found")
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int32)
    if faces.max() >= len(verts):
        raise ParseError(f"{path}: face index exceeds vertex count")
    return verts, faces


def _load_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    elements = []  # (name, count, [(kind, ...)...])
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt != "binary_little_endian":
        raise ParseError(f"{path}: only binary little-endian PLY is supported")

    verts = None
    faces = None
    offset = 0
    for name, count, props in elements:
        if any(p[0] == "list" for p in props):
            if len(props) != 1 or props[0][0] != "list":
                raise ParseError(f"{path}: mixed list/scalar element unsupported")
            _, cnt_t, idx_t, _pname = props[0]
            csz, isz = _PLY_SIZES.get(cnt_t), _PLY_SIZES.get(idx_t)
            if csz is None or isz is None:
                raise ParseError(f"{path}: unknown list property types")
            rows = []
            for _ in range(count):
                if offset + csz > len(body):
                    raise ParseError(f"{path}: truncated element {name}")
                k = int(np.frombuffer(body, _PLY_DTYPES[cnt_t], 1, offset)[0])
                offset += csz
                if offset + isz * k > len(body):
                    raise ParseError(f"{path}: truncated element {name}")
                row = np.frombuffer(body, _PLY_DTYPES[idx_t], k, offset)
                offset += isz * k
                if k < 3:
                    raise ParseError(f"{path}: face with fewer than 3 indices")
                for j in range(1, k - 1):
                    rows.append((int(row[0]), int(row[j]), int(row[j + 1])))
            if name == "face":
                faces = np.asarray(rows, dtype=np.int32)
        else:
            names = [p[2] for p in props]
            formats = []
            for p in props:
                d = _PLY_DTYPES.get(p[1])
                if d is None:
                    raise ParseError(f"{path}: unknown property type {p[1]}")
                formats.append(d)
            dt = np.dtype({"names": names, "formats": formats})
            if offset + dt.itemsize * count > len(body):
                raise ParseError(f"{path}: truncated element {name}")
            arr = np.frombuffer(body, dt, count, offset)
            offset += dt.itemsize * count
            if name == "vertex":
                for ax in ("x", "y", "z"):
                    if ax not in names:
                        raise ParseError(f"{path}: vertex element missing {ax}")
                verts = np.column_stack(
                    [arr["x"], arr["y"], arr["z"]]
                ).astype(np.float64)
    if verts is None or faces is None:
        raise ParseError(f"{path}: missing vertex or face element")
    return verts, faces


def save_obj(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {mesh.mesh_id}\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---- canonicalization ----


def _skewness(coords: np.ndarray) -> float:
    s = coords.std()
    if s < 1e-12:
        return 0.0
    m = coords.mean()
    return float(np.mean((coords - m) ** 3) / s**3)


def canonicalize_pca(mesh: TriMesh) -> TriMesh:
    """Center the mesh and align principal axes: longest to x, shortest to z.

    Axis signs are chosen so vertex-coordinate skewness is >= 0 along each
    axis; when the three preferred signs would make the basis left-handed,
    the axis with the weakest skewness vote is flipped so the canonical pose
    stays a proper rotation. Idempotent to float precision.
    """
    X = mesh.vertices - mesh.vertices.mean(axis=0)
    cov = (X.T @ X) / X.shape[0]
    evals, evecs = np.linalg.eigh(cov)  # ascending
    top = float(evals[-1])
    if top <= 0.0:
        raise DegenerateCovariance(f"{mesh.mesh_id}: vertices coincide")
    if (evals[1] - evals[0]) / top <= EIGENVALUE_REL_TOL or (
        evals[2] - evals[1]
    ) / top <= EIGENVALUE_REL_TOL:
        raise DegenerateCovariance(
            f"{mesh.mesh_id}: principal axes not unique (eigenvalues {evals})"
        )
    if (evals[2] - evals[1]) / evals[2] < AXIS_AMBIGUITY_WARN:
        warnings.warn(
            f"{mesh.mesh_id}: middle and longest principal axes within "
            f"{AXIS_AMBIGUITY_WARN:.0%}; canonical orientation may be unstable",
            stacklevel=2,
        )

    # rows: x <- largest variance, y <- middle, z <- smallest
    R = np.stack([evecs[:, 2], evecs[:, 1], evecs[:, 0]])
    skew = np.array([_skewness(X @ R[i]) for i in range(3)])
    signs = np.where(skew >= 0.0, 1.0, -1.0)
    if np.linalg.det(R) * signs.prod() < 0.0:
        weakest = int(np.argmin(np.abs(skew)))
        signs[weakest] = -signs[weakest]
    R = signs[:, None] * R

    centroid = mesh.vertices.mean(axis=0)
    pose = Pose(Quat.from_matrix(R), -R @ centroid)
    new_verts = (mesh.vertices - centroid) @ R.T
    radius = float(np.linalg.norm(new_verts, axis=1).max())
    return TriMesh(
        new_verts,
        mesh.faces,
        mesh_id=mesh.mesh_id,
        canonical_pose=pose,
        scale_to_canonical=1.0 / radius,
    )


def apply_canonical_pose(mesh: TriMesh, pose: Pose) -> TriMesh:
    """Manual override: treat `pose` as the raw->canonical transform."""
    new_verts = pose.apply(mesh.vertices)
    radius = float(np.linalg.norm(new_verts, axis=1).max())
    return TriMesh(
        new_verts,
        mesh.faces,
        mesh_id=mesh.mesh_id,
        canonical_pose=pose,
        scale_to_canonical=1.0 / radius,
    )


# ---- queries ----


def nearest_vertices(mesh: TriMesh, x, m: int):
    """Indices and distances of the m nearest vertices, ties by index."""
    if m < 1 or m > mesh.vertices.shape[0]:
        raise ValueError("m out of range")
    d = np.linalg.norm(mesh.vertices - np.asarray(x, dtype=np.float64), axis=1)
    order = np.argsort(d, kind="stable")[:m]
    return order.astype(np.int64), d[order]


def surface_distance(mesh: TriMesh, x) -> float:
    """Exact unsigned distance from x to the triangle surface."""
    p = np.asarray(x, dtype=np.float64).reshape(3)
    closest = _closest_points_on_triangles(
        p,
        mesh.vertices[mesh.faces[:, 0]],
        mesh.vertices[mesh.faces[:, 1]],
        mesh.vertices[mesh.faces[:, 2]],
    )
    return float(np.linalg.norm(closest - p, axis=1).min())


def _closest_points_on_triangles(p, a, b, c):
    """Vectorized closest point on each triangle (a, b, c) to point p.

    Follows the standard Voronoi-region case analysis; degenerate faces are
    rejected at load so the denominators are safe.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    region = (d1 <= 0) & (d2 <= 0)  # vertex a
    out[region] = a[region]
    done |= region

    region = ~done & (d3 >= 0) & (d4 <= d3)  # vertex b
    out[region] = b[region]
    done |= region

    region = ~done & (d6 >= 0) & (d5 <= d6)  # vertex c
    out[region] = c[region]
    done |= region

    region = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)  # edge ab
    with np.errstate(invalid="ignore", divide="ignore"):
        t = d1 / (d1 - d3)
    out[region] = a[region] + t[region, None] * ab[region]
    done |= region

    region = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)  # edge ac
    with np.errstate(invalid="ignore", divide="ignore"):
        t = d2 / (d2 - d6)
    out[region] = a[region] + t[region, None] * ac[region]
    done |= region

    region = ~done & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)  # edge bc
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    out[region] = b[region] + t[region, None] * (c[region] - b[region])
    done |= region

    region = ~done  # interior
    denom = va + vb + vc
    with np.errstate(invalid="ignore", divide="ignore"):
        v = vb / denom
        w = vc / denom
    out[region] = a[region] + v[region, None] * ab[region] + w[region, None] * ac[region]
    return out
