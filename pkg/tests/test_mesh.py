import struct

import numpy as np
import pytest

from demoforge.errors import DegenerateCovariance, DegenerateMesh, ParseError
from demoforge.geometry import Pose, Quat
from demoforge.mesh import (
    TriMesh,
    apply_canonical_pose,
    canonicalize_pca,
    load_mesh,
    nearest_vertices,
    save_obj,
    surface_distance,
)
from demoforge.shapes import box_mesh, icosphere


def skewness(coords):
    s = coords.std()
    return np.mean((coords - coords.mean()) ** 3) / s**3 if s > 1e-12 else 0.0


def egg_mesh(warps=(0.25, 0.2, 0.15), radii=(1.0, 0.7, 0.45)):
    """Ellipsoid with asymmetric warps so each axis has definite skewness."""
    m = icosphere(subdivisions=3, radii=radii)
    v = m.vertices.copy()
    for ax in range(3):
        v[:, ax] = v[:, ax] + warps[ax] * v[:, ax] ** 2 / radii[ax]
    return TriMesh(v, m.faces, mesh_id="egg")


# ---- loaders ----


def test_obj_load_with_slashes_and_quads(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text(
        "# comment\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\n"
        "vn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1 4/4/1\n"
        "f 1//1 2//1 5//1\n"
    )
    m = load_mesh(p)
    assert m.vertices.shape == (5, 3)
    # quad fans into two triangles plus the explicit triangle
    assert m.faces.shape == (3, 3)
    np.testing.assert_array_equal(m.faces[0], [0, 1, 2])
    np.testing.assert_array_equal(m.faces[1], [0, 2, 3])


def test_obj_bad_index_raises(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ParseError):
        load_mesh(p)


def test_obj_zero_area_face_raises(tmp_path):
    p = tmp_path / "deg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(DegenerateMesh):
        load_mesh(p)


def make_ply_bytes(verts, faces, fmt="binary_little_endian", extra_props=True):
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(verts)}"]
    header += ["property float x", "property float y", "property float z"]
    if extra_props:
        header += ["property float confidence", "property uchar quality"]
    header += [
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    body = b""
    for v in verts:
        body += struct.pack("<fff", *v)
        if extra_props:
            body += struct.pack("<fB", 0.5, 7)
    for f in faces:
        body += struct.pack("<B", len(f)) + struct.pack(f"<{len(f)}i", *f)
    return ("\n".join(header) + "\n").encode() + body


def test_ply_load_skips_extra_properties(tmp_path):
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1)]
    faces = [(0, 1, 2, 3), (0, 1, 4)]  # quad fans
    p = tmp_path / "m.ply"
    p.write_bytes(make_ply_bytes(verts, faces))
    m = load_mesh(p)
    assert m.vertices.shape == (5, 3)
    assert m.faces.shape == (3, 3)
    np.testing.assert_allclose(m.vertices[4], [0, 0, 1])


def test_ply_ascii_rejected(tmp_path):
    p = tmp_path / "a.ply"
    p.write_bytes(make_ply_bytes([(0, 0, 0)], [], fmt="ascii"))
    with pytest.raises(ParseError):
        load_mesh(p)


def test_ply_truncated_rejected(tmp_path):
    verts = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    raw = make_ply_bytes(verts, [(0, 1, 2)])
    p = tmp_path / "t.ply"
    p.write_bytes(raw[:-6])
    with pytest.raises(ParseError):
        load_mesh(p)


def test_save_obj_round_trip(tmp_path):
    m = egg_mesh()
    path = tmp_path / "egg.obj"
    save_obj(m, path)
    m2 = load_mesh(path)
    assert m2.faces.shape == m.faces.shape
    np.testing.assert_allclose(m2.vertices, m.vertices, atol=1e-6)


# ---- canonicalization ----


def test_canonicalize_centers_and_orders_axes():
    m = canonicalize_pca(egg_mesh())
    v = m.vertices
    assert np.linalg.norm(v.mean(axis=0)) < 1e-9
    var = v.var(axis=0)
    assert var[0] >= var[1] >= var[2]
    for ax in range(3):
        assert skewness(v[:, ax]) >= -1e-9
    assert np.isclose(m.scale_to_canonical, 1.0 / np.linalg.norm(v, axis=1).max())


def test_canonicalize_idempotent():
    m1 = canonicalize_pca(egg_mesh())
    m2 = canonicalize_pca(m1)
    assert np.abs(m2.vertices - m1.vertices).max() < 1e-9


def test_canonicalize_commutes_with_rigid_motion():
    m = egg_mesh()
    moved = TriMesh(
        Pose(Quat.from_axis_angle((0.3, -0.5, 0.8), 1.1), [0.4, -0.2, 0.9]).apply(m.vertices),
        m.faces,
    )
    c1 = canonicalize_pca(m)
    c2 = canonicalize_pca(moved)
    assert np.abs(c1.vertices - c2.vertices).max() < 1e-6


def test_canonical_pose_maps_raw_to_canonical():
    raw = egg_mesh()
    canon = canonicalize_pca(raw)
    np.testing.assert_allclose(
        canon.canonical_pose.apply(raw.vertices), canon.vertices, atol=1e-9
    )
    # the pose is a proper rotation
    assert np.isclose(np.linalg.det(canon.canonical_pose.rotation.as_matrix()), 1.0)


def test_canonicalize_left_handed_skew_flips_weakest_axis():
    # skew votes (+x, +y, -z) form a left-handed triple; z has the weakest
    # vote so it keeps negative skewness while det stays +1
    m = egg_mesh(warps=(0.25, 0.2, -0.02))
    c = canonicalize_pca(m)
    v = c.vertices
    assert skewness(v[:, 0]) >= -1e-9
    assert skewness(v[:, 1]) >= -1e-9
    assert skewness(v[:, 2]) < 0
    assert np.isclose(np.linalg.det(c.canonical_pose.rotation.as_matrix()), 1.0)


def test_canonicalize_sphere_degenerate():
    with pytest.raises(DegenerateCovariance):
        canonicalize_pca(icosphere(subdivisions=2))


def test_canonicalize_warns_on_ambiguous_axes():
    m = egg_mesh(radii=(1.0, 0.99, 0.45))
    with pytest.warns(UserWarning, match="principal axes"):
        canonicalize_pca(m)


def test_manual_pose_override():
    raw = egg_mesh()
    pose = Pose(Quat.from_axis_angle((0, 0, 1), 0.5), [0.1, 0.0, -0.2])
    forced = apply_canonical_pose(raw, pose)
    np.testing.assert_allclose(forced.vertices, pose.apply(raw.vertices), atol=1e-12)
    assert forced.canonical_pose is pose


# ---- queries ----


def test_nearest_vertices_cube_face_center():
    cube = box_mesh()
    idx, d = nearest_vertices(cube, [0.0, 0.0, -0.5], 4)
    np.testing.assert_array_equal(np.sort(idx), [0, 1, 2, 3])
    np.testing.assert_allclose(d, np.sqrt(0.5), atol=1e-12)


def test_nearest_vertices_all_sorted_with_index_ties():
    cube = box_mesh()
    idx, d = nearest_vertices(cube, [0.0, 0.0, -0.5], 8)
    assert np.all(np.diff(d) >= -1e-15)
    # equidistant groups keep ascending index order
    np.testing.assert_array_equal(idx[:4], [0, 1, 2, 3])
    np.testing.assert_array_equal(idx[4:], [4, 5, 6, 7])


def seg_dist(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def oracle_point_triangle(p, a, b, c):
    """Independent formulation: plane projection else edge distances."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    proj = p - np.dot(p - a, n) * n
    v0, v1, v2 = b - a, c - a, proj - a
    d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
    d20, d21 = v2 @ v0, v2 @ v1
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    if v >= 0 and w >= 0 and v + w <= 1:
        return np.linalg.norm(p - proj)
    return min(seg_dist(p, a, b), seg_dist(p, b, c), seg_dist(p, c, a))


def oracle_surface_distance(mesh, p):
    best = np.inf
    for f in mesh.faces:
        best = min(
            best,
            oracle_point_triangle(
                p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]
            ),
        )
    return best


def test_surface_distance_cube_hand_values():
    cube = box_mesh()  # unit cube centered at origin
    assert np.isclose(surface_distance(cube, [1.5, 0.0, 0.0]), 1.0)  # face
    assert np.isclose(surface_distance(cube, [1.5, 1.5, 0.0]), np.sqrt(2))  # edge
    assert np.isclose(surface_distance(cube, [1.5, 1.5, 1.5]), np.sqrt(3))  # corner
    assert np.isclose(surface_distance(cube, [0.0, 0.0, 0.0]), 0.5)  # inside
    assert np.isclose(surface_distance(cube, [0.5, 0.5, 0.5]), 0.0)  # on corner


def test_surface_distance_on_surface_points_are_zero():
    m = egg_mesh()
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = m.faces[rng.integers(len(m.faces))]
        w = rng.dirichlet([1, 1, 1])
        p = w @ m.vertices[f]
        assert surface_distance(m, p) < 1e-12


def test_surface_distance_matches_independent_oracle():
    m = icosphere(subdivisions=1, radii=(0.8, 0.6, 0.5))
    rng = np.random.default_rng(1)
    for _ in range(30):
        p = rng.uniform(-1.5, 1.5, size=3)
        assert np.isclose(
            surface_distance(m, p), oracle_surface_distance(m, p), atol=1e-12
        )
