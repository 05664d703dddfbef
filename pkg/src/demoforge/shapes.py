"""Procedural primitive meshes with consistent outward winding.

Used by the bundled toy scene, the benchmarks, and the test suite; nothing
here is required for ingesting external meshes.
"""

import numpy as np

from demoforge.mesh import TriMesh

_CUBE_CORNERS = np.array(
    [
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ],
    dtype=np.float64,
)
_CUBE_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ],
    dtype=np.int32,
)


def box_mesh(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), mesh_id="box") -> TriMesh:
    e = np.asarray(extents, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    verts = (_CUBE_CORNERS - 0.5) * e + c
    return TriMesh(verts, _CUBE_FACES.copy(), mesh_id=mesh_id)


def icosphere(subdivisions=3, radii=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0),
              mesh_id="icosphere") -> TriMesh:
    """Subdivided icosahedron scaled to an ellipsoid."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                a = np.asarray(verts[i])
                b = np.asarray(verts[j])
                m = (a + b) / 2.0
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for i, j, k in faces:
            ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = new_faces
    v = np.asarray(verts) * np.asarray(radii, dtype=np.float64) + np.asarray(center)
    return TriMesh(v, np.asarray(faces, dtype=np.int32), mesh_id=mesh_id)


def cylinder_mesh(radius=0.5, height=1.0, segments=24, center=(0.0, 0.0, 0.0),
                  mesh_id="cylinder") -> TriMesh:
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bot = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    verts = np.concatenate([bot, top, [[0, 0, -height / 2]], [[0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]  # wall
        faces += [[cb, j, i], [ct, segments + i, segments + j]]  # caps
    v = np.asarray(verts) + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.asarray(faces, dtype=np.int32), mesh_id=mesh_id)


def cone_mesh(base_radius=0.5, length=1.0, segments=16, base_center=(0.0, 0.0, 0.0),
              axis=(0.0, 0.0, 1.0), tip_radius=0.0, mesh_id="cone") -> TriMesh:
    """Cone from a base disc along `axis`; tip_radius > 0 makes a capped
    frustum instead of a sharp apex."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    # build orthonormal frame around the axis
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    base = np.asarray(base_center, dtype=np.float64)
    disc = np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w)
    ring = base + base_radius * disc
    top = base + axis * length
    if tip_radius > 0.0:
        tip_ring = top + tip_radius * disc
        verts = np.concatenate([ring, tip_ring, [top], [base]])
        tc, cb = 2 * segments, 2 * segments + 1
        faces = []
        for i in range(segments):
            j = (i + 1) % segments
            faces += [[i, j, segments + j], [i, segments + j, segments + i],
                      [segments + i, segments + j, tc], [cb, j, i]]
    else:
        verts = np.concatenate([ring, [top], [base]])
        tip, cb = segments, segments + 1
        faces = []
        for i in range(segments):
            j = (i + 1) % segments
            faces += [[i, j, tip], [cb, j, i]]
    return TriMesh(verts, np.asarray(faces, dtype=np.int32), mesh_id=mesh_id)


def torus_arc_mesh(ring_radius=0.3, tube_radius=0.05, arc_deg=220.0, segments=24,
                   tube_segments=10, center=(0.0, 0.0, 0.0), mesh_id="torus_arc") -> TriMesh:
    """Partial torus in the x-z plane (handle-like), capped ends."""
    arc = np.deg2rad(arc_deg)
    u = np.linspace(-arc / 2, arc / 2, segments)
    v = np.linspace(0.0, 2 * np.pi, tube_segments, endpoint=False)
    verts = []
    for uu in u:
        # ring sweeps in the x-z plane, tube circles in the local normal plane
        cx, cz = np.cos(uu), np.sin(uu)
        for vv in v:
            r = ring_radius + tube_radius * np.cos(vv)
            verts.append([r * cx, tube_radius * np.sin(vv), r * cz])
    verts = np.asarray(verts) + np.asarray(center, dtype=np.float64)
    faces = []
    for i in range(segments - 1):
        for j in range(tube_segments):
            j2 = (j + 1) % tube_segments
            a = i * tube_segments + j
            b = i * tube_segments + j2
            c = (i + 1) * tube_segments + j2
            d = (i + 1) * tube_segments + j
            faces += [[a, b, c], [a, c, d]]
    # cap the two open ends with fans
    n = len(verts)
    first = np.mean(verts[:tube_segments], axis=0)
    last = np.mean(verts[-tube_segments:], axis=0)
    verts = np.concatenate([verts, [first], [last]])
    for j in range(tube_segments):
        j2 = (j + 1) % tube_segments
        faces.append([n, j2, j])
        base = (segments - 1) * tube_segments
        faces.append([n + 1, base + j, base + j2])
    return TriMesh(verts, np.asarray(faces, dtype=np.int32), mesh_id=mesh_id)


def merge_meshes(meshes, mesh_id="merged") -> TriMesh:
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.vertices.shape[0]
    return TriMesh(np.concatenate(verts), np.concatenate(faces), mesh_id=mesh_id)
