"""Shared mesh fixtures for the test suite."""

import numpy as np

from normnet.mesh import TriangleMesh


def icosahedron() -> TriangleMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return TriangleMesh(vertices, faces)


def icosphere(level: int) -> TriangleMesh:
    """Icosahedron subdivided ``level`` times, vertices on the unit sphere.

    Face counts: 20, 80, 320, 1280, 5120, 20480 for levels 0..5.
    """
    mesh = icosahedron()
    vertices = [tuple(v) for v in mesh.vertices]
    faces = [tuple(f) for f in mesh.faces]
    for _ in range(level):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                p = np.asarray(vertices[a]) + np.asarray(vertices[b])
                p /= np.linalg.norm(p)
                idx = len(vertices)
                vertices.append(tuple(p))
                midpoint[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.asarray(vertices), np.asarray(faces))


def unit_cube() -> TriangleMesh:
    vertices = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 3, 2], [0, 2, 1],  # z = 0
            [4, 5, 6], [4, 6, 7],  # z = 1
            [0, 1, 5], [0, 5, 4],  # y = 0
            [3, 7, 6], [3, 6, 2],  # y = 1
            [0, 4, 7], [0, 7, 3],  # x = 0
            [1, 2, 6], [1, 6, 5],  # x = 1
        ],
        dtype=np.int64,
    )
    return TriangleMesh(vertices, faces)


def grid_cube(n: int) -> TriangleMesh:
    """Unit cube with each side an n-by-n quad grid, welded; 12*n^2 faces."""
    sides = [
        # (origin, eu, ev) with cross(eu, ev) pointing outward
        ((0, 0, 0), (0, 1, 0), (1, 0, 0)),  # z = 0
        ((0, 0, n), (1, 0, 0), (0, 1, 0)),  # z = 1
        ((0, 0, 0), (1, 0, 0), (0, 0, 1)),  # y = 0
        ((0, n, 0), (0, 0, 1), (1, 0, 0)),  # y = 1
        ((0, 0, 0), (0, 0, 1), (0, 1, 0)),  # x = 0
        ((n, 0, 0), (0, 1, 0), (0, 0, 1)),  # x = 1
    ]
    vert_index: dict[tuple[int, int, int], int] = {}
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []

    def vid(key: tuple[int, int, int]) -> int:
        idx = vert_index.get(key)
        if idx is None:
            idx = len(vertices)
            vertices.append((key[0] / n, key[1] / n, key[2] / n))
            vert_index[key] = idx
        return idx

    for origin, eu, ev in sides:
        o, u, v = (np.asarray(x, dtype=np.int64) for x in (origin, eu, ev))
        for i in range(n):
            for j in range(n):
                a = vid(tuple(o + i * u + j * v))
                b = vid(tuple(o + (i + 1) * u + j * v))
                c = vid(tuple(o + (i + 1) * u + (j + 1) * v))
                d = vid(tuple(o + i * u + (j + 1) * v))
                faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(np.asarray(vertices), np.asarray(faces))


def plane_grid(nx: int, nz: int, spacing: float = 1.0) -> TriangleMesh:
    """Flat rectangular grid in the y=0 plane, normals +y; 2*nx*nz faces."""
    vertices = []
    for i in range(nx + 1):
        for j in range(nz + 1):
            vertices.append((i * spacing, 0.0, j * spacing))

    def vid(i, j):
        return i * (nz + 1) + j

    faces = []
    for i in range(nx):
        for j in range(nz):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, c, b), (a, d, c)]
    return TriangleMesh(np.asarray(vertices, dtype=np.float64), np.asarray(faces))


def folded_strip(angle_deg: float, width: int = 4, length: int = 4,
                 spacing: float = 1.0) -> TriangleMesh:
    """Two planar strips joined along the z-axis with an exact normal angle.

    The left half lies in y=0 (normals +y); the right half is raised so its
    face normals differ from +y by exactly ``angle_deg``. Faces away from
    the fold have a zero-spread 2-ring; faces near it see both normals.
    """
    base = plane_grid(2 * width, length, spacing)
    alpha = np.radians(angle_deg)
    v = base.vertices.copy()
    k = v[:, 0] / spacing - width  # signed lateral index, fold at 0
    right = k > 0
    v[right, 0] = k[right] * spacing * np.cos(alpha)
    v[right, 1] = k[right] * spacing * np.sin(alpha)
    v[~right, 0] = k[~right] * spacing
    return base.with_vertices(v)


def split_cube() -> TriangleMesh:
    """Unit cube as six disconnected quads: 24 vertices, nothing welded.

    Each face's 2-ring stays inside its own side, so every patch sees one
    normal only. This is the hard-normal cube an OBJ export with per-face
    normals produces.
    """
    welded = unit_cube()
    vertices = welded.vertices[welded.faces.reshape(-1)]
    faces = np.arange(12 * 3, dtype=np.int64).reshape(12, 3)
    # weld the diagonal pair within each side so sides stay connected
    merged: dict[tuple[float, ...], int] = {}
    remap = np.empty(36, dtype=np.int64)
    keep = []
    for side in range(6):
        merged.clear()
        for slot in range(6):
            i = side * 6 + slot
            key = tuple(vertices[i])
            if key in merged:
                remap[i] = merged[key]
            else:
                merged[key] = remap[i] = len(keep)
                keep.append(vertices[i])
    return TriangleMesh(np.asarray(keep), remap[faces.reshape(-1)].reshape(12, 3))


def two_triangles() -> TriangleMesh:
    vertices = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return TriangleMesh(vertices, faces)


def jitter(mesh: TriangleMesh, scale: float, seed: int) -> TriangleMesh:
    """Displace vertices by seeded gaussian offsets (fixture helper only)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return mesh.with_vertices(mesh.vertices + rng.normal(0.0, scale, mesh.vertices.shape))


def quantize(mesh: TriangleMesh, step: float = 2.0 ** -6) -> TriangleMesh:
    """Snap vertex coordinates to multiples of ``step`` (a power of two)."""
    return mesh.with_vertices(np.round(mesh.vertices / step) * step)
