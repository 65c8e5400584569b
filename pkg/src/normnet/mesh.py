"""Triangle mesh container, OBJ/OFF I/O, ring patches, and mesh-scale statistics.

The mesh is immutable after construction; derived quantities (normals, areas,
adjacency, ring patches) are cached on first use. All faces must be triangles;
zero-area faces are kept in the index space but carry a zero normal and are
excluded from every neighborhood-based computation downstream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

# Attributes that depend only on connectivity, reusable across vertex updates.
_TOPO_CACHE_KEYS = (
    "edge_vertices",
    "edge_faces",
    "face_edges",
    "face_neighbors",
    "vertex_faces",
    "vertex_adjacent_faces",
)


class MeshError(Exception):
    """Raised for malformed mesh files or invalid mesh structure."""


@dataclass(frozen=True)
class Patch:
    """An r-ring face patch: the center face plus r rounds of shared-vertex growth.

    ``members`` is an ascending array of face indices and always contains
    ``center``. Degenerate faces other than the center are never members.
    """

    center: int
    ring: int
    members: np.ndarray


@dataclass(frozen=True)
class MeshScales:
    """Global scale statistics of a mesh.

    centroid_spacing
        Mean distance between centroids of edge-adjacent face pairs.
    face_spacing
        Spacing used to size voxel cubes; defined equal to centroid_spacing.
    mean_edge_length
        Mean length over the unique edges of the mesh.
    """

    centroid_spacing: float
    face_spacing: float
    mean_edge_length: float


class TriangleMesh:
    """Immutable triangle mesh with cached derived data.

    Parameters
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array
        Vertex index triples. Indices must be in range and pairwise distinct
        within each face.
    """

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {faces.shape}")
        if not np.isfinite(vertices).all():
            raise MeshError("vertices contain non-finite coordinates")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                bad = int(np.argmax((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1)))
                raise MeshError(f"face {bad} references an out-of-range vertex")
            same = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 2] == faces[:, 0])
            )
            if same.any():
                raise MeshError(f"face {int(np.argmax(same))} repeats a vertex index")
        vertices.flags.writeable = False
        faces.flags.writeable = False
        self.vertices = vertices
        self.faces = faces
        self._ring_tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    # -- geometric caches ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def _corner_positions(self):
        return self.vertices[self.faces]  # (F, 3, 3)

    @cached_property
    def _face_cross(self):
        p = self._corner_positions
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def degenerate_mask(self):
        """Boolean mask of zero-area faces (normal undefined)."""
        p = self._corner_positions
        e1 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        e2 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        cross_norm = np.linalg.norm(self._face_cross, axis=1)
        # sin of the corner angle below 1e-12 counts as collapsed
        mask = cross_norm <= 1e-12 * e1 * e2
        out = mask | (e1 == 0.0) | (e2 == 0.0)
        out.flags.writeable = False
        return out

    @cached_property
    def degenerate_faces(self):
        out = np.flatnonzero(self.degenerate_mask)
        if out.size:
            logger.warning("mesh has %d degenerate face(s)", out.size)
        out.flags.writeable = False
        return out

    @cached_property
    def face_normals(self):
        """Unit face normals; (0, 0, 0) for degenerate faces."""
        cross = self._face_cross
        norm = np.linalg.norm(cross, axis=1)
        safe = np.where(self.degenerate_mask, 1.0, norm)
        out = cross / safe[:, None]
        out[self.degenerate_mask] = 0.0
        out.flags.writeable = False
        return out

    @cached_property
    def face_areas(self):
        out = 0.5 * np.linalg.norm(self._face_cross, axis=1)
        out.flags.writeable = False
        return out

    @cached_property
    def _vertex_sums(self):
        # Exact per-face vertex sums; centroid differences are evaluated as
        # (S_i - S_j) / 3 so a common translation cancels before the division.
        out = self._corner_positions.sum(axis=1)
        out.flags.writeable = False
        return out

    @cached_property
    def face_centroids(self):
        out = self._vertex_sums / 3.0
        out.flags.writeable = False
        return out

    @cached_property
    def vertex_normals(self):
        """Area-weighted unit vertex normals; zero where undefined."""
        accum = np.zeros((self.n_vertices, 3))
        # cross vectors already carry the area weight (|cross| = 2 * area)
        weighted = np.where(self.degenerate_mask[:, None], 0.0, self._face_cross)
        for k in range(3):
            np.add.at(accum, self.faces[:, k], weighted)
        norm = np.linalg.norm(accum, axis=1)
        nonzero = norm > 0.0
        accum[nonzero] /= norm[nonzero, None]
        accum[~nonzero] = 0.0
        accum.flags.writeable = False
        return accum

    # -- connectivity caches ------------------------------------------------

    @cached_property
    def _edge_tables(self):
        fv = self.faces
        raw = np.stack([fv[:, [0, 1]], fv[:, [1, 2]], fv[:, [2, 0]]], axis=1).reshape(-1, 2)
        raw_sorted = np.sort(raw, axis=1)
        edge_vertices, inverse = np.unique(raw_sorted, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        face_edges = inverse.reshape(self.n_faces, 3)

        counts = np.bincount(inverse, minlength=len(edge_vertices))
        if counts.size and counts.max() > 2:
            bad = int(np.argmax(counts > 2))
            raise MeshError(
                f"non-manifold edge {tuple(edge_vertices[bad])} with {counts[bad]} incident faces"
            )
        order = np.argsort(inverse, kind="stable")
        owner = np.repeat(np.arange(self.n_faces), 3)[order]
        edge_faces = np.full((len(edge_vertices), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)])
        first = counts >= 1
        edge_faces[first, 0] = owner[starts[:-1][first]]
        second = counts == 2
        edge_faces[second, 1] = owner[starts[:-1][second] + 1]
        for arr in (edge_vertices, edge_faces, face_edges):
            arr.flags.writeable = False
        return edge_vertices, edge_faces, face_edges

    @property
    def edge_vertices(self):
        """(E, 2) sorted vertex index pairs, one row per unique edge."""
        return self._edge_tables[0]

    @property
    def edge_faces(self):
        """(E, 2) incident faces per edge; -1 in column 1 for boundary edges."""
        return self._edge_tables[1]

    @property
    def face_edges(self):
        """(F, 3) edge ids per face."""
        return self._edge_tables[2]

    @cached_property
    def face_neighbors(self):
        """(F, 3) edge-adjacent faces, -1 padded."""
        ef = self.edge_faces
        fe = self.face_edges
        mine = np.arange(self.n_faces)[:, None]
        both = ef[fe]  # (F, 3, 2)
        other = np.where(both[..., 0] == mine, both[..., 1], both[..., 0])
        other.flags.writeable = False
        return other

    @cached_property
    def vertex_faces(self):
        """CSR (indptr, indices): faces incident to each vertex, ascending."""
        flat = self.faces.reshape(-1)
        owner = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(flat, kind="stable")
        indices = owner[order]
        counts = np.bincount(flat, minlength=self.n_vertices)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices.flags.writeable = False
        indptr.flags.writeable = False
        return indptr, indices

    @cached_property
    def vertex_adjacent_faces(self):
        """CSR (indptr, indices): faces sharing >=1 vertex with each face, self excluded."""
        indptr_v, indices_v = self.vertex_faces
        counts = np.zeros(self.n_faces, dtype=np.int64)
        chunks = []
        for f in range(self.n_faces):
            a, b, c = self.faces[f]
            near = np.concatenate(
                [
                    indices_v[indptr_v[a] : indptr_v[a + 1]],
                    indices_v[indptr_v[b] : indptr_v[b + 1]],
                    indices_v[indptr_v[c] : indptr_v[c + 1]],
                ]
            )
            near = np.unique(near)
            near = near[near != f]
            chunks.append(near)
            counts[f] = len(near)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        indices.flags.writeable = False
        indptr.flags.writeable = False
        return indptr, indices

    def ring_members_table(self, ring: int) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of r-ring patch members for every face.

        Shares the growth and degeneracy rules of :func:`build_ring_patch`.
        """
        if ring < 0:
            raise ValueError("ring must be >= 0")
        table = self._ring_tables.get(ring)
        if table is None:
            chunks = [self._ring_members(f, ring) for f in range(self.n_faces)]
            counts = np.array([len(c) for c in chunks], dtype=np.int64)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            indices = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
            indices.flags.writeable = False
            indptr.flags.writeable = False
            table = (indptr, indices)
            self._ring_tables[ring] = table
        return table

    def _ring_members(self, face: int, ring: int) -> np.ndarray:
        indptr, indices = self.vertex_adjacent_faces
        degen = self.degenerate_mask
        members = np.array([face], dtype=np.int64)
        for _ in range(ring):
            grown = np.concatenate(
                [members] + [indices[indptr[m] : indptr[m + 1]] for m in members]
            )
            grown = np.unique(grown)
            grown = grown[(~degen[grown]) | (grown == face)]
            if len(grown) == len(members):
                break
            members = grown
        return members

    # -- derivation helpers -------------------------------------------------

    def with_vertices(self, vertices) -> "TriangleMesh":
        """New mesh with the same connectivity and new vertex positions.

        Connectivity caches are carried over; geometric caches are rebuilt.
        Ring tables are reused only if the set of degenerate faces is unchanged,
        since patch membership depends on it.
        """
        out = TriangleMesh(vertices, self.faces)
        for key in _TOPO_CACHE_KEYS:
            if key in ("edge_vertices", "edge_faces", "face_edges"):
                continue
            if key in self.__dict__:
                out.__dict__[key] = self.__dict__[key]
        if "_edge_tables" in self.__dict__:
            out.__dict__["_edge_tables"] = self.__dict__["_edge_tables"]
        if self._ring_tables and np.array_equal(self.degenerate_mask, out.degenerate_mask):
            out._ring_tables = dict(self._ring_tables)
        return out


def build_ring_patch(mesh: TriangleMesh, face: int, ring: int) -> Patch:
    """r rounds of shared-vertex growth from ``face``; members ascend.

    Degenerate faces never join a patch, except that the center face is always
    a member regardless of degeneracy.
    """
    if not 0 <= face < mesh.n_faces:
        raise MeshError(f"face index {face} out of range")
    if ring < 0:
        raise ValueError("ring must be >= 0")
    cached = mesh._ring_tables.get(ring)
    if cached is not None:
        indptr, indices = cached
        members = indices[indptr[face] : indptr[face + 1]]
    else:
        members = mesh._ring_members(face, ring)
    return Patch(center=face, ring=ring, members=members)


def compute_scales(mesh: TriangleMesh) -> MeshScales:
    """Mesh-wide spacing statistics used to size filter and voxel kernels."""
    ef = mesh.edge_faces
    degen = mesh.degenerate_mask
    interior = ef[:, 1] >= 0
    pairs = ef[interior]
    pairs = pairs[~(degen[pairs[:, 0]] | degen[pairs[:, 1]])]
    if len(pairs):
        pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    if len(pairs) == 0:
        raise MeshError("mesh has no adjacent face pairs")
    sums = mesh._vertex_sums
    diffs = (sums[pairs[:, 0]] - sums[pairs[:, 1]]) / 3.0
    centroid_spacing = float(np.mean(np.linalg.norm(diffs, axis=1)))

    ev = mesh.edge_vertices
    if len(ev) == 0:
        raise MeshError("mesh has no edges")
    lengths = np.linalg.norm(mesh.vertices[ev[:, 0]] - mesh.vertices[ev[:, 1]], axis=1)
    mean_edge_length = float(np.mean(lengths))
    return MeshScales(
        centroid_spacing=centroid_spacing,
        face_spacing=centroid_spacing,
        mean_edge_length=mean_edge_length,
    )


# -- file I/O ----------------------------------------------------------------


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        fmt = format.lower()
        if fmt not in ("obj", "off"):
            raise MeshError(f"unsupported mesh format {format!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".off":
        return "off"
    raise MeshError(f"cannot infer mesh format from {path.name!r}; pass format=")


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Load an OBJ or OFF triangle mesh.

    OBJ: ``v x y z`` and ``f i j k`` lines (1-based indices; ``i/t/n`` face
    attributes are accepted and the position index is used). OFF: ``OFF``
    header, counts line, vertex lines, then ``3 i j k`` face lines. Comments
    (``#``) and blank lines are skipped. Non-triangular faces are an error;
    there is no implicit triangulation.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if fmt == "obj":
        return _parse_obj(text, path)
    return _parse_off(text, path)


def _parse_obj(text: str, path: Path) -> TriangleMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshError(f"{path.name}:{lineno}: vertex line needs 3 coordinates")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise MeshError(f"{path.name}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            entries = parts[1:]
            if len(entries) != 3:
                raise MeshError(
                    f"{path.name}:{lineno}: non-triangular face with {len(entries)} vertices"
                )
            idx = []
            for entry in entries:
                head = entry.split("/")[0]
                try:
                    value = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path.name}:{lineno}: bad face index {entry!r}") from exc
                if value <= 0:
                    raise MeshError(
                        f"{path.name}:{lineno}: face index {value} must be positive (1-based)"
                    )
                idx.append(value - 1)
            faces.append(tuple(idx))
            face_lines.append(lineno)
        # every other line type (vn, vt, o, g, s, usemtl, ...) is ignored
    return _finish_parse(vertices, faces, face_lines, path)


def _parse_off(text: str, path: Path) -> TriangleMesh:
    lines = [
        (lineno, line.strip())
        for lineno, line in enumerate(text.splitlines(), 1)
        if line.strip() and not line.strip().startswith("#")
    ]
    if not lines:
        raise MeshError(f"{path.name}: empty OFF file")
    it = iter(lines)
    lineno, header = next(it)
    if header != "OFF":
        raise MeshError(f"{path.name}:{lineno}: expected 'OFF' header, got {header!r}")
    try:
        lineno, counts_line = next(it)
        counts = counts_line.split()
        n_v, n_f = int(counts[0]), int(counts[1])
    except (StopIteration, IndexError, ValueError) as exc:
        raise MeshError(f"{path.name}: malformed OFF counts line") from exc
    vertices = []
    for _ in range(n_v):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise MeshError(f"{path.name}: unexpected end of file in vertex block") from None
        parts = line.split()
        if len(parts) < 3:
            raise MeshError(f"{path.name}:{lineno}: vertex line needs 3 coordinates")
        try:
            vertices.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise MeshError(f"{path.name}:{lineno}: bad vertex coordinate") from exc
    faces = []
    face_lines = []
    for _ in range(n_f):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise MeshError(f"{path.name}: unexpected end of file in face block") from None
        parts = line.split()
        try:
            k = int(parts[0])
        except (IndexError, ValueError) as exc:
            raise MeshError(f"{path.name}:{lineno}: bad face count") from exc
        if k != 3:
            raise MeshError(f"{path.name}:{lineno}: non-triangular face with {k} vertices")
        if len(parts) < 4:
            raise MeshError(f"{path.name}:{lineno}: face line needs 3 indices")
        try:
            faces.append((int(parts[1]), int(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise MeshError(f"{path.name}:{lineno}: bad face index") from exc
    return _finish_parse(vertices, faces, face_lines or [0] * len(faces), path)


def _finish_parse(vertices, faces, face_lines, path: Path) -> TriangleMesh:
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size:
        bad = (f < 0) | (f >= len(v))
        if bad.any():
            row = int(np.argmax(bad.any(axis=1)))
            where = f":{face_lines[row]}" if face_lines else ""
            raise MeshError(f"{path.name}{where}: face references vertex index out of range")
    try:
        return TriangleMesh(v, f)
    except MeshError as exc:
        raise MeshError(f"{path.name}: {exc}") from exc


def _fmt(x: float, full_precision: bool) -> str:
    if full_precision:
        return repr(float(x))
    return f"{float(x):.9g}"


def save_mesh(mesh: TriangleMesh, path, format: str | None = None, full_precision: bool = False) -> None:
    """Write OBJ or OFF (inferred from the suffix unless ``format`` is given).

    Floats are written with 9 significant digits; ``full_precision=True``
    switches to shortest-roundtrip notation so that load(save(m)) reproduces
    coordinates bit-exactly.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    lines = []
    if fmt == "obj":
        for v in mesh.vertices:
            lines.append(
                f"v {_fmt(v[0], full_precision)} {_fmt(v[1], full_precision)} {_fmt(v[2], full_precision)}"
            )
        for f in mesh.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    else:
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        for v in mesh.vertices:
            lines.append(
                f"{_fmt(v[0], full_precision)} {_fmt(v[1], full_precision)} {_fmt(v[2], full_precision)}"
            )
        for f in mesh.faces:
            lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    path.write_text("\n".join(lines) + "\n")
