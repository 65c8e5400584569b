"""Face-local voxelization of mesh neighborhoods into normal-labeled grids.

Each non-degenerate face gets a pose-normalized cubic grid: the face's
2-ring average normal is rotated onto a fixed target direction, the face
centroid moves to the origin, and every grid cube is labeled with the
normalized average normal of the candidate faces that overlap it. The
grids are the network's input representation.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .mesh import MeshScales, TriangleMesh, compute_scales

logger = logging.getLogger(__name__)

GRID_MAGIC = b"NNVX"
GRID_VERSION = 1

# ring radius of the patch whose average normal fixes the grid pose
PATCH_RING = 2

_ANTIPODAL_TOL = 1e-12


@dataclass(frozen=True)
class VoxelParams:
    """Grid geometry: half-extent in cubes, cube-size divisor, pose target."""

    ts: int = 20
    alpha_c: float = 8.0
    target_normal: tuple[float, float, float] = (0.0, 1.0, 0.0)
    candidate_ring: int = 4

    def __post_init__(self):
        if self.ts < 1:
            raise ValueError(f"ts must be >= 1, got {self.ts}")
        if not self.alpha_c > 0:
            raise ValueError(f"alpha_c must be positive, got {self.alpha_c}")
        if self.candidate_ring < 1:
            raise ValueError(f"candidate_ring must be >= 1, got {self.candidate_ring}")
        n_t = np.asarray(self.target_normal, dtype=np.float64)
        if n_t.shape != (3,) or abs(np.linalg.norm(n_t) - 1.0) > 1e-9:
            raise ValueError("target_normal must be a unit 3-vector")

    @property
    def grid_edge(self) -> int:
        return 2 * self.ts + 1


@dataclass
class VoxelStats:
    """Counters for label cancellations (opposed normals summing to zero)."""

    cancelled_labels: int = 0


@dataclass(frozen=True)
class NormalizationTransform:
    """Rigid map into the grid frame: p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(eq=False)
class VolumetricGrid:
    """Dense cubic grid of normal labels; (0,0,0) labels mark empty cubes."""

    labels: np.ndarray  # (edge, edge, edge, 3) float32
    cube_size: float
    occupancy: int

    @property
    def ts(self) -> int:
        return (self.labels.shape[0] - 1) // 2


def _rotation_between(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Minimal rotation carrying unit vector ``source`` onto unit ``target``.

    Near-antipodal pairs fall back to a half-turn about a fixed axis chosen
    perpendicular to ``target`` so that repeated runs agree bit-for-bit.
    """
    c = float(np.dot(source, target))
    if 1.0 + c <= _ANTIPODAL_TOL:
        axis = np.array([1.0, 0.0, 0.0])
        axis = axis - np.dot(axis, target) * target
        norm = np.linalg.norm(axis)
        if norm <= _ANTIPODAL_TOL:
            axis = np.array([0.0, 1.0, 0.0])
            axis = axis - np.dot(axis, target) * target
            norm = np.linalg.norm(axis)
        axis /= norm
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    v = np.cross(source, target)
    k = np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )
    return np.eye(3) + k + (k @ k) / (1.0 + c)


def compute_normalization(
    mesh: TriangleMesh, face: int, params: VoxelParams
) -> NormalizationTransform:
    """Pose-normalizing transform for ``face``.

    The rotation carries the face's 2-ring average normal onto the target
    direction; the translation then moves the face centroid to the origin.
    """
    if not 0 <= face < mesh.n_faces:
        raise ValueError(f"face {face} out of range")
    if mesh.degenerate_mask[face]:
        raise ValueError(f"face {face} is degenerate")
    indptr, indices = mesh.ring_members_table(PATCH_RING)
    members = indices[indptr[face] : indptr[face + 1]]
    avg = mesh.face_normals[members].mean(axis=0)
    norm = np.linalg.norm(avg)
    if norm == 0.0:
        raise ValueError(f"degenerate patch normal at face {face}")
    n_bar = avg / norm
    target = np.asarray(params.target_normal, dtype=np.float64)
    rotation = _rotation_between(n_bar, target)
    centroid = mesh._vertex_sums[face] / 3.0
    return NormalizationTransform(rotation=rotation, translation=-(rotation @ centroid))


def _overlap_axes(triangle: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The 13 candidate separating axes with the triangle's projection range."""
    edges = triangle[[1, 2, 0]] - triangle
    axes = np.zeros((13, 3))
    axes[0, 0] = axes[1, 1] = axes[2, 2] = 1.0
    axes[3] = np.cross(edges[0], edges[1])
    for j in range(3):
        ex, ey, ez = edges[j]
        axes[4 + j] = (0.0, -ez, ey)
        axes[7 + j] = (ez, 0.0, -ex)
        axes[10 + j] = (-ey, ex, 0.0)
    proj = axes @ triangle.T
    return axes, proj.min(axis=1), proj.max(axis=1)


def _overlap_many(triangle: np.ndarray, centers: np.ndarray, half_size: float) -> np.ndarray:
    """Closed separating-axis test of one triangle against many cubes."""
    axes, lo, hi = _overlap_axes(triangle)
    radius = half_size * np.abs(axes).sum(axis=1)
    c = axes @ centers.T
    separated = (lo[:, None] - c > radius[:, None]) | (c - hi[:, None] > radius[:, None])
    return ~separated.any(axis=0)


def triangle_box_overlap(triangle, box_center, half_size: float) -> bool:
    """Whether a closed triangle intersects a closed axis-aligned cube.

    Thirteen-axis separating-axis test; touching counts as overlap.
    Degenerate triangles (segments or points) lose their zero-vector axes,
    and the remaining axes still decide containment exactly.
    """
    if not half_size > 0:
        raise ValueError(f"half_size must be positive, got {half_size}")
    triangle = np.asarray(triangle, dtype=np.float64)
    if triangle.shape != (3, 3):
        raise ValueError(f"triangle must be (3, 3), got {triangle.shape}")
    center = np.asarray(box_center, dtype=np.float64).reshape(1, 3)
    return bool(_overlap_many(triangle, center, float(half_size))[0])


def _local_candidate_geometry(
    mesh: TriangleMesh, face: int, params: VoxelParams, rotation: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate triangles and normals rotated into the grid frame.

    Positions are taken relative to the face centroid as (3v - S_i)/3 with
    S_i the exact vertex sum, so translating the whole mesh cancels exactly
    whenever the coordinate sums are exact (binary-grid-aligned inputs).
    """
    indptr, indices = mesh.ring_members_table(params.candidate_ring)
    candidates = indices[indptr[face] : indptr[face + 1]]
    center_sum = mesh._vertex_sums[face]
    corners = mesh.vertices[mesh.faces[candidates]]  # (K, 3, 3)
    relative = (3.0 * corners - center_sum) / 3.0
    triangles = relative @ rotation.T
    normals = mesh.face_normals[candidates] @ rotation.T
    return triangles, normals


def voxelize_face(
    mesh: TriangleMesh,
    face: int,
    params: VoxelParams,
    scales: MeshScales | None = None,
    stats: VoxelStats | None = None,
    brute_force: bool = False,
) -> VolumetricGrid:
    """Build the normal-labeled grid around one non-degenerate face.

    Cube (x, y, z) of side ``cube_size`` is centered at grid coordinates
    ((x - ts), (y - ts), (z - ts)) * cube_size; its label is the normalized
    average of the rotated normals of every overlapping candidate face, or
    (0, 0, 0) when none overlaps. ``brute_force`` disables the per-triangle
    index-range pruning and tests every cube (for oracle comparisons).
    """
    transform = compute_normalization(mesh, face, params)
    if scales is None:
        scales = compute_scales(mesh)
    cube = scales.face_spacing / params.alpha_c
    half = cube / 2.0
    triangles, normals = _local_candidate_geometry(mesh, face, params, transform.rotation)

    ts = params.ts
    edge = params.grid_edge
    sums = np.zeros((edge, edge, edge, 3), dtype=np.float64)
    counts = np.zeros((edge, edge, edge), dtype=np.int64)
    coords = (np.arange(edge, dtype=np.float64) - ts) * cube

    for tri, normal in zip(triangles, normals):
        if brute_force:
            lo = np.zeros(3, dtype=np.int64)
            hi = np.full(3, edge - 1, dtype=np.int64)
        else:
            # prune to the triangle's cube-index bounding box, padded one
            # cube so float rounding can never drop a touching cube
            lo = np.ceil(tri.min(axis=0) / cube - 0.5).astype(np.int64) + ts - 1
            hi = np.floor(tri.max(axis=0) / cube + 0.5).astype(np.int64) + ts + 1
            lo = np.maximum(lo, 0)
            hi = np.minimum(hi, edge - 1)
            if np.any(hi < lo):
                continue
        ix, iy, iz = (np.arange(lo[a], hi[a] + 1) for a in range(3))
        gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
        gx, gy, gz = gx.ravel(), gy.ravel(), gz.ravel()
        centers = np.column_stack((coords[gx], coords[gy], coords[gz]))
        mask = _overlap_many(tri, centers, half)
        sums[gx[mask], gy[mask], gz[mask]] += normal
        counts[gx[mask], gy[mask], gz[mask]] += 1

    norms = np.linalg.norm(sums, axis=3)
    filled = norms > 0.0
    labels = np.zeros_like(sums)
    labels[filled] = sums[filled] / norms[filled][:, None]
    cancelled = int(np.count_nonzero((counts > 0) & ~filled))
    if cancelled:
        if stats is not None:
            stats.cancelled_labels += cancelled
        logger.warning(
            "face %d: %d cube labels cancelled to zero by opposed normals", face, cancelled
        )
    return VolumetricGrid(
        labels=labels.astype(np.float32),
        cube_size=float(cube),
        occupancy=int(np.count_nonzero(filled)),
    )


def voxelize_mesh(mesh: TriangleMesh, params: VoxelParams, stats: VoxelStats | None = None):
    """Yield (face index, grid) for every non-degenerate face.

    Mesh scales and ring tables are computed once and shared; each grid is
    identical to a standalone ``voxelize_face`` call for that face.
    """
    scales = compute_scales(mesh)
    mesh.ring_members_table(params.candidate_ring)
    for face in range(mesh.n_faces):
        if mesh.degenerate_mask[face]:
            continue
        yield face, voxelize_face(mesh, face, params, scales=scales, stats=stats)


def center_overlap_count(
    mesh: TriangleMesh,
    face: int,
    params: VoxelParams,
    scales: MeshScales | None = None,
) -> int:
    """Number of grid cubes the pose-normalized face itself overlaps."""
    transform = compute_normalization(mesh, face, params)
    if scales is None:
        scales = compute_scales(mesh)
    cube = scales.face_spacing / params.alpha_c
    corners = mesh.vertices[mesh.faces[face]]
    relative = (3.0 * corners - mesh._vertex_sums[face]) / 3.0
    tri = relative @ transform.rotation.T

    ts = params.ts
    edge = params.grid_edge
    coords = (np.arange(edge, dtype=np.float64) - ts) * cube
    lo = np.maximum(np.ceil(tri.min(axis=0) / cube - 0.5).astype(np.int64) + ts - 1, 0)
    hi = np.minimum(np.floor(tri.max(axis=0) / cube + 0.5).astype(np.int64) + ts + 1, edge - 1)
    if np.any(hi < lo):
        return 0
    ix, iy, iz = (np.arange(lo[a], hi[a] + 1) for a in range(3))
    gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
    centers = np.column_stack(
        (coords[gx.ravel()], coords[gy.ravel()], coords[gz.ravel()])
    )
    return int(np.count_nonzero(_overlap_many(tri, centers, cube / 2.0)))


def save_grid(grid: VolumetricGrid, path) -> None:
    """Write one grid: magic, version, half-extent, cube size, f32 labels."""
    labels = np.ascontiguousarray(grid.labels, dtype="<f4")
    edge = labels.shape[0]
    if labels.shape != (edge, edge, edge, 3) or edge % 2 != 1:
        raise ValueError(f"labels must be cubic with odd edge, got {labels.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIf", GRID_MAGIC, GRID_VERSION, grid.ts, grid.cube_size))
        fh.write(labels.tobytes())


def load_grid(path) -> VolumetricGrid:
    """Read a grid written by :func:`save_grid`; occupancy is recounted."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValueError(f"{path}: truncated grid header")
        magic, version, ts, cube = struct.unpack("<4sIIf", header)
        if magic != GRID_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != GRID_VERSION:
            raise ValueError(f"{path}: unsupported grid version {version}")
        payload = fh.read()
    edge = 2 * ts + 1
    expected = edge**3 * 3 * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: grid payload is {len(payload)} bytes, expected {expected}"
        )
    labels = np.frombuffer(payload, dtype="<f4").reshape(edge, edge, edge, 3).copy()
    occupancy = int(np.count_nonzero(np.any(labels != 0.0, axis=3)))
    return VolumetricGrid(labels=labels, cube_size=float(cube), occupancy=occupancy)
