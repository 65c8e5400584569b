"""Guided filtering of face normal fields, and normal-driven vertex updates.

The filter replaces each face normal by a normalized weighted average of its
r-ring neighborhood's normals, with a spatial gaussian on centroid distance
and a range gaussian on guidance-normal distance. The guidance field itself
comes from a consistency-ranked search over candidate 1-ring patches; for
training-target generation the ground-truth normals take the guidance role.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import MeshScales, Patch, TriangleMesh, compute_scales

logger = logging.getLogger(__name__)


@dataclass
class FilterStats:
    """Counters for rare fallback events (optional; pass None to skip)."""

    guidance_fallbacks: int = 0
    zero_weight_sums: int = 0


@dataclass(frozen=True)
class GnfParams:
    """Knobs of the guided filtering loop.

    mu_g is the range-kernel width on guidance normal differences; the
    spatial width is mu_d_factor times the mesh's mean adjacent-centroid
    distance, recomputed per call. filter_iters alternates normal filtering
    with vertex_iters rounds of vertex repositioning.
    """

    mu_g: float
    mu_d_factor: float = 2.0
    filter_iters: int = 10
    vertex_iters: int = 20
    neighborhood_ring: int = 2
    epsilon: float = 1e-9

    def __post_init__(self):
        if not self.mu_g > 0:
            raise ValueError("mu_g must be positive")
        if not self.mu_d_factor > 0:
            raise ValueError("mu_d_factor must be positive")
        if self.filter_iters < 1 or self.vertex_iters < 1:
            raise ValueError("filter_iters and vertex_iters must be >= 1")
        if self.neighborhood_ring < 1:
            raise ValueError("neighborhood_ring must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def kernel_g(n_i, n_j, mu_g: float):
    """Range gaussian exp(-|n_i - n_j|^2 / (2 mu_g^2)); broadcasts."""
    if not mu_g > 0:
        raise ValueError("mu_g must be positive")
    diff = np.asarray(n_i) - np.asarray(n_j)
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * mu_g * mu_g))


def kernel_d(c_i, c_j, mu_d: float):
    """Spatial gaussian exp(-|c_i - c_j|^2 / (2 mu_d^2)); broadcasts."""
    if not mu_d > 0:
        raise ValueError("mu_d must be positive")
    diff = np.asarray(c_i) - np.asarray(c_j)
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * mu_d * mu_d))


def edge_saliency(mesh: TriangleMesh, edge) -> float:
    """Normal-difference magnitude across an edge given as a face index pair.

    Boundary edges (second face -1) and edges touching a degenerate face
    have zero saliency.
    """
    f1, f2 = int(edge[0]), int(edge[1])
    if f1 < 0 or f2 < 0:
        return 0.0
    degen = mesh.degenerate_mask
    if degen[f1] or degen[f2]:
        return 0.0
    return float(np.linalg.norm(mesh.face_normals[f1] - mesh.face_normals[f2]))


def _edge_saliencies(mesh: TriangleMesh) -> np.ndarray:
    ef = mesh.edge_faces
    normals = mesh.face_normals
    degen = mesh.degenerate_mask
    interior = (ef[:, 1] >= 0) & ~degen[ef[:, 0]] & ~degen[np.maximum(ef[:, 1], 0)]
    phi = np.zeros(len(ef))
    rows = np.flatnonzero(interior)
    phi[rows] = np.linalg.norm(normals[ef[rows, 0]] - normals[ef[rows, 1]], axis=1)
    return phi


def _interior_edge_ids(mesh: TriangleMesh, members: np.ndarray) -> np.ndarray:
    eids = np.unique(mesh.face_edges[members].ravel())
    ef = mesh.edge_faces[eids]
    both = (ef[:, 1] >= 0) & np.isin(ef[:, 0], members) & np.isin(ef[:, 1], members)
    return eids[both]


def _consistency(normals, phi, members, edge_ids, epsilon: float) -> float:
    if len(members) == 0:
        return 0.0
    nm = normals[members]
    gram = nm @ nm.T
    spread = float(np.sqrt(max(2.0 - 2.0 * gram.min(), 0.0)))
    if len(edge_ids) == 0:
        return 0.0
    sal = phi[edge_ids]
    relevance = float(sal.max() / (epsilon + sal.sum()))
    return spread * relevance


def patch_consistency(mesh: TriangleMesh, patch: Patch, epsilon: float = 1e-9) -> float:
    """Normal spread times edge-saliency concentration; 0 for flat patches."""
    degen = mesh.degenerate_mask
    members = patch.members[~degen[patch.members]]
    phi = _edge_saliencies(mesh)
    edge_ids = _interior_edge_ids(mesh, members)
    return _consistency(mesh.face_normals, phi, members, edge_ids, epsilon)


def guidance_field(
    mesh: TriangleMesh,
    epsilon: float = 1e-9,
    area_weighted: bool = False,
    stats: FilterStats | None = None,
) -> np.ndarray:
    """Guidance normal for every face; degenerate faces get (0, 0, 0).

    For face i the candidate patches are the 1-ring patches centered at every
    face whose 1-ring contains i (equivalently, every 1-ring member of i plus
    i itself). The candidate with minimal consistency wins, ties resolved to
    the smallest center index, and its member normals are averaged
    (unweighted unless ``area_weighted``) and normalized.
    """
    indptr, indices = mesh.ring_members_table(1)
    degen = mesh.degenerate_mask
    normals = mesh.face_normals
    phi = _edge_saliencies(mesh)
    areas = mesh.face_areas
    n_faces = mesh.n_faces

    members_of = []
    consistency = np.zeros(n_faces)
    for j in range(n_faces):
        members = indices[indptr[j] : indptr[j + 1]]
        members = members[~degen[members]]
        members_of.append(members)
        edge_ids = _interior_edge_ids(mesh, members)
        consistency[j] = _consistency(normals, phi, members, edge_ids, epsilon)

    out = np.zeros((n_faces, 3))
    for i in range(n_faces):
        if degen[i]:
            continue
        candidates = members_of[i]
        if i not in candidates:
            candidates = np.sort(np.append(candidates, i))
        best = candidates[int(np.argmin(consistency[candidates]))]
        members = members_of[best]
        if area_weighted:
            avg = areas[members] @ normals[members]
        else:
            avg = normals[members].sum(axis=0)
        norm = np.linalg.norm(avg)
        if norm == 0.0:
            if stats is not None:
                stats.guidance_fallbacks += 1
            logger.warning("guidance average cancelled at face %d; keeping its normal", i)
            out[i] = normals[i]
        else:
            out[i] = avg / norm
    return out


def guidance_normal(
    mesh: TriangleMesh,
    face: int,
    epsilon: float = 1e-9,
    area_weighted: bool = False,
    stats: FilterStats | None = None,
) -> np.ndarray:
    """Guidance normal of a single face (see :func:`guidance_field`)."""
    if mesh.degenerate_mask[face]:
        raise ValueError(f"face {face} is degenerate; guidance undefined")
    indptr, indices = mesh.ring_members_table(1)
    degen = mesh.degenerate_mask
    normals = mesh.face_normals
    phi = _edge_saliencies(mesh)

    candidates = indices[indptr[face] : indptr[face + 1]]
    candidates = candidates[~degen[candidates]]
    if face not in candidates:
        candidates = np.sort(np.append(candidates, face))
    best_c = np.inf
    best = face
    best_members = None
    for j in candidates:
        members = indices[indptr[j] : indptr[j + 1]]
        members = members[~degen[members]]
        c = _consistency(normals, phi, members, _interior_edge_ids(mesh, members), epsilon)
        if c < best_c:
            best_c, best, best_members = c, j, members
    if area_weighted:
        avg = mesh.face_areas[best_members] @ normals[best_members]
    else:
        avg = normals[best_members].sum(axis=0)
    norm = np.linalg.norm(avg)
    if norm == 0.0:
        if stats is not None:
            stats.guidance_fallbacks += 1
        return normals[face].copy()
    return avg / norm


def _filter_with_guidance(
    mesh: TriangleMesh,
    guidance: np.ndarray,
    params: GnfParams,
    stats: FilterStats | None,
    scales: MeshScales | None = None,
) -> np.ndarray:
    guidance = np.asarray(guidance, dtype=np.float64)
    if guidance.shape != (mesh.n_faces, 3):
        raise ValueError(f"guidance must be ({mesh.n_faces}, 3), got {guidance.shape}")
    if scales is None:
        scales = compute_scales(mesh)
    mu_d = params.mu_d_factor * scales.centroid_spacing
    two_mu_d2 = 2.0 * mu_d * mu_d
    two_mu_g2 = 2.0 * params.mu_g * params.mu_g

    indptr, indices = mesh.ring_members_table(params.neighborhood_ring)
    degen = mesh.degenerate_mask
    normals = mesh.face_normals
    centroids = mesh.face_centroids
    areas = mesh.face_areas

    out = normals.copy()
    for i in range(mesh.n_faces):
        if degen[i]:
            continue
        members = indices[indptr[i] : indptr[i + 1]]
        d2 = np.sum((centroids[members] - centroids[i]) ** 2, axis=1)
        g2 = np.sum((guidance[members] - guidance[i]) ** 2, axis=1)
        w = areas[members] * np.exp(-d2 / two_mu_d2) * np.exp(-g2 / two_mu_g2)
        v = w @ normals[members]
        norm = np.linalg.norm(v)
        if norm == 0.0:
            if stats is not None:
                stats.zero_weight_sums += 1
            logger.warning("filtered normal cancelled at face %d; keeping its normal", i)
            continue
        out[i] = v / norm
    return out


def guided_filter_normals(
    mesh: TriangleMesh,
    guidance: np.ndarray,
    params: GnfParams,
    stats: FilterStats | None = None,
    scales: MeshScales | None = None,
) -> np.ndarray:
    """One pass of guided normal filtering against an explicit guidance field.

    Every non-degenerate face's normal becomes the unit-normalized,
    area/spatial/range weighted average of its neighborhood's current
    normals; the neighborhood is the face's ``neighborhood_ring``-ring patch
    (the face itself included). Degenerate faces keep (0, 0, 0).

    ``scales`` overrides the spatial-kernel width source; by default the
    mesh's own scales are measured on every call.
    """
    return _filter_with_guidance(mesh, guidance, params, stats, scales)


def gt_guided_filter_normals(
    mesh: TriangleMesh,
    truth_normals: np.ndarray,
    params: GnfParams,
    stats: FilterStats | None = None,
    scales: MeshScales | None = None,
) -> np.ndarray:
    """Guided filtering with ground-truth normals in the guidance role."""
    return _filter_with_guidance(mesh, truth_normals, params, stats, scales)


def update_vertices(mesh: TriangleMesh, target_normals: np.ndarray, vertex_iters: int) -> TriangleMesh:
    """Move vertices toward the planes implied by target face normals.

    Runs ``vertex_iters`` Jacobi sweeps: every vertex moves by the mean, over
    its non-degenerate incident faces, of the target-normal component of the
    offset to the face centroid. Centroids are recomputed each sweep from the
    previous sweep's positions; all updates within a sweep read the same
    buffer. Connectivity is untouched.
    """
    if vertex_iters < 1:
        raise ValueError("vertex_iters must be >= 1")
    target_normals = np.asarray(target_normals, dtype=np.float64)
    if target_normals.shape != (mesh.n_faces, 3):
        raise ValueError(
            f"target_normals must be ({mesh.n_faces}, 3), got {target_normals.shape}"
        )
    indptr, indices = mesh.vertex_faces
    degen = mesh.degenerate_mask
    owner = np.repeat(np.arange(mesh.n_vertices), np.diff(indptr))
    keep = ~degen[indices]
    inc_face = indices[keep]
    inc_vertex = owner[keep]
    counts = np.bincount(inc_vertex, minlength=mesh.n_vertices).astype(np.float64)
    counted = counts > 0

    n = target_normals
    outer_sum = np.zeros((mesh.n_vertices, 3, 3))
    np.add.at(outer_sum, inc_vertex, n[inc_face][:, :, None] * n[inc_face][:, None, :])

    x = mesh.vertices.copy()
    faces = mesh.faces
    for _ in range(vertex_iters):
        centroids = x[faces].sum(axis=1) / 3.0
        alpha = np.sum(n * centroids, axis=1)
        drive = np.zeros((mesh.n_vertices, 3))
        np.add.at(drive, inc_vertex, n[inc_face] * alpha[inc_face, None])
        step = drive - np.einsum("vij,vj->vi", outer_sum, x)
        x = x + np.where(counted[:, None], step / np.maximum(counts, 1.0)[:, None], 0.0)
    return mesh.with_vertices(x)


def gnf_denoise(
    mesh: TriangleMesh,
    params: GnfParams,
    progress=None,
    stats: FilterStats | None = None,
) -> TriangleMesh:
    """Full guided-filtering denoise loop.

    Each of the ``filter_iters`` iterations recomputes the guidance field,
    filters all face normals once, and applies ``vertex_iters`` vertex-update
    sweeps. ``progress(iteration, mesh)`` is called after each iteration when
    given (e.g. to log per-iteration error against a known ground truth).
    """
    current = mesh
    for iteration in range(1, params.filter_iters + 1):
        guidance = guidance_field(current, params.epsilon, stats=stats)
        filtered = _filter_with_guidance(current, guidance, params, stats)
        current = update_vertices(current, filtered, params.vertex_iters)
        if progress is not None:
            progress(iteration, current)
    return current
