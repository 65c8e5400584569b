"""Denoising quality metrics.

Both metrics compare a denoised mesh against ground truth: mean angular
deviation of face normals (degrees) and RMS vertex-to-surface distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh


@dataclass(frozen=True)
class MetricReport:
    e_a: float
    e_v: float
    faces: int
    vertices: int


def _check_topology(denoised: TriangleMesh, truth: TriangleMesh) -> None:
    if denoised.n_faces != truth.n_faces or not np.array_equal(denoised.faces, truth.faces):
        raise ValueError("topology mismatch: meshes must share the same face index triples")


def mean_angular_error(denoised: TriangleMesh, truth: TriangleMesh, squared: bool = False) -> float:
    """Mean angle (degrees) between corresponding face normals.

    Faces degenerate in either mesh are skipped. ``squared=True`` returns the
    mean of squared angles (degrees^2) instead.
    """
    _check_topology(denoised, truth)
    ok = ~(denoised.degenerate_mask | truth.degenerate_mask)
    if not ok.any():
        raise ValueError("no non-degenerate faces to compare")
    nd = denoised.face_normals[ok]
    nt = truth.face_normals[ok]
    dots = np.sum(nd * nt, axis=1)
    angles = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    # bit-identical normals are at angle zero; the dot product alone rounds
    angles[np.all(nd == nt, axis=1)] = 0.0
    return float(np.mean(angles ** 2 if squared else angles))


def _closest_dist2(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Squared distance from each point to its closest point on triangle soup.

    points: (P, 3); tri: (T, 3, 3). Region classification per triangle follows
    the standard closest-point-on-triangle case analysis over barycentric
    regions (vertex / edge / interior), vectorized over triangles.
    """
    a = tri[:, 0]
    ab = tri[:, 1] - a
    ac = tri[:, 2] - a
    bc = tri[:, 2] - tri[:, 1]
    out = np.empty(len(points))
    with np.errstate(divide="ignore", invalid="ignore"):
        for i, p in enumerate(points):
            ap = p - a
            d1 = np.sum(ab * ap, axis=1)
            d2 = np.sum(ac * ap, axis=1)
            bp = p - tri[:, 1]
            d3 = np.sum(ab * bp, axis=1)
            d4 = np.sum(ac * bp, axis=1)
            cp = p - tri[:, 2]
            d5 = np.sum(ab * cp, axis=1)
            d6 = np.sum(ac * cp, axis=1)

            vc = d1 * d4 - d3 * d2
            vb = d5 * d2 - d1 * d6
            va = d3 * d6 - d5 * d4

            t_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)[:, None]
            t_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)[:, None]
            den_bc = (d4 - d3) + (d5 - d6)
            t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)[:, None]
            denom = va + vb + vc
            v = np.where(denom != 0, vb / denom, 0.0)[:, None]
            w = np.where(denom != 0, vc / denom, 0.0)[:, None]

            conds = [
                c[:, None]
                for c in (
                    (d1 <= 0) & (d2 <= 0),
                    (d3 >= 0) & (d4 <= d3),
                    (vc <= 0) & (d1 >= 0) & (d3 <= 0),
                    (d6 >= 0) & (d5 <= d6),
                    (vb <= 0) & (d2 >= 0) & (d6 <= 0),
                    (va <= 0) & (d4 >= d3) & (d5 >= d6),
                )
            ]
            choices = [
                a,
                tri[:, 1],
                a + t_ab * ab,
                tri[:, 2],
                a + t_ac * ac,
                tri[:, 1] + t_bc * bc,
            ]
            closest = np.select(conds, choices, default=a + v * ab + w * ac)
            out[i] = np.min(np.sum((p - closest) ** 2, axis=1))
    return out


def vertex_l2_error(denoised: TriangleMesh, truth: TriangleMesh) -> float:
    """RMS distance from denoised vertices to the truth surface.

    Distances are exact point-to-triangle closest distances over all
    non-degenerate truth faces (brute force over triangles).
    """
    keep = ~truth.degenerate_mask
    if not keep.any():
        raise ValueError("truth mesh has no non-degenerate faces")
    if denoised.n_vertices == 0:
        raise ValueError("denoised mesh has no vertices")
    tri = truth.vertices[truth.faces[keep]]
    d2 = _closest_dist2(denoised.vertices, tri)
    return float(np.sqrt(np.mean(d2)))


def evaluate(denoised: TriangleMesh, truth: TriangleMesh) -> MetricReport:
    """Bundle both metrics with the counts they averaged over."""
    e_a = mean_angular_error(denoised, truth)
    e_v = vertex_l2_error(denoised, truth)
    ok = ~(denoised.degenerate_mask | truth.degenerate_mask)
    return MetricReport(
        e_a=e_a, e_v=e_v, faces=int(ok.sum()), vertices=denoised.n_vertices
    )
