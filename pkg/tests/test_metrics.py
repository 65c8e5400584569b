import numpy as np
import pytest

from normnet.mesh import TriangleMesh
from normnet.metrics import evaluate, mean_angular_error, vertex_l2_error

from helpers import icosphere, jitter, plane_grid, two_triangles


def rotation(axis, degrees):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    theta = np.radians(degrees)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)


def segment_dist2(p, a, b):
    ab = b - a
    t = np.dot(p - a, ab) / np.dot(ab, ab)
    t = min(1.0, max(0.0, t))
    return float(np.sum((a + t * ab - p) ** 2))


def oracle_point_tri_dist2(p, tri):
    """Independent closest-distance oracle: plane projection + edge clamping."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    nn = np.dot(n, n)
    best = min(
        segment_dist2(p, a, b), segment_dist2(p, b, c), segment_dist2(p, c, a)
    )
    if nn > 0:
        q = p - (np.dot(p - a, n) / nn) * n
        # barycentric test of the projection
        m = np.column_stack([b - a, c - a])
        coeffs, *_ = np.linalg.lstsq(m, q - a, rcond=None)
        u, v = coeffs
        if u >= 0 and v >= 0 and u + v <= 1:
            best = min(best, float(np.sum((q - p) ** 2)))
    return best


def test_identical_meshes_give_zero_errors():
    mesh = icosphere(1)
    assert mean_angular_error(mesh, mesh) == 0.0
    assert vertex_l2_error(mesh, mesh) == 0.0


def test_known_angles_average():
    truth = two_triangles()
    # fold each face about the shared diagonal by a known angle
    axis = np.array([1.0, 1.0, 0.0])
    v = truth.vertices.copy()
    v[1] = rotation(axis, 30.0) @ v[1]
    v[3] = rotation(axis, -90.0) @ v[3]
    bent = truth.with_vertices(v)
    assert mean_angular_error(bent, truth) == pytest.approx(60.0, abs=1e-9)
    assert mean_angular_error(bent, truth, squared=True) == pytest.approx(
        (30.0 ** 2 + 90.0 ** 2) / 2, abs=1e-6
    )


def test_topology_mismatch_errors():
    a = two_triangles()
    b = TriangleMesh(a.vertices, a.faces[::-1].copy())
    with pytest.raises(ValueError, match="topology"):
        mean_angular_error(a, b)
    c = icosphere(1)
    with pytest.raises(ValueError, match="topology"):
        vertex_l2_error(a, c) if False else mean_angular_error(a, c)


def test_degenerate_faces_skipped():
    vertices = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [3, 0, 0]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [1, 3, 4]])  # face 1 degenerate
    truth = TriangleMesh(vertices, faces)
    v = vertices.copy()
    v[2] = rotation([1, 0, 0], 10.0) @ v[2]
    denoised = truth.with_vertices(v)
    # only face 0 counts; its normal rotated by something < 10 degrees, not NaN
    err = mean_angular_error(denoised, truth)
    assert np.isfinite(err) and 0 < err <= 10.0


def test_clamp_handles_near_parallel_normals():
    mesh = icosphere(2)
    shifted = mesh.with_vertices(mesh.vertices + np.array([0.1, 0.2, 0.3]))
    err = mean_angular_error(shifted, mesh)
    assert np.isfinite(err)
    assert err < 1e-5


def test_rigid_motion_invariance():
    truth = icosphere(2)
    denoised = jitter(truth, 0.01, seed=2)
    r = rotation([0.3, 1.0, -0.2], 37.0)
    t = np.array([0.4, -1.1, 2.0])
    truth_moved = truth.with_vertices(truth.vertices @ r.T + t)
    denoised_moved = denoised.with_vertices(denoised.vertices @ r.T + t)
    assert mean_angular_error(denoised_moved, truth_moved) == pytest.approx(
        mean_angular_error(denoised, truth), abs=1e-9
    )
    assert vertex_l2_error(denoised_moved, truth_moved) == pytest.approx(
        vertex_l2_error(denoised, truth), abs=1e-9
    )


def test_plane_offset_vertex_error():
    truth = plane_grid(6, 6, spacing=0.5)
    offset = 0.37
    moved = truth.with_vertices(truth.vertices + np.array([0.0, offset, 0.0]))
    assert vertex_l2_error(moved, truth) == pytest.approx(offset, abs=1e-9)


def test_vertex_error_matches_double_loop_oracle():
    truth = jitter(icosphere(1), 0.05, seed=21)
    denoised = jitter(icosphere(1), 0.08, seed=22)
    got = vertex_l2_error(denoised, truth)
    tri = truth.vertices[truth.faces]
    d2 = [
        min(oracle_point_tri_dist2(p, tri[t]) for t in range(len(tri)))
        for p in denoised.vertices
    ]
    assert got == pytest.approx(float(np.sqrt(np.mean(d2))), abs=1e-9)


def test_evaluate_report():
    truth = icosphere(1)
    denoised = jitter(truth, 0.02, seed=1)
    report = evaluate(denoised, truth)
    assert report.faces == truth.n_faces
    assert report.vertices == truth.n_vertices
    assert report.e_a > 0 and report.e_v > 0
