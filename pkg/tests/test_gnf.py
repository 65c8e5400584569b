import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normnet.gnf import (
    FilterStats,
    GnfParams,
    edge_saliency,
    gnf_denoise,
    gt_guided_filter_normals,
    guidance_field,
    guidance_normal,
    guided_filter_normals,
    kernel_d,
    kernel_g,
    patch_consistency,
    update_vertices,
)
from normnet.mesh import MeshScales, TriangleMesh, build_ring_patch
from normnet.metrics import mean_angular_error

from helpers import grid_cube, icosphere, jitter, plane_grid, two_triangles


# -- independent reference implementations (loops and sets only) --------------


def ref_ring_members(mesh, face, ring):
    fv = [set(map(int, f)) for f in mesh.faces]
    degen = mesh.degenerate_mask
    members = {face}
    for _ in range(ring):
        grown = set(members)
        for m in list(members):
            for g in range(mesh.n_faces):
                if g not in grown and not degen[g] and fv[g] & fv[m]:
                    grown.add(g)
        members = grown
    return sorted(members)


def ref_centroid_spacing(mesh):
    pairs = set()
    edges = {}
    for f, (a, b, c) in enumerate(map(tuple, mesh.faces)):
        if mesh.degenerate_mask[f]:
            continue
        for e in ((a, b), (b, c), (c, a)):
            key = tuple(sorted(e))
            if key in edges:
                pairs.add(tuple(sorted((edges[key], f))))
            else:
                edges[key] = f
    dists = [
        float(np.linalg.norm(mesh.face_centroids[i] - mesh.face_centroids[j]))
        for i, j in sorted(pairs)
    ]
    return sum(dists) / len(dists)


def ref_guided_filter(mesh, guidance, params):
    mu_d = params.mu_d_factor * ref_centroid_spacing(mesh)
    normals = mesh.face_normals
    centroids = mesh.face_centroids
    areas = mesh.face_areas
    out = []
    for i in range(mesh.n_faces):
        if mesh.degenerate_mask[i]:
            out.append(normals[i])
            continue
        acc = np.zeros(3)
        for j in ref_ring_members(mesh, i, params.neighborhood_ring):
            d2 = float(np.sum((centroids[i] - centroids[j]) ** 2))
            g2 = float(np.sum((guidance[i] - guidance[j]) ** 2))
            w = (
                float(areas[j])
                * math.exp(-d2 / (2 * mu_d * mu_d))
                * math.exp(-g2 / (2 * params.mu_g * params.mu_g))
            )
            acc = acc + w * normals[j]
        norm = float(np.linalg.norm(acc))
        out.append(acc / norm if norm > 0 else normals[i])
    return np.asarray(out)


def ref_guidance(mesh, epsilon=1e-9):
    normals = mesh.face_normals
    degen = mesh.degenerate_mask

    def consistency(members):
        spread = max(
            (
                float(np.linalg.norm(normals[a] - normals[b]))
                for a in members
                for b in members
            ),
            default=0.0,
        )
        edges = {}
        for f in members:
            a, b, c = map(int, mesh.faces[f])
            for e in ((a, b), (b, c), (c, a)):
                edges.setdefault(tuple(sorted(e)), []).append(f)
        sal = [
            float(np.linalg.norm(normals[fs[0]] - normals[fs[1]]))
            for fs in edges.values()
            if len(fs) == 2
        ]
        if not sal:
            return 0.0
        return spread * (max(sal) / (epsilon + sum(sal)))

    out = np.zeros((mesh.n_faces, 3))
    for i in range(mesh.n_faces):
        if degen[i]:
            continue
        candidates = ref_ring_members(mesh, i, 1)
        best, best_c = None, None
        for j in candidates:
            c = consistency(ref_ring_members(mesh, j, 1))
            if best_c is None or c < best_c or (c == best_c and j < best):
                best, best_c = j, c
        avg = normals[ref_ring_members(mesh, best, 1)].mean(axis=0)
        norm = np.linalg.norm(avg)
        out[i] = avg / norm if norm > 0 else normals[i]
    return out


def ref_update_vertices(mesh, target_normals, iters):
    x = mesh.vertices.copy()
    degen = mesh.degenerate_mask
    incident = [
        [f for f in range(mesh.n_faces) if v in mesh.faces[f] and not degen[f]]
        for v in range(mesh.n_vertices)
    ]
    for _ in range(iters):
        old = x.copy()
        for v in range(mesh.n_vertices):
            if not incident[v]:
                continue
            acc = np.zeros(3)
            for f in incident[v]:
                c = old[mesh.faces[f]].sum(axis=0) / 3.0
                n = target_normals[f]
                acc = acc + n * float(np.dot(n, c - old[v]))
            x[v] = old[v] + acc / len(incident[v])
    return x


def folded_pair(degrees):
    """Two triangles sharing an edge with normals ``degrees`` apart."""
    base = two_triangles()
    axis = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    theta = np.radians(degrees)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    rot = np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)
    v = base.vertices.copy()
    v[3] = rot @ v[3]
    return base.with_vertices(v)


# -- kernels -------------------------------------------------------------------


def test_kernel_frozen_values():
    # perpendicular unit normals at mu_g = 0.5: exp(-2 / (2 * 0.25)) = exp(-4)
    got = kernel_g(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 0.5)
    assert got == pytest.approx(1.8315638888734179e-2, abs=1e-14)
    # antipodal normals: exp(-8)
    got = kernel_g(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]), 0.5)
    assert got == pytest.approx(3.3546262790251185e-4, abs=1e-16)
    # centroid distance equal to mu_d: exp(-1/2)
    got = kernel_d(np.array([0.0, 0, 0]), np.array([0.0, 0, 2.0]), 2.0)
    assert got == pytest.approx(0.6065306597126334, abs=1e-14)


@given(
    st.floats(0.0, 4.0),
    st.floats(0.0, 4.0),
    st.floats(0.5, 10.0),
)
@settings(max_examples=200, deadline=None)
def test_kernel_bounds_and_monotonicity(d1, d2, mu):
    lo, hi = sorted([d1, d2])
    a = np.array([0.0, 0.0, 0.0])
    k_lo = kernel_d(a, np.array([lo, 0, 0]), mu)
    k_hi = kernel_d(a, np.array([hi, 0, 0]), mu)
    assert 0.0 < k_hi <= k_lo <= 1.0


def test_kernel_rejects_bad_width():
    with pytest.raises(ValueError):
        kernel_g(np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        kernel_d(np.zeros(3), np.zeros(3), -1.0)


# -- saliency and consistency ----------------------------------------------------


def test_edge_saliency_60_degrees_is_one():
    mesh = folded_pair(60.0)
    assert edge_saliency(mesh, (0, 1)) == pytest.approx(1.0, abs=1e-12)


def test_edge_saliency_boundary_is_zero():
    mesh = two_triangles()
    assert edge_saliency(mesh, (0, -1)) == 0.0


def test_flat_patch_consistency_is_zero():
    mesh = plane_grid(4, 4)
    patch = build_ring_patch(mesh, 12, 1)
    assert patch_consistency(mesh, patch) == 0.0


def test_corner_patch_less_consistent_than_flat():
    mesh = grid_cube(3)
    corner_vertex = int(
        np.argmin(np.linalg.norm(mesh.vertices - np.array([0.0, 0.0, 0.0]), axis=1))
    )
    corner_face = int(np.argmax(np.any(mesh.faces == corner_vertex, axis=1)))
    flat_face = int(
        np.argmin(np.linalg.norm(mesh.face_centroids - np.array([0.5, 0.5, 0.0]), axis=1))
    )
    c_corner = patch_consistency(mesh, build_ring_patch(mesh, corner_face, 1))
    c_flat = patch_consistency(mesh, build_ring_patch(mesh, flat_face, 1))
    assert c_flat == 0.0
    assert c_corner > c_flat


# -- guidance ---------------------------------------------------------------------


def test_guidance_on_flat_side_is_exact_normal():
    mesh = grid_cube(4)
    # a face in the middle of the z=0 side, one quad away from every cube edge
    inner = int(
        np.argmin(
            np.linalg.norm(mesh.face_centroids - np.array([0.5, 0.5, 0.0]), axis=1)
        )
    )
    g = guidance_normal(mesh, inner)
    assert np.allclose(g, [0.0, 0.0, -1.0], atol=1e-12)


def test_guidance_field_matches_reference():
    mesh = jitter(icosphere(1), 0.02, seed=31)
    got = guidance_field(mesh)
    want = ref_guidance(mesh)
    assert np.max(np.abs(got - want)) < 1e-9


def test_guidance_normal_agrees_with_field():
    mesh = jitter(icosphere(1), 0.02, seed=32)
    field = guidance_field(mesh)
    for f in [0, 7, 41, 79]:
        assert np.allclose(guidance_normal(mesh, f), field[f], atol=1e-12)


def test_guidance_unit_norm():
    mesh = jitter(icosphere(2), 0.05, seed=33)
    g = guidance_field(mesh)
    assert np.allclose(np.linalg.norm(g, axis=1), 1.0, atol=1e-9)


def test_guidance_fallback_counter_on_cancelling_normals():
    # two coincident triangles with opposite winding: normals cancel exactly
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0.5, 1, 0]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [1, 0, 2]])
    mesh = TriangleMesh(vertices, faces)
    stats = FilterStats()
    g = guidance_field(mesh, stats=stats)
    assert stats.guidance_fallbacks == 2
    assert np.array_equal(g, mesh.face_normals)


# -- guided filtering ---------------------------------------------------------------


def test_guided_filter_matches_double_loop_reference():
    mesh = jitter(icosphere(1), 0.03, seed=40)
    rng = np.random.Generator(np.random.PCG64(41))
    guidance = rng.normal(size=(mesh.n_faces, 3))
    guidance /= np.linalg.norm(guidance, axis=1)[:, None]
    params = GnfParams(mu_g=0.35, filter_iters=1, vertex_iters=1)
    got = guided_filter_normals(mesh, guidance, params)
    want = ref_guided_filter(mesh, guidance, params)
    assert np.max(np.abs(got - want)) <= 1e-12


def test_guided_filter_outputs_unit_normals():
    mesh = jitter(icosphere(2), 0.05, seed=42)
    params = GnfParams(mu_g=0.3)
    out = guided_filter_normals(mesh, guidance_field(mesh), params)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)


def test_guided_filter_preserves_flat_plane():
    mesh = plane_grid(5, 5)
    params = GnfParams(mu_g=0.3)
    out = guided_filter_normals(mesh, guidance_field(mesh), params)
    assert np.allclose(out, mesh.face_normals, atol=1e-12)


def test_guided_filter_rotation_equivariance():
    mesh = jitter(icosphere(1), 0.03, seed=43)
    params = GnfParams(mu_g=0.3)
    axis = np.array([0.2, 1.0, 0.5]) / np.linalg.norm([0.2, 1.0, 0.5])
    theta = 0.7
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    rot = np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)
    out = guided_filter_normals(mesh, guidance_field(mesh), params)
    rotated = mesh.with_vertices(mesh.vertices @ rot.T)
    out_rot = guided_filter_normals(rotated, guidance_field(rotated), params)
    assert np.max(np.abs(out_rot - out @ rot.T)) < 1e-9


def test_small_mu_g_preserves_creases_better():
    roof = plane_grid(8, 4)
    v = roof.vertices.copy()
    v[:, 1] = 0.6 * np.maximum(v[:, 0] - 4.0, 0.0)
    roof = roof.with_vertices(v)
    left = roof.face_centroids[:, 0] < 3.5
    right = roof.face_centroids[:, 0] > 4.5

    def crease_angle(normals):
        a = normals[left].mean(axis=0)
        b = normals[right].mean(axis=0)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        return np.degrees(np.arccos(np.clip(np.dot(a, b), -1, 1)))

    sharp = crease_angle(
        guided_filter_normals(roof, guidance_field(roof), GnfParams(mu_g=0.1))
    )
    smooth = crease_angle(
        guided_filter_normals(roof, guidance_field(roof), GnfParams(mu_g=10.0))
    )
    original = crease_angle(roof.face_normals)
    assert sharp > smooth
    assert sharp == pytest.approx(original, abs=1.0)


def test_zero_weight_sum_fallback_counter():
    # coincident triangles with opposite winding: equal weights on exactly
    # antipodal normals cancel the weighted sum bit-exactly
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0.5, 1, 0]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [1, 0, 2]])
    mesh = TriangleMesh(vertices, faces)
    stats = FilterStats()
    guidance = np.tile([0.0, 0.0, 1.0], (2, 1))
    scales = MeshScales(
        centroid_spacing=1.0, face_spacing=1.0, mean_edge_length=1.0
    )
    out = guided_filter_normals(
        mesh, guidance, GnfParams(mu_g=0.3), stats=stats, scales=scales
    )
    assert stats.zero_weight_sums == 2
    assert np.array_equal(out, mesh.face_normals)


def test_gt_guided_filter_improves_noisy_plane():
    truth = plane_grid(8, 8)
    noisy = jitter(truth, 0.05, seed=50)
    params = GnfParams(mu_g=0.3)
    filtered = gt_guided_filter_normals(noisy, truth.face_normals, params)
    before = np.degrees(
        np.arccos(np.clip(np.sum(noisy.face_normals * truth.face_normals, axis=1), -1, 1))
    ).mean()
    after = np.degrees(
        np.arccos(np.clip(np.sum(filtered * truth.face_normals, axis=1), -1, 1))
    ).mean()
    assert after < before


# -- vertex updates -----------------------------------------------------------------


def test_update_vertices_matches_reference():
    mesh = jitter(icosphere(1), 0.03, seed=60)
    rng = np.random.Generator(np.random.PCG64(61))
    normals = rng.normal(size=(mesh.n_faces, 3))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    got = update_vertices(mesh, normals, 3)
    want = ref_update_vertices(mesh, normals, 3)
    assert np.max(np.abs(got.vertices - want)) < 1e-12


def test_update_vertices_fixed_point_on_plane():
    mesh = plane_grid(4, 4)
    updated = update_vertices(mesh, mesh.face_normals, 5)
    assert np.array_equal(updated.vertices, mesh.vertices)


def test_update_vertices_flattens_noisy_plane():
    truth = plane_grid(6, 6)
    noisy = jitter(truth, 0.05, seed=62)
    target = np.tile([0.0, 1.0, 0.0], (truth.n_faces, 1))
    updated = update_vertices(noisy, target, 10)
    assert np.std(updated.vertices[:, 1]) < 0.5 * np.std(noisy.vertices[:, 1])
    assert np.array_equal(updated.faces, noisy.faces)


def test_update_vertices_rejects_bad_args():
    mesh = two_triangles()
    with pytest.raises(ValueError):
        update_vertices(mesh, np.zeros((3, 3)), 1)
    with pytest.raises(ValueError):
        update_vertices(mesh, np.zeros((2, 3)), 0)


# -- full loop ---------------------------------------------------------------------


def test_gnf_denoise_improves_noisy_cube():
    truth = grid_cube(6)
    noisy = jitter(truth, 0.02, seed=70)
    params = GnfParams(mu_g=0.3, filter_iters=3, vertex_iters=5)
    seen = []
    denoised = gnf_denoise(noisy, params, progress=lambda i, m: seen.append(i))
    assert seen == [1, 2, 3]
    # 12.3 degrees of angular error before, about 3 after
    assert mean_angular_error(denoised, truth) < 0.5 * mean_angular_error(noisy, truth)


def test_gnf_denoise_deterministic():
    noisy = jitter(icosphere(1), 0.02, seed=71)
    params = GnfParams(mu_g=0.3, filter_iters=2, vertex_iters=3)
    a = gnf_denoise(noisy, params)
    b = gnf_denoise(noisy, params)
    assert np.array_equal(a.vertices, b.vertices)


def test_params_validation():
    with pytest.raises(ValueError):
        GnfParams(mu_g=0.0)
    with pytest.raises(ValueError):
        GnfParams(mu_g=0.3, filter_iters=0)
    with pytest.raises(ValueError):
        GnfParams(mu_g=0.3, neighborhood_ring=0)
    with pytest.raises(ValueError):
        GnfParams(mu_g=0.3, epsilon=0.0)
