import numpy as np
import pytest

from normnet.mesh import (
    MeshError,
    TriangleMesh,
    build_ring_patch,
    compute_scales,
    load_mesh,
    save_mesh,
)

from helpers import icosahedron, icosphere, jitter, two_triangles, unit_cube

TET_OBJ = """\
# tetrahedron
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
"""


def test_obj_parse(tmp_path):
    path = tmp_path / "tet.obj"
    path.write_text(TET_OBJ)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4
    assert mesh.n_faces == 4
    assert np.array_equal(mesh.faces[0], [0, 2, 1])


def test_obj_face_attributes(tmp_path):
    path = tmp_path / "attr.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n")
    mesh = load_mesh(path)
    assert np.array_equal(mesh.faces, [[0, 1, 2]])


@pytest.mark.parametrize("fmt", ["obj", "off"])
def test_round_trip_bit_exact(tmp_path, fmt):
    rng = np.random.Generator(np.random.PCG64(7))
    base = icosphere(1)
    mesh = base.with_vertices(base.vertices + rng.normal(0, 0.01, base.vertices.shape))
    path = tmp_path / f"m.{fmt}"
    save_mesh(mesh, path, full_precision=True)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
    # a second save must reproduce the file byte for byte
    path2 = tmp_path / f"m2.{fmt}"
    save_mesh(back, path2, full_precision=True)
    assert path.read_text() == path2.read_text()


def test_default_precision_is_9_significant_digits(tmp_path):
    mesh = TriangleMesh(
        np.array([[np.pi, 0, 0], [0, 1, 0], [0, 0, 1]]), np.array([[0, 1, 2]])
    )
    path = tmp_path / "p.obj"
    save_mesh(mesh, path)
    assert path.read_text().splitlines()[0] == "v 3.14159265 0 0"


def test_obj_non_triangular_face_errors_with_line(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="5"):
        load_mesh(path)


def test_off_non_triangular_face_errors_with_line(tmp_path):
    path = tmp_path / "quad.off"
    path.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(MeshError, match="7"):
        load_mesh(path)


def test_off_icosahedron_connectivity(tmp_path):
    path = tmp_path / "ico.off"
    save_mesh(icosahedron(), path)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 12
    assert mesh.n_faces == 20
    neighbors = mesh.face_neighbors
    assert (neighbors >= 0).sum(axis=1).tolist() == [3] * 20


def test_out_of_range_index_errors(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshError, match="out of range"):
        load_mesh(path)


def test_repeated_vertex_index_errors():
    with pytest.raises(MeshError, match="repeats"):
        TriangleMesh(np.eye(3), np.array([[0, 1, 1]]))


def test_zero_area_face_is_degenerate_and_retained():
    vertices = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [3, 0, 0]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [1, 3, 4]])  # second face is collinear
    mesh = TriangleMesh(vertices, faces)
    assert mesh.n_faces == 2
    assert mesh.degenerate_faces.tolist() == [1]
    assert np.array_equal(mesh.face_normals[1], [0, 0, 0])
    assert mesh.face_areas[1] == 0.0


def test_degenerate_face_excluded_from_patches():
    vertices = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [3, 0, 0]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [1, 3, 4]])
    mesh = TriangleMesh(vertices, faces)
    patch = build_ring_patch(mesh, 0, 1)
    assert patch.members.tolist() == [0]
    # a degenerate center stays in its own patch
    patch = build_ring_patch(mesh, 1, 1)
    assert 1 in patch.members.tolist()


def test_icosahedron_one_ring_has_10_members():
    mesh = icosahedron()
    for f in range(mesh.n_faces):
        patch = build_ring_patch(mesh, f, 1)
        assert len(patch.members) == 10
        assert f in patch.members


def test_zero_ring_patch_is_center_only():
    mesh = icosphere(1)
    patch = build_ring_patch(mesh, 17, 0)
    assert patch.members.tolist() == [17]


def test_ring_patches_grow_monotonically():
    mesh = icosphere(1)
    for f in [0, 11, 42]:
        prev = set()
        for r in range(4):
            members = set(build_ring_patch(mesh, f, r).members.tolist())
            assert prev <= members
            prev = members


def test_patch_members_sorted_and_match_bulk_table():
    mesh = icosphere(1)
    indptr, indices = mesh.ring_members_table(2)
    for f in [0, 5, 63]:
        patch = build_ring_patch(mesh, f, 2)
        assert np.all(np.diff(patch.members) > 0)
        assert np.array_equal(patch.members, indices[indptr[f] : indptr[f + 1]])


def test_edge_adjacent_subset_of_vertex_adjacent():
    mesh = jitter(icosphere(1), 0.01, seed=3)
    indptr, indices = mesh.vertex_adjacent_faces
    for f in range(mesh.n_faces):
        va = set(indices[indptr[f] : indptr[f + 1]].tolist())
        ea = set(x for x in mesh.face_neighbors[f].tolist() if x >= 0)
        assert ea <= va


def test_vertex_faces_csr_matches_brute_force():
    mesh = icosahedron()
    indptr, indices = mesh.vertex_faces
    for v in range(mesh.n_vertices):
        wanted = [f for f in range(mesh.n_faces) if v in mesh.faces[f]]
        got = indices[indptr[v] : indptr[v + 1]].tolist()
        assert got == wanted


def test_normals_unit_and_orthogonal_to_edges():
    mesh = jitter(icosphere(2), 0.02, seed=11)
    normals = mesh.face_normals
    p = mesh.vertices[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    ok = ~mesh.degenerate_mask
    assert np.allclose(np.linalg.norm(normals[ok], axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(np.sum(normals[ok] * e1[ok], axis=1))) < 1e-9 * np.max(np.abs(e1))
    assert np.max(np.abs(np.sum(normals[ok] * e2[ok], axis=1))) < 1e-9 * np.max(np.abs(e2))


def test_outward_normals_on_reference_shapes():
    for mesh in (icosahedron(), unit_cube()):
        centers = mesh.face_centroids - mesh.vertices.mean(axis=0)
        assert np.all(np.sum(centers * mesh.face_normals, axis=1) > 0)


def test_two_triangle_scales():
    scales = compute_scales(two_triangles())
    assert scales.centroid_spacing == pytest.approx(np.sqrt(2.0) / 3.0, abs=1e-12)
    assert scales.face_spacing == scales.centroid_spacing
    assert scales.mean_edge_length == pytest.approx((4.0 + np.sqrt(2.0)) / 5.0, abs=1e-12)


def test_scales_error_without_adjacent_pairs():
    mesh = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError, match="adjacent"):
        compute_scales(mesh)


def test_with_vertices_shares_topology_and_refreshes_geometry():
    mesh = icosphere(1)
    _ = mesh.ring_members_table(2)
    moved = mesh.with_vertices(mesh.vertices * 2.0)
    assert moved.ring_members_table(2) is mesh.ring_members_table(2)
    assert np.allclose(moved.face_areas, 4.0 * mesh.face_areas)
    fresh = TriangleMesh(mesh.vertices * 2.0, mesh.faces)
    assert np.array_equal(moved.face_normals, fresh.face_normals)


def test_non_manifold_edge_errors():
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]])
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    mesh = TriangleMesh(vertices, faces)
    with pytest.raises(MeshError, match="non-manifold"):
        _ = mesh.edge_faces
