import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derham_shape.errors import MeshParseError, MeshValidationError
from derham_shape.mesh import (
    BoundaryPartition,
    TetMesh,
    generate_cube_mesh,
    plane_selector,
    read_mesh_file,
    save_mesh,
    tag_boundary,
)

UNIT_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_cube_counts(n):
    m = generate_cube_mesh(n)
    assert m.n_vertices == (n + 1) ** 3
    assert m.n_tets == 6 * n**3
    assert m.n_vertices - m.n_edges + m.n_faces - m.n_tets == 1
    assert len(m.boundary_faces) == 12 * n * n
    assert np.all(m.volumes > 0)
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-14)


def test_single_tet():
    m = TetMesh(UNIT_TET, [[0, 1, 2, 3]])
    assert (m.n_edges, m.n_faces) == (6, 4)
    assert m.volumes[0] == pytest.approx(1 / 6)
    # gradients of barycentrics sum to zero
    assert np.allclose(m.barycentric_gradients.sum(axis=1), 0)


def test_validation_errors():
    with pytest.raises(MeshValidationError, match="non-positive orientation"):
        TetMesh(UNIT_TET, [[0, 2, 1, 3]])
    with pytest.raises(MeshValidationError, match="out of range"):
        TetMesh(UNIT_TET, [[0, 1, 2, 4]])
    with pytest.raises(MeshValidationError, match="repeated"):
        TetMesh(UNIT_TET, [[0, 1, 1, 3]])
    verts = np.vstack([UNIT_TET, UNIT_TET + 5])
    with pytest.raises(MeshValidationError, match="connected"):
        TetMesh(verts, [[0, 1, 2, 3], [4, 5, 6, 7]])
    # three tets sharing the face (0, 1, 2)
    verts = np.vstack([UNIT_TET, [[0.2, 0.2, 2.0], [0.3, 0.3, 3.0]]])
    with pytest.raises(MeshValidationError, match="more than two"):
        TetMesh(verts, [[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])


def test_tag_boundary_plane():
    m = generate_cube_mesh(2)
    assert len(tag_boundary(m, plane_selector(2, 0.0)).gamma_t) == 8
    assert len(tag_boundary(m, True).gamma_t) == 48
    p = tag_boundary(m, False)
    assert len(p.gamma_t) == 0 and len(p.gamma_n) == 48


def test_partition_rejects_interior_face():
    m = generate_cube_mesh(1)
    interior = np.setdiff1d(np.arange(m.n_faces), m.boundary_faces)
    with pytest.raises(MeshValidationError):
        BoundaryPartition(m, interior[:1])


def test_roundtrip(tmp_path):
    m = generate_cube_mesh(2)
    p = tag_boundary(m, plane_selector(0, 1.0))
    save_mesh(m, tmp_path / "m.json", p)
    m2, p2 = read_mesh_file(tmp_path / "m.json")
    assert np.array_equal(m2.tets, m.tets)
    assert np.array_equal(np.sort(p2.gamma_t), np.sort(p.gamma_t))


@pytest.mark.parametrize("payload, msg", [
    ("{", "invalid JSON"),
    ('{"tets": []}', "vertices"),
    ('{"vertices": [[0,0,0]], "tets": [[0, 1, 2]]}', r"tets\[0\]: expected 4 numbers"),
    ('{"vertices": [[0,0,0]], "tets": [[0, 1, 2, 2.5]]}', "integer"),
])
def test_parse_errors(tmp_path, payload, msg):
    f = tmp_path / "bad.json"
    f.write_text(payload)
    with pytest.raises(MeshParseError, match=msg):
        read_mesh_file(f)


def test_untagged_faces_error(tmp_path):
    m = generate_cube_mesh(1)
    data = {"vertices": m.vertices.tolist(), "tets": m.tets.tolist(), "gamma_t_faces": [[0, 1, 100]]}
    f = tmp_path / "m.json"
    f.write_text(json.dumps(data))
    with pytest.raises(MeshParseError, match="not a mesh face"):
        read_mesh_file(f)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normals_outward_under_perturbation(seed):
    m = generate_cube_mesh(2)
    rng = np.random.default_rng(seed)
    v = m.vertices + rng.uniform(-0.08, 0.08, m.vertices.shape)
    m = m.with_vertices(v)
    bf = m.boundary_faces
    out = m.face_centroids(bf) - m.centroids[m.boundary_face_tet]
    normals = m.boundary_normals()
    assert np.all(np.einsum("ij,ij->i", normals, out) > 0)
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
