"""Oriented tetrahedral meshes with a two-part boundary tagging.

Edges and faces are enumerated lexicographically by their sorted vertex
indices; an edge is oriented from its low to its high vertex and a face by
its sorted vertex triple.  Both conventions are relied upon by
:mod:`derham_shape.derham` and :mod:`derham_shape.transform`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import MeshParseError, MeshValidationError

# local vertex pairs/triples of a tet, in lexicographic order of local indices
LOCAL_EDGES = np.array(list(itertools.combinations(range(4), 2)), dtype=np.int64)
LOCAL_FACES = np.array(list(itertools.combinations(range(4), 3)), dtype=np.int64)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = vertices[tets]
    edges = p[:, 1:, :] - p[:, :1, :]
    return np.linalg.det(edges) / 6.0


class TetMesh:
    """Immutable, positively oriented, connected tetrahedral mesh.

    Parameters
    ----------
    vertices : (V, 3) float array
    tets : (T, 4) int array of vertex indices, each tet positively oriented.
    """

    def __init__(self, vertices, tets, *, validate: bool = True):
        vertices = np.asarray(vertices, dtype=np.float64)
        tets = np.asarray(tets, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshValidationError("vertices must have shape (V, 3)")
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshValidationError("tets must have shape (T, 4)")
        self.vertices = _readonly(vertices)
        self.tets = _readonly(tets)
        self._build_topology()
        if validate:
            self.validate()

    def _build_topology(self) -> None:
        nv = len(self.vertices)
        srt = np.sort(self.tets, axis=1)

        # edges: sorted pairs, lexicographic
        pairs = srt[:, LOCAL_EDGES].reshape(-1, 2)
        edges, edge_inv = np.unique(pairs, axis=0, return_inverse=True)
        self.edges = _readonly(edges)
        self.tet_edges = _readonly(edge_inv.reshape(-1, 6))

        triples = srt[:, LOCAL_FACES].reshape(-1, 3)
        faces, face_inv, counts = np.unique(
            triples, axis=0, return_inverse=True, return_counts=True
        )
        self.faces = _readonly(faces)
        self.tet_faces = _readonly(face_inv.reshape(-1, 4))
        self.face_tet_count = _readonly(counts)
        self.boundary_faces = _readonly(np.flatnonzero(counts == 1))
        self._n_vertices = nv

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def n_simplices(self, q: int) -> int:
        return (self.n_vertices, self.n_edges, self.n_faces, self.n_tets)[q]

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        nv = self.n_vertices
        if self.n_tets == 0:
            raise MeshValidationError("mesh has no tets")
        if self.tets.min() < 0 or self.tets.max() >= nv:
            bad = int(np.flatnonzero((self.tets < 0).any(1) | (self.tets >= nv).any(1))[0])
            raise MeshValidationError(f"tet {bad}: vertex index out of range")
        dup = np.flatnonzero((np.diff(np.sort(self.tets, axis=1), axis=1) == 0).any(1))
        if dup.size:
            raise MeshValidationError(f"tet {int(dup[0])}: repeated vertex")
        vol = signed_volumes(self.vertices, self.tets)
        bad = np.flatnonzero(~(vol > 0))
        if bad.size:
            raise MeshValidationError(f"tet {int(bad[0])}: non-positive orientation")
        if (self.face_tet_count > 2).any():
            f = int(np.flatnonzero(self.face_tet_count > 2)[0])
            raise MeshValidationError(f"face {f}: shared by more than two tets")
        graph = coo_matrix(
            (np.ones(self.n_edges), (self.edges[:, 0], self.edges[:, 1])), shape=(nv, nv)
        )
        ncomp, _ = connected_components(graph, directed=False)
        if ncomp != 1:
            raise MeshValidationError(f"mesh is not connected ({ncomp} components)")

    # -- geometry ------------------------------------------------------------
    @cached_property
    def volumes(self) -> np.ndarray:
        return _readonly(signed_volumes(self.vertices, self.tets))

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(T, 4, 3) constant gradients of the barycentric coordinates."""
        p = self.vertices[self.tets]
        edge_mat = p[:, 1:, :] - p[:, :1, :]  # rows x_i - x_0
        inv = np.linalg.inv(edge_mat)  # columns are grads of lambda_1..3
        g = np.empty((self.n_tets, 4, 3))
        g[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
        return _readonly(g)

    @cached_property
    def centroids(self) -> np.ndarray:
        return _readonly(self.vertices[self.tets].mean(axis=1))

    def face_centroids(self, faces=None) -> np.ndarray:
        idx = slice(None) if faces is None else np.asarray(faces)
        return self.vertices[self.faces[idx]].mean(axis=1)

    @cached_property
    def boundary_face_tet(self) -> np.ndarray:
        """Index of the unique tet incident to each boundary face."""
        owner = np.full(self.n_faces, -1, dtype=np.int64)
        tet_ids = np.repeat(np.arange(self.n_tets), 4)
        owner[self.tet_faces.ravel()] = tet_ids
        return _readonly(owner[self.boundary_faces])

    def boundary_normals(self) -> np.ndarray:
        """Outward unit normals of the boundary faces, from the orientation signs."""
        bf = self.boundary_faces
        tri = self.vertices[self.faces[bf]]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1)[:, None]
        owner = self.boundary_face_tet
        slot = np.argmax(self.tet_faces[owner] == bf[:, None], axis=1)
        return n * self.tet_face_signs[owner, slot][:, None]

    # -- per-tet orientation tables -------------------------------------------
    @cached_property
    def _sort_perm(self) -> np.ndarray:
        return np.argsort(self.tets, axis=1, kind="stable")

    @cached_property
    def tet_edge_local(self) -> np.ndarray:
        """(T, 6, 2) local vertex positions of each edge in ``tet_edges`` order.

        Pairs are listed low-to-high by global index, i.e. in the global
        edge orientation.
        """
        return _readonly(self._sort_perm[:, LOCAL_EDGES])

    @cached_property
    def tet_face_local(self) -> np.ndarray:
        """(T, 4, 3) local vertex positions of each face in ``tet_faces`` order."""
        return _readonly(self._sort_perm[:, LOCAL_FACES])

    @cached_property
    def tet_parity(self) -> np.ndarray:
        """+1 where the given vertex order is an even permutation of the sorted one."""
        order = self._sort_perm
        # parity via counting inversions of a 4-permutation
        inv = np.zeros(self.n_tets, dtype=np.int64)
        for i, j in itertools.combinations(range(4), 2):
            inv += order[:, i] > order[:, j]
        return _readonly(np.where(inv % 2 == 0, 1, -1))

    @cached_property
    def tet_face_signs(self) -> np.ndarray:
        """(T, 4) incidence signs of ``tet_faces`` in the oriented tet boundary.

        Local face k omits sorted vertex 3 - k, which carries ``(-1)**(3-k)``
        in the boundary of the sorted tet; the tet's own parity flips it.
        """
        k = np.arange(4)
        return _readonly(self.tet_parity[:, None] * (-1) ** (3 - k)[None, :])

    def with_vertices(self, vertices) -> "TetMesh":
        """Same connectivity, new coordinates (validated)."""
        return TetMesh(vertices, self.tets)

    def __repr__(self) -> str:
        return (
            f"TetMesh(V={self.n_vertices}, E={self.n_edges}, "
            f"F={self.n_faces}, T={self.n_tets})"
        )


@dataclass(frozen=True)
class BoundaryPartition:
    """Split of the boundary faces into a Dirichlet part and its complement.

    ``gamma_t`` holds the face indices carrying tangential (essential)
    conditions; ``gamma_n`` is the rest of ``mesh.boundary_faces``.
    """

    mesh: TetMesh
    gamma_t: np.ndarray

    def __post_init__(self):
        gt = np.unique(np.asarray(self.gamma_t, dtype=np.int64))
        if not np.isin(gt, self.mesh.boundary_faces).all():
            bad = gt[~np.isin(gt, self.mesh.boundary_faces)]
            raise MeshValidationError(f"face {int(bad[0])}: tagged as gamma_t but not on boundary")
        object.__setattr__(self, "gamma_t", _readonly(gt))

    @property
    def gamma_n(self) -> np.ndarray:
        return np.setdiff1d(self.mesh.boundary_faces, self.gamma_t)

    def side(self, which: str) -> np.ndarray:
        if which == "t":
            return self.gamma_t
        if which == "n":
            return self.gamma_n
        raise ValueError(f"side must be 't' or 'n', got {which!r}")


def generate_cube_mesh(n: int) -> TetMesh:
    """Kuhn-split structured mesh of the unit cube with ``n`` cells per side."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    m = n + 1
    g = np.arange(m, dtype=np.float64) / n
    z, y, x = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def vid(i, j, k):
        return i + m * (j + m * k)

    unit = np.eye(3, dtype=np.int64)
    paths = []
    for perm in itertools.permutations(range(3)):
        steps = np.cumsum(unit[list(perm)], axis=0)
        corners = np.vstack([np.zeros(3, dtype=np.int64), steps])
        if np.linalg.det(steps.astype(float)) < 0:
            corners[[2, 3]] = corners[[3, 2]]
        paths.append(corners)
    paths = np.array(paths)  # (6, 4, 3)

    kk, jj, ii = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])  # x fastest
    c = base[:, None, None, :] + paths[None]  # (cells, 6, 4, 3)
    tets = vid(c[..., 0], c[..., 1], c[..., 2]).reshape(-1, 4)
    return TetMesh(vertices, tets)


def tag_boundary(mesh: TetMesh, selector: Callable[[np.ndarray], bool] | bool) -> BoundaryPartition:
    """Tag as gamma_t every boundary face whose centroid satisfies ``selector``.

    ``selector`` receives the (3,) centroid of one face; ``True``/``False``
    select all or none.
    """
    bf = mesh.boundary_faces
    if selector is True:
        return BoundaryPartition(mesh, bf)
    if selector is False:
        return BoundaryPartition(mesh, bf[:0])
    cent = mesh.face_centroids(bf)
    keep = np.fromiter((bool(selector(c)) for c in cent), dtype=bool, count=len(bf))
    return BoundaryPartition(mesh, bf[keep])


def plane_selector(axis: int, value: float, tol: float = 1e-12) -> Callable[[np.ndarray], bool]:
    return lambda c: abs(c[axis] - value) <= tol


# -- file I/O ---------------------------------------------------------------

def save_mesh(mesh: TetMesh, path, partition: BoundaryPartition | None = None) -> None:
    gt = [] if partition is None else mesh.faces[partition.gamma_t].tolist()
    payload = {
        "vertices": mesh.vertices.tolist(),
        "tets": mesh.tets.tolist(),
        "gamma_t_faces": gt,
    }
    Path(path).write_text(json.dumps(payload))


def _parse_rows(data, key: str, width: int, kind):
    if key not in data:
        raise MeshParseError(f"missing field {key!r}")
    rows = data[key]
    if not isinstance(rows, list):
        raise MeshParseError(f"{key}: expected a list")
    out = []
    for i, row in enumerate(rows):
        if (
            not isinstance(row, list)
            or len(row) != width
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in row)
        ):
            raise MeshParseError(f"{key}[{i}]: expected {width} numbers, got {row!r}")
        if kind is int and not all(float(v).is_integer() for v in row):
            raise MeshParseError(f"{key}[{i}]: expected integer indices, got {row!r}")
        out.append([kind(v) for v in row])
    return out


def read_mesh_file(path) -> tuple[TetMesh, BoundaryPartition]:
    """Load a mesh JSON file together with its gamma_t tagging."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise MeshParseError(f"{path}: cannot read ({exc.strerror})") from exc
    if not isinstance(data, dict):
        raise MeshParseError(f"{path}: top level must be an object")
    vertices = _parse_rows(data, "vertices", 3, float)
    tets = _parse_rows(data, "tets", 4, int)
    mesh = TetMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   np.array(tets, dtype=np.int64).reshape(-1, 4))
    tagged = _parse_rows(data, "gamma_t_faces", 3, int) if "gamma_t_faces" in data else []
    if not tagged:
        return mesh, BoundaryPartition(mesh, np.empty(0, dtype=np.int64))
    keys = np.sort(np.array(tagged, dtype=np.int64), axis=1)
    lookup = {tuple(f): i for i, f in enumerate(mesh.faces.tolist())}
    ids = []
    for i, k in enumerate(keys.tolist()):
        if tuple(k) not in lookup:
            raise MeshParseError(f"gamma_t_faces[{i}]: {tagged[i]} is not a mesh face")
        ids.append(lookup[tuple(k)])
    return mesh, BoundaryPartition(mesh, np.array(ids, dtype=np.int64))


def load_mesh(path) -> TetMesh:
    return read_mesh_file(path)[0]
