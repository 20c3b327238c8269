"""Incidence matrices of the discrete de Rham complex and boundary DOF masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import UsageError
from .mesh import BoundaryPartition, TetMesh


def _incidence(rows: np.ndarray, cols: np.ndarray, signs: np.ndarray, shape) -> sp.csr_matrix:
    m = sp.coo_matrix((signs.astype(np.int64), (rows, cols)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def gradient_incidence(mesh: TetMesh) -> sp.csr_matrix:
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    signs = np.tile([-1, 1], ne)
    return _incidence(rows, cols, signs, (ne, mesh.n_vertices))


def curl_incidence(mesh: TetMesh) -> sp.csr_matrix:
    f = mesh.faces
    nv = mesh.n_vertices
    edge_key = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
    # boundary of [a, b, c] is [b, c] - [a, c] + [a, b]
    sub = [(1, 2, 1), (0, 2, -1), (0, 1, 1)]
    rows, cols, signs = [], [], []
    for i, j, s in sub:
        cols.append(np.searchsorted(edge_key, f[:, i] * nv + f[:, j]))
        rows.append(np.arange(len(f)))
        signs.append(np.full(len(f), s))
    return _incidence(np.concatenate(rows), np.concatenate(cols), np.concatenate(signs),
                      (len(f), mesh.n_edges))


def divergence_incidence(mesh: TetMesh) -> sp.csr_matrix:
    rows = np.repeat(np.arange(mesh.n_tets), 4)
    return _incidence(rows, mesh.tet_faces.ravel(), mesh.tet_face_signs.ravel(),
                      (mesh.n_tets, mesh.n_faces))


def closure_masks(mesh: TetMesh, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean masks of vertices, edges, faces in the closure of a face set."""
    faces = np.asarray(faces, dtype=np.int64)
    vmask = np.zeros(mesh.n_vertices, dtype=bool)
    vmask[mesh.faces[faces].ravel()] = True
    emask = np.zeros(mesh.n_edges, dtype=bool)
    if faces.size:
        tri = mesh.faces[faces]
        nv = mesh.n_vertices
        edge_key = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
        for i, j in ((0, 1), (0, 2), (1, 2)):
            emask[np.searchsorted(edge_key, tri[:, i] * nv + tri[:, j])] = True
    fmask = np.zeros(mesh.n_faces, dtype=bool)
    fmask[faces] = True
    return vmask, emask, fmask


@dataclass(frozen=True)
class DeRhamComplex:
    """Signed incidence matrices ``G``, ``C``, ``D`` with free-DOF index sets.

    ``free_dofs[(q, side)]`` lists the q-simplices not lying in the closure
    of the boundary part ``side`` (``"t"`` or ``"n"``); every volume DOF is
    free.
    """

    mesh: TetMesh
    partition: BoundaryPartition
    G: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    free_dofs: dict = field(repr=False)

    def derivative(self, q: int) -> sp.csr_matrix:
        """Float copy of the q-th incidence matrix."""
        return derivative_matrix(self, q).astype(np.float64)

    def free(self, q: int, side: str = "t") -> np.ndarray:
        return self.free_dofs[(q, side)]

    def restricted_derivative(self, q: int, side: str = "t") -> sp.csr_matrix:
        """d_q with rows/columns restricted to the free DOFs of ``side``."""
        d = self.derivative(q)
        return d[self.free(q + 1, side)][:, self.free(q, side)].tocsr()


def build_complex(mesh: TetMesh, partition: BoundaryPartition) -> DeRhamComplex:
    if partition.mesh is not mesh:
        if not (np.array_equal(partition.mesh.tets, mesh.tets)
                and partition.mesh.n_vertices == mesh.n_vertices):
            raise UsageError("partition belongs to a different mesh")
    free = {}
    for side in ("t", "n"):
        vm, em, fm = closure_masks(mesh, partition.side(side))
        for q, mask in enumerate((vm, em, fm)):
            idx = np.flatnonzero(~mask)
            idx.setflags(write=False)
            free[(q, side)] = idx
        all_tets = np.arange(mesh.n_tets)
        all_tets.setflags(write=False)
        free[(3, side)] = all_tets
    return DeRhamComplex(
        mesh=mesh,
        partition=partition,
        G=gradient_incidence(mesh),
        C=curl_incidence(mesh),
        D=divergence_incidence(mesh),
        free_dofs=free,
    )


def derivative_matrix(complex_: DeRhamComplex, q: int) -> sp.csr_matrix:
    """Exterior derivative d_q as an integer incidence matrix (q = 0, 1, 2)."""
    if q == 0:
        return complex_.G
    if q == 1:
        return complex_.C
    if q == 2:
        return complex_.D
    raise UsageError(f"derivative degree must be 0, 1 or 2, got {q!r}")


def dump_operators(complex_: DeRhamComplex) -> str:
    """Coordinate-triplet text of G, C, D for debugging."""
    lines = []
    for name, m in (("G", complex_.G), ("C", complex_.C), ("D", complex_.D)):
        c = m.tocoo()
        lines.append(f"# {name} {m.shape[0]} {m.shape[1]} {m.nnz}")
        order = np.lexsort((c.col, c.row))
        lines.extend(f"{r} {k} {v}" for r, k, v in zip(c.row[order], c.col[order], c.data[order]))
    return "\n".join(lines) + "\n"
