"""Helmholtz decomposition of 1-forms and cohomology dimensions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import CoefficientSet, mass_matrix
from .derham import DeRhamComplex

RANK_TOL = 1e-10


def numerical_rank(a, tol: float = RANK_TOL) -> int:
    """Rank from a column-pivoted QR, counting |R_ii| > tol * |R_00|."""
    a = a.toarray() if hasattr(a, "toarray") else np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0
    r = sla.qr(a, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > tol * d[0]))


def _column_basis(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Linearly independent columns of ``a`` (pivoted QR selection)."""
    if a.shape[1] == 0:
        return a
    _, r, piv = sla.qr(a, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    k = int(np.count_nonzero(d > tol * d[0])) if d.size and d[0] > 0 else 0
    return a[:, np.sort(piv[:k])]


def cohomology_dim(complex_: DeRhamComplex, coeffs: CoefficientSet | None = None,
                   side: str = "t") -> int:
    """dim of the discrete harmonic 1-forms: dim ker C - rank G on free DOFs.

    The weight does not enter; ``coeffs`` is accepted for interface symmetry.
    """
    g = complex_.restricted_derivative(0, side)
    c = complex_.restricted_derivative(1, side)
    n1 = len(complex_.free(1, side))
    return n1 - numerical_rank(c) - numerical_rank(g)


@dataclass(frozen=True)
class HodgeSplit:
    x: np.ndarray
    x_grad: np.ndarray
    x_harm: np.ndarray
    x_curl: np.ndarray
    mass: object  # M_1(eps) on the free DOFs

    def norm(self, v) -> float:
        return float(np.sqrt(max(v @ (self.mass @ v), 0.0)))

    def inner(self, u, v) -> float:
        return float(u @ (self.mass @ v))

    @property
    def norms(self) -> dict:
        return {
            "x": self.norm(self.x),
            "grad": self.norm(self.x_grad),
            "harm": self.norm(self.x_harm),
            "curl": self.norm(self.x_curl),
        }

    def orthogonality(self) -> float:
        """Largest |<a, b>| / |x|^2 over the three component pairs."""
        parts = (self.x_grad, self.x_harm, self.x_curl)
        scale = self.norm(self.x) ** 2
        if scale == 0.0:
            return 0.0
        return max(abs(self.inner(parts[i], parts[j])) / scale
                   for i in range(3) for j in range(i + 1, 3))


def _project(basis: np.ndarray, M, x: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.zeros_like(x)
    MB = M @ basis
    gram = basis.T @ MB
    return basis @ sla.solve(gram, MB.T @ x, assume_a="pos")


def helmholtz_decompose(complex_: DeRhamComplex, coeffs: CoefficientSet, x: np.ndarray) -> HodgeSplit:
    """Split a free 1-form vector into gradient, harmonic and co-exact parts.

    The gradient part solves ``G^T M G p = G^T M x``; the co-exact part is
    the M-orthogonal complement of ``ker C``.
    """
    x = np.asarray(x, dtype=np.float64)
    f1 = complex_.free(1, "t")
    M = mass_matrix(complex_.mesh, 1, coeffs.eps)[f1][:, f1].tocsr()
    g = complex_.restricted_derivative(0, "t").toarray()
    c = complex_.restricted_derivative(1, "t").toarray()

    x_grad = _project(_column_basis(g), M, x)
    kernel = sla.null_space(c, rcond=RANK_TOL) if c.shape[0] else np.eye(len(f1))
    x_closed = _project(kernel, M, x)
    return HodgeSplit(x=x, x_grad=x_grad, x_harm=x_closed - x_grad, x_curl=x - x_closed, mass=M)
