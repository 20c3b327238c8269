"""Weighted Whitney mass matrices and stiffness matrices.

Weights are constant on each tet: a scalar for 0- and 3-forms, a symmetric
3x3 matrix for 1- and 2-forms.  Level-2 stiffness uses the 2-form mass with
weight ``mu^{-1}``; a 3-form mass with weight ``kappa^{-1}`` gives the
``L^2_kappa`` norm of the level-3 space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .derham import DeRhamComplex
from .errors import AssemblyError, UsageError
from .mesh import TetMesh

SYM_TOL = 1e-12


def _as_scalar_field(w, nt: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 0:
        return np.full(nt, float(w))
    if w.shape != (nt,):
        raise UsageError(f"scalar weight must have shape ({nt},), got {w.shape}")
    return np.ascontiguousarray(w)


def _as_tensor_field(w, nt: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape == (3, 3):
        return np.ascontiguousarray(np.broadcast_to(w, (nt, 3, 3)))
    if w.shape in ((), (nt,)):
        # isotropic weight
        return np.broadcast_to(w, (nt,)).reshape(nt, 1, 1) * np.eye(3)
    if w.shape != (nt, 3, 3):
        raise UsageError(f"tensor weight must have shape ({nt}, 3, 3), got {w.shape}")
    return np.ascontiguousarray(w)


def check_spd(w: np.ndarray, what: str = "weight") -> None:
    """Raise :class:`AssemblyError` naming the first tet whose weight is not admissible."""
    if w.ndim == 1:
        bad = np.flatnonzero(~(w > 0))
        if bad.size:
            raise AssemblyError(f"tet {int(bad[0])}: {what} is not positive ({w[bad[0]]!r})")
        return
    scale = np.maximum(1.0, np.abs(w).max(axis=(1, 2)))
    asym = np.abs(w - np.transpose(w, (0, 2, 1))).max(axis=(1, 2))
    bad = np.flatnonzero(~(asym <= SYM_TOL * scale))
    if bad.size:
        raise AssemblyError(f"tet {int(bad[0])}: {what} is not symmetric")
    lam_min = np.linalg.eigvalsh(w)[:, 0]
    bad = np.flatnonzero(~(lam_min > 0))
    if bad.size:
        raise AssemblyError(f"tet {int(bad[0])}: {what} is not positive definite")


def symmetrize(w: np.ndarray) -> np.ndarray:
    return 0.5 * (w + np.swapaxes(w, -1, -2))


@dataclass(frozen=True)
class CoefficientSet:
    """Per-tet material weights: ``eps``/``mu`` (T, 3, 3), ``nu``/``kappa`` (T,)."""

    eps: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        sizes = [len(a) for a, nd in ((self.eps, 3), (self.mu, 3), (self.nu, 1), (self.kappa, 1))
                 if np.ndim(a) == nd]
        if not sizes:
            raise UsageError("cannot infer the number of tets from broadcast coefficients")
        nt = sizes[0]
        for name, conv in (("eps", _as_tensor_field), ("mu", _as_tensor_field),
                           ("nu", _as_scalar_field), ("kappa", _as_scalar_field)):
            arr = conv(getattr(self, name), nt)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def n_tets(self) -> int:
        return len(self.nu)

    def validate(self) -> None:
        check_spd(self.eps, "eps")
        check_spd(self.mu, "mu")
        check_spd(self.nu, "nu")
        check_spd(self.kappa, "kappa")

    @property
    def mu_inv(self) -> np.ndarray:
        return symmetrize(np.linalg.inv(self.mu))

    @property
    def eps_inv(self) -> np.ndarray:
        return symmetrize(np.linalg.inv(self.eps))

    @classmethod
    def identity(cls, n_tets: int) -> "CoefficientSet":
        return cls.constant(n_tets)

    @classmethod
    def constant(cls, n_tets: int, eps=None, mu=None, nu=1.0, kappa=1.0) -> "CoefficientSet":
        eye = np.eye(3)
        eps = eye if eps is None else eps
        mu = eye if mu is None else mu
        if np.ndim(eps) == 0:
            eps = float(eps) * eye
        if np.ndim(mu) == 0:
            mu = float(mu) * eye
        return cls(
            eps=np.broadcast_to(eps, (n_tets, 3, 3)).copy(),
            mu=np.broadcast_to(mu, (n_tets, 3, 3)).copy(),
            nu=np.full(n_tets, float(nu)),
            kappa=np.full(n_tets, float(kappa)),
        )

    @classmethod
    def random(cls, n_tets: int, rng: np.random.Generator, spread: float = 0.5) -> "CoefficientSet":
        """Random admissible coefficients with eigenvalues in roughly [1-spread, 1+spread]."""
        def spd():
            a = rng.standard_normal((n_tets, 3, 3))
            q, _ = np.linalg.qr(a)
            d = 1.0 + spread * rng.uniform(-1, 1, (n_tets, 3))
            return symmetrize(np.einsum("tij,tj,tkj->tik", q, d, q))

        return cls(
            eps=spd(),
            mu=spd(),
            nu=1.0 + spread * rng.uniform(-1, 1, n_tets),
            kappa=1.0 + spread * rng.uniform(-1, 1, n_tets),
        )

    def scaled(self, eps=1.0, mu=1.0, nu=1.0, kappa=1.0) -> "CoefficientSet":
        return CoefficientSet(self.eps * eps, self.mu * mu, self.nu * nu, self.kappa * kappa)

    def to_json(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "mu": self.mu.tolist(),
            "nu": self.nu.tolist(),
            "kappa": self.kappa.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict, n_tets: int) -> "CoefficientSet":
        def get(key, default):
            return np.asarray(data.get(key, default), dtype=np.float64)

        base = cls.identity(n_tets)
        return cls(
            eps=_as_tensor_field(get("eps", base.eps), n_tets),
            mu=_as_tensor_field(get("mu", base.mu), n_tets),
            nu=_as_scalar_field(get("nu", base.nu), n_tets),
            kappa=_as_scalar_field(get("kappa", base.kappa), n_tets),
        )


def local_mass(mesh: TetMesh, q: int, weight, *, signed: bool = False, backend=None) -> np.ndarray:
    """Per-tet local mass matrices of shape (T, k, k), k = number of q-subsimplices."""
    nt = mesh.n_tets
    k = _kernels.get_backend(backend)
    vol = np.ascontiguousarray(mesh.volumes)
    if q in (0, 3):
        w = _as_scalar_field(weight, nt)
        if not signed:
            check_spd(w)
        return k.local_mass_0(vol, w) if q == 0 else k.local_mass_3(vol, w)
    if q in (1, 2):
        W = _as_tensor_field(weight, nt)
        if not signed:
            check_spd(W)
        grads = np.ascontiguousarray(mesh.barycentric_gradients)
        if q == 1:
            return k.local_mass_1(grads, vol, W, np.ascontiguousarray(mesh.tet_edge_local))
        return k.local_mass_2(grads, vol, W, np.ascontiguousarray(mesh.tet_face_local))
    raise UsageError(f"form degree must be 0..3, got {q!r}")


def local_dofs(mesh: TetMesh, q: int) -> np.ndarray:
    if q == 0:
        return mesh.tets
    if q == 1:
        return mesh.tet_edges
    if q == 2:
        return mesh.tet_faces
    return np.arange(mesh.n_tets)[:, None]


def mass_matrix(mesh: TetMesh, q: int, weight, *, signed: bool = False, backend=None) -> sp.csr_matrix:
    """Global Whitney q-form mass matrix for a per-tet constant weight.

    ``signed=True`` skips the positivity check, for indefinite derivative
    weights.
    """
    loc = local_mass(mesh, q, weight, signed=signed, backend=backend)
    dofs = local_dofs(mesh, q)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = mesh.n_simplices(q)
    return sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_matrix(complex_: DeRhamComplex, level: int, weight, *, signed: bool = False,
                     backend=None) -> sp.csr_matrix:
    """``d_l^T M_{l+1}(weight) d_l`` on the full DOF set."""
    if level not in (0, 1, 2):
        raise UsageError(f"stiffness level must be 0, 1 or 2, got {level!r}")
    d = complex_.derivative(level)
    m = mass_matrix(complex_.mesh, level + 1, weight, signed=signed, backend=backend)
    return (d.T @ m @ d).tocsr()
