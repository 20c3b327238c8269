"""Piecewise-affine deformations, discrete pullbacks and transformed coefficients.

A deformation moves the mesh vertices and keeps the connectivity, so its
Jacobian ``J`` is constant on each tet.  With Whitney forms the pullback of
DOF vectors is the identity, and the weighted mass matrices transform by

    q=0: w -> det(J) w            q=1: W -> det(J) J^{-1} W J^{-T}
    q=2: W -> det(J)^{-1} J^T W J  q=3: w -> w / det(J)

Coefficients are material: they move with the mesh, so their own
directional derivatives vanish unless supplied explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .assembly import CoefficientSet, symmetrize
from .errors import AdmissibilityError, ConnectivityError, UsageError
from .mesh import TetMesh


def _tet_jacobians(mesh: TetMesh, values: np.ndarray) -> np.ndarray:
    """Per-tet gradient of the P1 interpolant of vertex vectors: J[a, b] = d v_a / d x_b."""
    return np.einsum("tia,tib->tab", values[mesh.tets], mesh.barycentric_gradients)


class VertexField:
    """Vertex-based vector field, affine on each tet."""

    def __init__(self, mesh: TetMesh, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (mesh.n_vertices, 3):
            raise UsageError(f"vertex field must have shape ({mesh.n_vertices}, 3), got {values.shape}")
        if not np.isfinite(values).all():
            raise UsageError("vertex field has non-finite entries")
        values = values.copy()
        values.setflags(write=False)
        self.mesh = mesh
        self.values = values

    @cached_property
    def jacobian(self) -> np.ndarray:
        return _tet_jacobians(self.mesh, self.values)

    @cached_property
    def divergence(self) -> np.ndarray:
        return np.trace(self.jacobian, axis1=1, axis2=2)

    def __add__(self, other: "VertexField") -> "VertexField":
        return VertexField(self.mesh, self.values + other.values)

    def __mul__(self, a: float) -> "VertexField":
        return VertexField(self.mesh, a * self.values)

    __rmul__ = __mul__

    # presets ---------------------------------------------------------------
    @classmethod
    def dilation(cls, mesh: TetMesh) -> "VertexField":
        return cls(mesh, mesh.vertices)

    @classmethod
    def translation(cls, mesh: TetMesh, direction=(1.0, 0.0, 0.0)) -> "VertexField":
        return cls(mesh, np.broadcast_to(np.asarray(direction, float), (mesh.n_vertices, 3)))

    @classmethod
    def shear(cls, mesh: TetMesh) -> "VertexField":
        v = np.zeros((mesh.n_vertices, 3))
        v[:, 0] = mesh.vertices[:, 1]
        return cls(mesh, v)

    @classmethod
    def stretch(cls, mesh: TetMesh, axis: int = 0) -> "VertexField":
        v = np.zeros((mesh.n_vertices, 3))
        v[:, axis] = mesh.vertices[:, axis]
        return cls(mesh, v)

    @classmethod
    def random_smooth(cls, mesh: TetMesh, seed: int = 0, amplitude: float = 1.0) -> "VertexField":
        """Random quadratic polynomial field, normalized to max |J_psi| ~ amplitude."""
        rng = np.random.default_rng(seed)
        x = mesh.vertices
        lin = rng.standard_normal((3, 3))
        quad = rng.standard_normal((3, 3, 3))
        v = x @ lin.T + np.einsum("kij,ni,nj->nk", quad, x, x) + rng.standard_normal(3)
        field = cls(mesh, v)
        scale = np.abs(field.jacobian).max()
        return cls(mesh, amplitude * v / scale)

    @classmethod
    def from_json(cls, mesh: TetMesh, data: dict) -> "VertexField":
        if "psi" not in data:
            raise UsageError("vertex-field file needs a 'psi' array")
        return cls(mesh, np.asarray(data["psi"], dtype=np.float64))

    def to_json(self) -> dict:
        return {"psi": self.values.tolist()}


class PwAffineMap:
    """Vertex-displacement map from ``reference`` onto a mesh with the same connectivity."""

    def __init__(self, reference: TetMesh, displaced_vertices):
        displaced = np.asarray(displaced_vertices, dtype=np.float64)
        if displaced.shape != reference.vertices.shape:
            raise ConnectivityError(
                f"displaced vertices have shape {displaced.shape}, "
                f"reference mesh has {reference.vertices.shape}")
        displaced = displaced.copy()
        displaced.setflags(write=False)
        self.reference = reference
        self.displaced_vertices = displaced
        self.J = _tet_jacobians(reference, displaced)
        self.detJ = np.linalg.det(self.J)
        bad = np.flatnonzero(~(self.detJ > 0))
        if bad.size:
            worst = int(np.argmin(self.detJ))
            raise AdmissibilityError(
                f"map is not admissible: {bad.size} tets with det J <= 0, "
                f"worst tet {worst} (det J = {self.detJ[worst]:.3e})")

    @classmethod
    def from_meshes(cls, reference: TetMesh, deformed: TetMesh) -> "PwAffineMap":
        if not np.array_equal(reference.tets, deformed.tets) or \
                reference.n_vertices != deformed.n_vertices:
            raise ConnectivityError("reference and deformed meshes do not share connectivity")
        return cls(reference, deformed.vertices)

    @classmethod
    def identity(cls, mesh: TetMesh) -> "PwAffineMap":
        return cls(mesh, mesh.vertices)

    @cached_property
    def adjJ(self) -> np.ndarray:
        """Adjugate ``det(J) J^{-1}``."""
        return self.detJ[:, None, None] * self.Jinv

    @cached_property
    def Jinv(self) -> np.ndarray:
        return np.linalg.inv(self.J)

    @cached_property
    def deformed(self) -> TetMesh:
        return self.reference.with_vertices(self.displaced_vertices)

    def inverse(self) -> "PwAffineMap":
        return PwAffineMap(self.deformed, self.reference.vertices)

    def then(self, other: "PwAffineMap") -> "PwAffineMap":
        """Composition ``other o self``; ``other`` must start on ``self.deformed``."""
        if not np.array_equal(other.reference.tets, self.reference.tets) or \
                not np.allclose(other.reference.vertices, self.displaced_vertices, rtol=0, atol=1e-14):
            raise ConnectivityError("composed maps do not chain")
        return PwAffineMap(self.reference, other.displaced_vertices)


def admissible_t_bound(psi: VertexField, sign: float = 1.0) -> np.ndarray:
    """Per-tet smallest |t| with det(I + t J_psi) = 0 in the direction ``sign``.

    ``det(I + t J) = prod(1 + t m_k)`` over eigenvalues ``m_k``; only real
    eigenvalues with ``-1/m_k`` on the requested side contribute.
    """
    eig = np.linalg.eigvals(psi.jacobian)
    real = np.abs(eig.imag) <= 1e-12 * np.maximum(1.0, np.abs(eig))
    with np.errstate(divide="ignore"):
        roots = np.where(real & (eig.real != 0), -1.0 / eig.real, np.inf)
    roots = np.where(np.sign(roots) == np.sign(sign), np.abs(roots), np.inf)
    return roots.min(axis=1)


def make_map(mesh: TetMesh, psi: VertexField, t: float) -> PwAffineMap:
    """``Phi_t = id + t psi`` on the vertices."""
    if psi.mesh is not mesh and not np.array_equal(psi.mesh.tets, mesh.tets):
        raise ConnectivityError("vertex field lives on a different mesh")
    J = np.eye(3) + t * psi.jacobian
    det = np.linalg.det(J)
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        worst = int(np.argmin(det))
        bound = float(admissible_t_bound(psi, np.sign(t) or 1.0).min())
        raise AdmissibilityError(
            f"t = {t:g} is not admissible: tet {worst} has det J = {det[worst]:.3e}; "
            f"largest admissible |t| is about {bound:.6g}")
    return PwAffineMap(mesh, mesh.vertices + t * psi.values)


def pullback_dof_map(q: int, map_: PwAffineMap) -> sp.csr_matrix:
    """Matrix sending deformed-mesh Whitney q-form DOFs to reference-mesh DOFs.

    Whitney DOFs are integrals over simplices and a vertex map carries each
    simplex onto its image, so this is the identity on the shared enumeration.
    """
    if q not in (0, 1, 2, 3):
        raise UsageError(f"form degree must be 0..3, got {q!r}")
    ref = map_.reference
    deformed = map_.deformed
    for name in ("edges", "faces"):
        if not np.array_equal(getattr(ref, name), getattr(deformed, name)):
            raise ConnectivityError(f"{name} enumeration differs between meshes")
    return sp.identity(ref.n_simplices(q), dtype=np.float64, format="csr")


def pullback_weight(q: int, weight, map_: PwAffineMap) -> np.ndarray:
    """Reference-mesh weight whose q-form mass equals that of ``weight`` on the deformed mesh."""
    det = map_.detJ
    if q == 0:
        return det * np.asarray(weight, float)
    if q == 3:
        return np.asarray(weight, float) / det
    W = np.broadcast_to(np.asarray(weight, float), (len(det), 3, 3))
    if q == 1:
        return symmetrize(det[:, None, None] * map_.Jinv @ W @ np.swapaxes(map_.Jinv, 1, 2))
    if q == 2:
        return symmetrize((1.0 / det)[:, None, None] * np.swapaxes(map_.J, 1, 2) @ W @ map_.J)
    raise UsageError(f"form degree must be 0..3, got {q!r}")


def transform_coefficients(coeffs: CoefficientSet, map_: PwAffineMap) -> CoefficientSet:
    """Pull coefficients given on the deformed mesh back to the reference mesh.

    ``eps``/``mu`` -> det(J) J^{-1} (.) J^{-T};  ``nu``/``kappa`` -> det(J) (.).
    """
    return CoefficientSet(
        eps=pullback_weight(1, coeffs.eps, map_),
        mu=pullback_weight(1, coeffs.mu, map_),
        nu=pullback_weight(0, coeffs.nu, map_),
        kappa=pullback_weight(0, coeffs.kappa, map_),
    )


@dataclass(frozen=True)
class DerivativeWeights:
    """Per-tet directional derivatives of the transformed coefficients at Phi = id.

    Indefinite in general; assemble with ``signed=True``.
    """

    Deps: np.ndarray
    Dmu: np.ndarray
    Dmu_inv: np.ndarray
    Dnu: np.ndarray
    Dnu_inv: np.ndarray
    Dkappa: np.ndarray


def _matrix_weight_derivative(A: np.ndarray, Jpsi: np.ndarray, div: np.ndarray, dA=None):
    # d/dt det(I+tJ) (I+tJ)^{-1} A (I+tJ)^{-T} at t=0
    JA = Jpsi @ A
    out = div[:, None, None] * A - (JA + np.swapaxes(JA, 1, 2))
    if dA is not None:
        out = out + dA
    return symmetrize(out)


def coefficient_derivative(coeffs: CoefficientSet, psi: VertexField, *, d_eps=None, d_mu=None,
                           d_nu=None, d_kappa=None) -> DerivativeWeights:
    """Derivative weights along ``psi``.

    ``d_eps`` ... ``d_kappa`` are the per-tet derivatives of the coefficients
    themselves in the direction of the deformation; they default to zero
    (material coefficients).
    """
    Jpsi, div = psi.jacobian, psi.divergence
    Deps = _matrix_weight_derivative(coeffs.eps, Jpsi, div, d_eps)
    Dmu = _matrix_weight_derivative(coeffs.mu, Jpsi, div, d_mu)
    mu_inv = coeffs.mu_inv
    MJ = mu_inv @ Jpsi
    Dmu_inv = -div[:, None, None] * mu_inv + (MJ + np.swapaxes(MJ, 1, 2))
    if d_mu is not None:
        Dmu_inv = Dmu_inv - mu_inv @ d_mu @ mu_inv
    Dmu_inv = symmetrize(Dmu_inv)
    nu = coeffs.nu
    Dnu = div * nu + (0.0 if d_nu is None else d_nu)
    Dnu_inv = -div / nu - (0.0 if d_nu is None else d_nu / nu**2)
    Dkappa = div * coeffs.kappa + (0.0 if d_kappa is None else d_kappa)
    return DerivativeWeights(Deps=Deps, Dmu=Dmu, Dmu_inv=Dmu_inv, Dnu=np.asarray(Dnu, float),
                             Dnu_inv=np.asarray(Dnu_inv, float), Dkappa=np.asarray(Dkappa, float))


def symtr(M: np.ndarray) -> np.ndarray:
    """``2 sym M - tr(M) I`` for a stack of 3x3 matrices."""
    tr = np.trace(M, axis1=-2, axis2=-1)
    return M + np.swapaxes(M, -1, -2) - tr[..., None, None] * np.eye(3)


def inverse_identities_check(coeffs: CoefficientSet, psi: VertexField) -> dict:
    """Max deviations of the inverse-derivative identities per tet.

    ``Dmu_inv = -mu^{-1} Dmu mu^{-1}`` and ``Dnu_inv = -nu^{-2} Dnu``.
    """
    w = coefficient_derivative(coeffs, psi)
    mu_inv = coeffs.mu_inv
    mat = w.Dmu_inv + mu_inv @ w.Dmu @ mu_inv
    scal = w.Dnu_inv + w.Dnu / coeffs.nu**2
    scale = max(1.0, float(np.abs(w.Dmu_inv).max()))
    return {
        "mu_inverse_max_dev": float(np.abs(mat).max() / scale),
        "nu_inverse_max_dev": float(np.abs(scal).max()),
        "tets": int(coeffs.n_tets),
    }
