"""Hadamard shape derivatives of simple eigenvalues and their validation.

For a simple eigenpair normalized in the mass inner product, the
derivative along a vertex field ``psi`` is a weighted stiffness term plus a
weighted mass term, with the weights from
:func:`derham_shape.transform.coefficient_derivative`:

    laplace       (G u)^T M1(Deps) (G u)        - lam u^T M0(Dnu) u
    maxwell       (C E)^T M2(Dmu_inv) (C E)     - lam E^T M1(Deps) E
    laplace-dual  w^T M0(nu^2 Dnu_inv) w        + lam H^T M1(Deps) H,
                  with w = A0^* H = M0^{-1} G^T M1 H
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import CoefficientSet, mass_matrix, stiffness_matrix
from .derham import DeRhamComplex, build_complex
from .eigsolve import (
    GAP_TOL,
    ZERO_TOL,
    EigenPair,
    EigenResult,
    laplace_spectrum,
    maxwell_spectrum,
    vector_laplacian_spectrum,
)
from .errors import MultiplicityError, NormalizationError, TrackingError, UsageError, VerificationFailure
from .mesh import BoundaryPartition
from .transform import VertexField, coefficient_derivative, make_map, symtr, transform_coefficients

PROBLEMS = ("laplace", "laplace-dual", "maxwell", "vector-laplacian")
NORM_TOL = 1e-10
EQUIV_TOL = 1e-10


@dataclass
class ShapeDerivativeReport:
    problem: str
    lam: float
    dlambda: float
    stiffness_term: float
    mass_term: float
    normalization_residual: float
    fd_table: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def _embed(n: int, free: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros(n)
    out[free] = x
    return out


def _check_pair(pair: EigenPair, mass, what: str) -> float:
    if pair.multiplicity != 1:
        raise MultiplicityError(
            f"eigenvalue {pair.value:.12g} has multiplicity {pair.multiplicity}; "
            "shape derivatives are only defined for simple eigenvalues")
    resid = abs(float(pair.vector @ (mass @ pair.vector)) - 1.0)
    if resid > NORM_TOL:
        raise NormalizationError(f"{what} is not normalized (|x^T M x - 1| = {resid:.3e})")
    return resid


def _is_identity(coeffs: CoefficientSet) -> bool:
    eye = np.eye(3)
    return (np.allclose(coeffs.eps, eye, rtol=0, atol=1e-14)
            and np.allclose(coeffs.mu, eye, rtol=0, atol=1e-14)
            and np.allclose(coeffs.nu, 1.0, rtol=0, atol=1e-14))


def hadamard_laplace_primal(complex_: DeRhamComplex, coeffs: CoefficientSet, pair: EigenPair,
                            psi: VertexField, **material) -> ShapeDerivativeReport:
    mesh = complex_.mesh
    f0 = complex_.free(0)
    M0 = mass_matrix(mesh, 0, coeffs.nu)[f0][:, f0]
    resid = _check_pair(pair, M0, "u")
    lam = pair.value
    w = coefficient_derivative(coeffs, psi, **material)
    u = _embed(mesh.n_vertices, f0, pair.vector)
    grad_u = complex_.derivative(0) @ u
    stiff = float(grad_u @ (mass_matrix(mesh, 1, w.Deps, signed=True) @ grad_u))
    mass = -lam * float(u @ (mass_matrix(mesh, 0, w.Dnu, signed=True) @ u))
    rep = ShapeDerivativeReport("laplace", lam, stiff + mass, stiff, mass, resid)
    if _is_identity(coeffs) and not material:
        S = symtr(psi.jacobian)
        h_star = grad_u / math.sqrt(lam)
        ratio = (-float(h_star @ (mass_matrix(mesh, 1, S, signed=True) @ h_star))
                 - float(u @ (mass_matrix(mesh, 0, psi.divergence, signed=True) @ u)))
        _agree(rep, lam * ratio)
    return rep


def hadamard_maxwell(complex_: DeRhamComplex, coeffs: CoefficientSet, pair: EigenPair,
                     psi: VertexField, **material) -> ShapeDerivativeReport:
    mesh = complex_.mesh
    f1 = complex_.free(1)
    M1 = mass_matrix(mesh, 1, coeffs.eps)
    resid = _check_pair(pair, M1[f1][:, f1], "E")
    lam = pair.value
    w = coefficient_derivative(coeffs, psi, **material)
    E = _embed(mesh.n_edges, f1, pair.vector)
    curl_E = complex_.derivative(1) @ E
    stiff = float(curl_E @ (mass_matrix(mesh, 2, w.Dmu_inv, signed=True) @ curl_E))
    mass = -lam * float(E @ (mass_matrix(mesh, 1, w.Deps, signed=True) @ E))
    rep = ShapeDerivativeReport("maxwell", lam, stiff + mass, stiff, mass, resid)
    if _is_identity(coeffs) and not material:
        S = symtr(psi.jacobian)
        e_star = curl_E / math.sqrt(lam)
        ratio = (float(e_star @ (mass_matrix(mesh, 2, S, signed=True) @ e_star))
                 + float(E @ (mass_matrix(mesh, 1, S, signed=True) @ E)))
        _agree(rep, lam * ratio)
    return rep


def hadamard_laplace_dual(complex_: DeRhamComplex, coeffs: CoefficientSet, pair: EigenPair,
                          psi: VertexField, **material) -> ShapeDerivativeReport:
    """Derivative of the Laplace eigenvalue from a dual (1-form) eigenvector ``H``."""
    mesh = complex_.mesh
    f0, f1 = complex_.free(0), complex_.free(1)
    M1 = mass_matrix(mesh, 1, coeffs.eps)
    resid = _check_pair(pair, M1[f1][:, f1], "H")
    lam = pair.value
    w = coefficient_derivative(coeffs, psi, **material)
    H = _embed(mesh.n_edges, f1, pair.vector)
    G = complex_.derivative(0)
    M0f = mass_matrix(mesh, 0, coeffs.nu)[f0][:, f0].tocsc()
    adj = _embed(mesh.n_vertices, f0, spla.spsolve(M0f, (G.T @ (M1 @ H))[f0]))
    weight = coeffs.nu**2 * w.Dnu_inv
    stiff = float(adj @ (mass_matrix(mesh, 0, weight, signed=True) @ adj))
    mass = lam * float(H @ (mass_matrix(mesh, 1, w.Deps, signed=True) @ H))
    rep = ShapeDerivativeReport("laplace-dual", lam, stiff + mass, stiff, mass, resid)
    if _is_identity(coeffs) and not material:
        S = symtr(psi.jacobian)
        u_star = adj / math.sqrt(lam)
        ratio = (-float(u_star @ (mass_matrix(mesh, 0, psi.divergence, signed=True) @ u_star))
                 - float(H @ (mass_matrix(mesh, 1, S, signed=True) @ H)))
        _agree(rep, lam * ratio)
    return rep


def _agree(rep: ShapeDerivativeReport, alt: float) -> None:
    dev = abs(alt - rep.dlambda)
    rep.extra["symtr_form"] = alt
    rep.extra["symtr_deviation"] = dev
    if dev > 1e-9 * max(abs(rep.lam), abs(rep.dlambda)):
        raise VerificationFailure(
            f"{rep.problem}: identity-coefficient form {alt!r} disagrees with {rep.dlambda!r}")


HADAMARD = {
    "laplace": hadamard_laplace_primal,
    "laplace-dual": hadamard_laplace_dual,
    "maxwell": hadamard_maxwell,
}


# -- Hellmann-Feynman --------------------------------------------------------

def derivative_pencil(problem: str, complex_: DeRhamComplex, coeffs: CoefficientSet,
                      psi: VertexField):
    """Assembled (dK, dM) on the full DOF set for the primal pencils."""
    w = coefficient_derivative(coeffs, psi)
    mesh = complex_.mesh
    if problem == "laplace":
        return (stiffness_matrix(complex_, 0, w.Deps, signed=True),
                mass_matrix(mesh, 0, w.Dnu, signed=True))
    if problem == "maxwell":
        return (stiffness_matrix(complex_, 1, w.Dmu_inv, signed=True),
                mass_matrix(mesh, 1, w.Deps, signed=True))
    raise UsageError(f"no primal derivative pencil for {problem!r}")


def hellmann_feynman_value(problem: str, complex_: DeRhamComplex, coeffs: CoefficientSet,
                           pair: EigenPair, psi: VertexField) -> float:
    """``x^T (dK - lam dM) x`` from the derivative of the assembled pencil.

    The dual Laplace pencil is ``(M1 G M0^{-1} G^T M1, M1)``; its derivative
    is expanded by the product rule and applied to ``x`` directly.
    """
    mesh = complex_.mesh
    lam = pair.value
    if problem in ("laplace", "maxwell"):
        q = 0 if problem == "laplace" else 1
        free = complex_.free(q)
        x = _embed(mesh.n_simplices(q), free, pair.vector)
        dK, dM = derivative_pencil(problem, complex_, coeffs, psi)
        return float(x @ (dK @ x) - lam * (x @ (dM @ x)))
    if problem == "laplace-dual":
        w = coefficient_derivative(coeffs, psi)
        f0, f1 = complex_.free(0), complex_.free(1)
        H = _embed(mesh.n_edges, f1, pair.vector)
        G = complex_.derivative(0)
        M1 = mass_matrix(mesh, 1, coeffs.eps)
        dM1 = mass_matrix(mesh, 1, w.Deps, signed=True)
        dM0 = mass_matrix(mesh, 0, w.Dnu, signed=True)
        M0f = mass_matrix(mesh, 0, coeffs.nu)[f0][:, f0].tocsc()
        a = _embed(mesh.n_vertices, f0, spla.spsolve(M0f, (G.T @ (M1 @ H))[f0]))
        b = _embed(mesh.n_vertices, f0, spla.spsolve(M0f, (G.T @ (dM1 @ H))[f0]))
        # H^T dK H = 2 H^T M1 G M0^{-1} G^T dM1 H - a^T dM0 a
        hk =2.0 * float((M1 @ H) @ (G @ b)) - float(a @ (dM0 @ a))
        return hk - lam * float(H @ (dM1 @ H))
    raise UsageError(f"unknown problem {problem!r}")


def hellmann_feynman_check(problem: str, complex_: DeRhamComplex, coeffs: CoefficientSet,
                           pair: EigenPair, psi: VertexField) -> float:
    """|Hadamard formula - x^T (dK - lam dM) x|."""
    had = HADAMARD[problem](complex_, coeffs, pair, psi).dlambda
    return abs(had - hellmann_feynman_value(problem, complex_, coeffs, pair, psi))


# -- finite differences ---------------------------------------------------------

def _spectrum(problem: str, complex_: DeRhamComplex, coeffs: CoefficientSet, rho: float,
              zero_tol: float, gap_tol: float) -> EigenResult:
    if problem in ("laplace", "laplace-dual"):
        return laplace_spectrum(complex_, coeffs, "primal", zero_tol, gap_tol)
    if problem == "maxwell":
        return maxwell_spectrum(complex_, coeffs, zero_tol, gap_tol)
    raise UsageError(f"unknown problem {problem!r}")


def _level(problem: str) -> int:
    return 1 if problem == "maxwell" else 0


@dataclass
class FDRow:
    t: float
    lambda_plus: float
    lambda_minus: float
    fd: float
    formula: float
    abs_err: float
    equivalence_discrepancy: float


@dataclass
class FDReport:
    problem: str
    eigen_index: int
    lam: float
    formula: float
    rows: list
    error_ratios: list
    observed_order: float | None
    extrapolated: float | None
    extrapolated_rel_err: float | None
    equivalence_max: float
    branch: str | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def csv(self) -> str:
        lines = ["t,lambda_t,fd,formula,abs_err"]
        for r in self.rows:
            lines.append(f"{r.t!r},{r.lambda_plus!r},{r.fd!r},{r.formula!r},{r.abs_err!r}")
        return "\n".join(lines) + "\n"


def spectral_discrepancy(a: EigenResult, b: EigenResult, count: int = 10) -> float:
    va, vb = a.flat_values()[:count], b.flat_values()[:count]
    n = min(len(va), len(vb))
    if n == 0:
        return 0.0
    return float(np.max(np.abs(va[:n] - vb[:n]) / np.abs(va[:n])))


def _track(res: EigenResult, ref_vec: np.ndarray, ref_mass, gap_tol: float, lam0: float) -> float:
    """Value whose eigenvector overlaps most with ``ref_vec`` in the reference mass."""
    best, best_val, best_n = -1.0, None, None
    target = ref_mass @ ref_vec
    for n, X in enumerate(res.vectors):
        ov = float(np.max(np.abs(X.T @ target)))
        if ov > best:
            best, best_val, best_n = ov, float(res.values[n]), n
    if res.multiplicities[best_n] != 1:
        raise TrackingError(f"tracked eigenvalue near {lam0:.12g} merged into a cluster")
    neighbours = [v for i, v in enumerate(res.values) if i != best_n]
    if any(abs(v - best_val) <= gap_tol * abs(best_val) for v in neighbours):
        raise TrackingError(f"tracked eigenvalue {best_val:.12g} collides with a neighbour")
    return best_val


def fd_check(problem: str, complex_: DeRhamComplex, coeffs: CoefficientSet, psi: VertexField,
             t_list, track: int = 0, *, rho: float = 1.0, zero_tol: float = ZERO_TOL,
             gap_tol: float = GAP_TOL, equiv_tol: float = EQUIV_TOL, equiv_count: int = 10,
             workers: int | None = None) -> FDReport:
    """Central differences of a tracked simple eigenvalue against its Hadamard formula.

    Each perturbed eigenvalue is computed twice: on the deformed mesh with
    the original coefficients and on the reference mesh with transformed
    coefficients; the two spectra must agree to ``equiv_tol``.
    """
    if problem not in PROBLEMS:
        raise UsageError(f"problem must be one of {PROBLEMS}, got {problem!r}")
    t_list = [float(t) for t in t_list]
    if not t_list or any(not t > 0 for t in t_list):
        raise UsageError("t values must be strictly positive")
    branch = None
    scale = 1.0
    if problem == "vector-laplacian":
        merged = vector_laplacian_spectrum(complex_, coeffs, rho, zero_tol, gap_tol)
        if track >= len(merged.values):
            raise UsageError(f"eigen index {track} out of range")
        branch = merged.branches[track]
        if branch not in ("laplace", "maxwell"):
            raise MultiplicityError(f"vector Laplacian value {merged.values[track]:.12g} is shared by both branches")
        target = merged.values[track]
        base_problem = branch
        scale = rho if branch == "laplace" else 1.0
        base = _spectrum(base_problem, complex_, coeffs, rho, zero_tol, gap_tol)
        track = int(np.argmin(np.abs(scale * base.values - target)))
    else:
        base_problem = problem
        base = _spectrum(problem, complex_, coeffs, rho, zero_tol, gap_tol)
    pair = base.pair(track)
    if pair.multiplicity != 1:
        raise MultiplicityError(
            f"eigenvalue {pair.value:.12g} has multiplicity {pair.multiplicity}")
    if problem == "laplace-dual":
        from .eigsolve import dual_eigenvector

        H = dual_eigenvector(complex_, coeffs, 0, pair, zero_tol)
        formula = hadamard_laplace_dual(complex_, coeffs,
                                        EigenPair(pair.value, H, 1, 1), psi).dlambda
    else:
        formula = HADAMARD[base_problem](complex_, coeffs, pair, psi).dlambda
    level = _level(base_problem)
    mesh = complex_.mesh
    free = complex_.free(level)
    ref_mass = mass_matrix(mesh, level, coeffs.nu if level == 0 else coeffs.eps)[free][:, free]

    def solve_at(s: float):
        phi = make_map(mesh, psi, s)
        deformed = phi.deformed
        cx_def = build_complex(deformed, BoundaryPartition(deformed, complex_.partition.gamma_t))
        on_deformed = _spectrum(base_problem, cx_def, coeffs, rho, zero_tol, gap_tol)
        on_reference = _spectrum(base_problem, complex_, transform_coefficients(coeffs, phi),
                                 rho, zero_tol, gap_tol)
        disc = spectral_discrepancy(on_deformed, on_reference, equiv_count)
        if disc > equiv_tol:
            raise VerificationFailure(
                f"t={s:g}: deformed-mesh and transformed-coefficient spectra differ by {disc:.3e}")
        return _track(on_reference, pair.vector, ref_mass, gap_tol, pair.value), disc

    steps = [s for t in t_list for s in (t, -t)]
    n_workers = workers or int(os.environ.get("DERHAM_SHAPE_THREADS", "1"))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            solved = list(pool.map(solve_at, steps))
    else:
        solved = [solve_at(s) for s in steps]

    formula *= scale
    rows = []
    for i, t in enumerate(t_list):
        (lp, dp), (lm, dm) = solved[2 * i], solved[2 * i + 1]
        fd = scale * (lp - lm) / (2 * t)
        rows.append(FDRow(t, scale * lp, scale * lm, fd, formula, abs(fd - formula), max(dp, dm)))

    ratios = [rows[i].abs_err / rows[i + 1].abs_err if rows[i + 1].abs_err > 0 else math.inf
              for i in range(len(rows) - 1)]
    order = None
    errs = np.array([r.abs_err for r in rows])
    ts = np.array([r.t for r in rows])
    if len(rows) >= 2 and np.all(errs > 0):
        order = float(np.polyfit(np.log(ts), np.log(errs), 1)[0])
    extrap = rel = None
    if len(rows) >= 2:
        # Richardson on the two smallest steps, assuming an even error expansion
        a, b = sorted(rows, key=lambda r: r.t)[:2]
        q = (b.t / a.t) ** 2
        extrap = (q * a.fd - b.fd) / (q - 1)
        lam_s = abs(scale * pair.value)
        denom = abs(formula) if abs(formula) > zero_tol * lam_s else lam_s
        rel = abs(extrap - formula) / denom
    return FDReport(problem, track, scale * pair.value, formula, rows, ratios, order, extrap, rel,
                    max(r.equivalence_discrepancy for r in rows), branch)
