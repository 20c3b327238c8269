"""Generalized symmetric eigenproblems of the discrete complex.

The reference path reduces ``K x = lam M x`` to a standard symmetric
problem through the Cholesky factor of ``M``.  A shift-invert Lanczos path
(ARPACK) is available for the lowest few values on larger meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import CoefficientSet, mass_matrix, stiffness_matrix
from .derham import DeRhamComplex
from .errors import FactorizationError, InvalidInputError, UsageError

ZERO_TOL = 1e-8
GAP_TOL = 1e-6


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    multiplicity: int = 1
    level: int = 0


@dataclass
class EigenResult:
    """Distinct positive eigenvalues with multiplicities and M-orthonormal blocks.

    ``vectors[i]`` is an (n_free, d_i) array; ``free`` maps its rows to
    global DOF indices.  ``branches`` is only set for merged spectra.
    """

    values: np.ndarray
    multiplicities: list
    vectors: list
    kernel_dim: int
    residuals: list
    free: np.ndarray | None = None
    level: int = 0
    branches: list | None = None
    all_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def residual_max(self) -> float:
        return max((float(np.max(r)) for r in self.residuals if len(r)), default=0.0)

    def flat_values(self) -> np.ndarray:
        """Positive eigenvalues repeated according to multiplicity."""
        return np.repeat(self.values, self.multiplicities)

    def pair(self, n: int, k: int = 0) -> EigenPair:
        """k-th vector of the n-th distinct value (0-based)."""
        if not 0 <= n < len(self.values):
            raise InvalidInputError(f"eigen index {n} out of range (have {len(self.values)} values)")
        return EigenPair(float(self.values[n]), self.vectors[n][:, k].copy(),
                         int(self.multiplicities[n]), self.level)

    def report(self, problem: str, count: int | None = None) -> dict:
        sl = slice(None) if count is None else slice(0, count)
        out = {
            "problem": problem,
            "values": [float(v) for v in self.values[sl]],
            "multiplicities": [int(d) for d in self.multiplicities[sl]],
            "kernel_dim": int(self.kernel_dim),
            "residual_max": float(self.residual_max),
        }
        if self.branches is not None:
            out["branches"] = list(self.branches[sl])
        return out


def group_values(vals: np.ndarray, gap_tol: float = GAP_TOL) -> list[np.ndarray]:
    """Split ascending values into clusters whose neighbours differ by <= gap_tol relative."""
    if len(vals) == 0:
        return []
    groups, start = [], 0
    for i in range(1, len(vals)):
        if vals[i] - vals[i - 1] > gap_tol * abs(vals[i]):
            groups.append(np.arange(start, i))
            start = i
    groups.append(np.arange(start, len(vals)))
    return groups


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)


def solve_gevp(K, M, free=None, zero_tol: float = ZERO_TOL, gap_tol: float = GAP_TOL,
               *, level: int = 0) -> EigenResult:
    """All eigenpairs of the pencil (K, M) restricted to ``free`` (dense path)."""
    n_all = K.shape[0]
    free = np.arange(n_all) if free is None else np.asarray(free, dtype=np.int64)
    if free.size == 0:
        return EigenResult(np.empty(0), [], [], 0, [], free=free, level=level,
                           all_values=np.empty(0))
    Kf = _dense(sp.csr_matrix(K)[free][:, free] if sp.issparse(K) else np.asarray(K)[np.ix_(free, free)])
    Mf = _dense(sp.csr_matrix(M)[free][:, free] if sp.issparse(M) else np.asarray(M)[np.ix_(free, free)])
    try:
        L = sla.cholesky(Mf, lower=True)
    except sla.LinAlgError as exc:
        raise FactorizationError("mass matrix is not positive definite on the free DOFs") from exc
    A = sla.solve_triangular(L, sla.solve_triangular(L, Kf, lower=True).T, lower=True)
    A = 0.5 * (A + A.T)
    w, Y = sla.eigh(A)
    X = sla.solve_triangular(L, Y, lower=True, trans="T")
    return _package(w, X, Kf, Mf, free, zero_tol, gap_tol, level)


def solve_gevp_shift_invert(K, M, free=None, count: int = 6, sigma: float = 0.0,
                            zero_tol: float = ZERO_TOL, gap_tol: float = GAP_TOL,
                            *, level: int = 0, tol: float = 1e-13) -> EigenResult:
    """``count`` eigenpairs nearest ``sigma`` via shift-invert Lanczos.

    ``kernel_dim`` only counts kernel vectors among the computed pairs, and the
    zero threshold is taken relative to the largest computed value.
    """
    free = np.arange(K.shape[0]) if free is None else np.asarray(free, dtype=np.int64)
    Kf = sp.csc_matrix(K)[free][:, free]
    Mf = sp.csc_matrix(M)[free][:, free]
    if count >= len(free) - 1:  # ARPACK needs k < n; tiny problems go dense
        return solve_gevp(K, M, free, zero_tol, gap_tol, level=level)
    w, X = spla.eigsh(Kf, k=count, M=Mf, sigma=sigma, which="LM", tol=tol)
    order = np.argsort(w)
    w, X = w[order], X[:, order]
    # M-orthonormalize each returned vector; ARPACK blocks are M-orthogonal already
    norms = np.sqrt(np.einsum("ij,ij->j", X, Mf @ X))
    X = X / norms
    return _package(w, X, Kf, Mf, free, zero_tol, gap_tol, level)


def _package(w, X, Kf, Mf, free, zero_tol, gap_tol, level) -> EigenResult:
    wmax = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    pos = w > zero_tol * wmax
    kernel_dim = int(np.count_nonzero(~pos))
    wp, Xp = w[pos], X[:, pos]
    R = Kf @ Xp - (Mf @ Xp) * wp
    rnorm = np.sqrt(np.abs(np.einsum("ij,ij->j", R, R)))
    mnorm = np.sqrt(np.einsum("ij,ij->j", Xp, Mf @ Xp))
    res = rnorm / mnorm
    values, mults, vecs, resid = [], [], [], []
    for g in group_values(wp, gap_tol):
        values.append(float(np.mean(wp[g])) if len(g) > 1 else float(wp[g[0]]))
        mults.append(len(g))
        vecs.append(Xp[:, g])
        resid.append(res[g])
    return EigenResult(np.array(values), mults, vecs, kernel_dim, resid, free=free,
                       level=level, all_values=w)


def laplace_pencil(complex_: DeRhamComplex, coeffs: CoefficientSet, backend=None):
    K = stiffness_matrix(complex_, 0, coeffs.eps, backend=backend)
    M = mass_matrix(complex_.mesh, 0, coeffs.nu, backend=backend)
    return K, M


def maxwell_pencil(complex_: DeRhamComplex, coeffs: CoefficientSet, backend=None):
    K = stiffness_matrix(complex_, 1, coeffs.mu_inv, backend=backend)
    M = mass_matrix(complex_.mesh, 1, coeffs.eps, backend=backend)
    return K, M


def laplace_spectrum(complex_: DeRhamComplex, coeffs: CoefficientSet, side: str = "primal",
                     zero_tol: float = ZERO_TOL, gap_tol: float = GAP_TOL,
                     method: str = "dense", count: int = 6) -> EigenResult:
    """Positive spectrum of ``-nu^{-1} div eps grad`` with essential conditions on gamma_t.

    ``side="dual"`` returns the same values with the eigenvector blocks
    replaced by their dual (1-form) eigenvectors.
    """
    if side not in ("primal", "dual"):
        raise UsageError(f"side must be 'primal' or 'dual', got {side!r}")
    K, M = laplace_pencil(complex_, coeffs)
    free = complex_.free(0, "t")
    if method == "dense":
        res = solve_gevp(K, M, free, zero_tol, gap_tol, level=0)
    elif method == "shift-invert":
        res = solve_gevp_shift_invert(K, M, free, count=count, zero_tol=zero_tol,
                                      gap_tol=gap_tol, level=0)
    else:
        raise UsageError(f"unknown method {method!r}")
    if side == "primal":
        return res
    return dual_result(complex_, coeffs, res)


def maxwell_spectrum(complex_: DeRhamComplex, coeffs: CoefficientSet,
                     zero_tol: float = ZERO_TOL, gap_tol: float = GAP_TOL) -> EigenResult:
    """Positive spectrum of ``eps^{-1} rot mu^{-1} rot`` with tangential conditions on gamma_t."""
    K, M = maxwell_pencil(complex_, coeffs)
    return solve_gevp(K, M, complex_.free(1, "t"), zero_tol, gap_tol, level=1)


def merge_spectra(parts: list[tuple[str, np.ndarray, list]], gap_tol: float = GAP_TOL):
    """Union of tagged spectra; values within ``gap_tol`` merge with summed multiplicity."""
    entries = sorted(
        (float(v), int(d), tag) for tag, vals, mults in parts for v, d in zip(vals, mults)
    )
    values, mults, tags = [], [], []
    for v, d, tag in entries:
        if values and v - values[-1] <= gap_tol * abs(v):
            mults[-1] += d
            if tag not in tags[-1].split("+"):
                tags[-1] = "+".join(sorted(tags[-1].split("+") + [tag]))
            continue
        values.append(v)
        mults.append(d)
        tags.append(tag)
    return np.array(values), mults, tags


def vector_laplacian_spectrum(complex_: DeRhamComplex, coeffs: CoefficientSet, rho: float = 1.0,
                              zero_tol: float = ZERO_TOL, gap_tol: float = GAP_TOL) -> EigenResult:
    """Positive spectrum of the generalized vector Laplacian as a spectral union.

    Laplace-branch values are scaled by ``rho``; each value is tagged
    ``"laplace"``, ``"maxwell"`` or ``"laplace+maxwell"``.
    """
    if not rho > 0:
        raise InvalidInputError(f"rho must be positive, got {rho!r}")
    lap = laplace_spectrum(complex_, coeffs, "dual", zero_tol, gap_tol)
    max_ = maxwell_spectrum(complex_, coeffs, zero_tol, gap_tol)
    values, mults, tags = merge_spectra(
        [("laplace", rho * lap.values, lap.multiplicities),
         ("maxwell", max_.values, max_.multiplicities)], gap_tol)
    # vectors: concatenate the 1-form blocks of merged entries
    blocks = {("laplace", float(rho * v)): b for v, b in zip(lap.values, lap.vectors)}
    blocks.update({("maxwell", float(v)): b for v, b in zip(max_.values, max_.vectors)})
    resid = {("laplace", float(rho * v)): r for v, r in zip(lap.values, lap.residuals)}
    resid.update({("maxwell", float(v)): r for v, r in zip(max_.values, max_.residuals)})
    vecs, res = [], []
    for v in values:
        keys = [k for k in blocks if abs(k[1] - v) <= gap_tol * abs(v)]
        vecs.append(np.hstack([blocks[k] for k in keys]))
        res.append(np.concatenate([resid[k] for k in keys]))
    # kernel = Maxwell kernel minus the gradients of the free 0-forms
    n_grad = len(complex_.free(0, "t")) - lap.kernel_dim
    return EigenResult(values, mults, vecs, max_.kernel_dim - n_grad, res,
                       free=complex_.free(1, "t"), level=1, branches=tags)


# -- dual eigenvectors ---------------------------------------------------------

def _level_matrices(complex_: DeRhamComplex, coeffs: CoefficientSet, level: int):
    """(derivative on free DOFs, source mass, target mass) for level 0 or 1."""
    mesh = complex_.mesh
    if level == 0:
        Ms = mass_matrix(mesh, 0, coeffs.nu)
        Mt = mass_matrix(mesh, 1, coeffs.eps)
    elif level == 1:
        Ms = mass_matrix(mesh, 1, coeffs.eps)
        Mt = mass_matrix(mesh, 2, coeffs.mu_inv)
    else:
        raise UsageError(f"level must be 0 or 1, got {level!r}")
    fs, ft = complex_.free(level, "t"), complex_.free(level + 1, "t")
    d = complex_.restricted_derivative(level, "t")
    return d, Ms[fs][:, fs].tocsc(), Mt[ft][:, ft].tocsc()


def dual_eigenvector(complex_: DeRhamComplex, coeffs: CoefficientSet, level: int,
                     pair: EigenPair, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """``lam^{-1/2} d x`` on the free DOFs of the next form degree."""
    lam = float(pair.value)
    if not lam > zero_tol:
        raise InvalidInputError(f"dual eigenvector needs a positive eigenvalue, got {lam!r}")
    d, _, _ = _level_matrices(complex_, coeffs, level)
    return (d @ pair.vector) / np.sqrt(lam)


def adjoint_apply(complex_: DeRhamComplex, coeffs: CoefficientSet, level: int, y: np.ndarray):
    """Discrete ``A^* y = M_s^{-1} d^T M_t y``."""
    d, Ms, Mt = _level_matrices(complex_, coeffs, level)
    return spla.spsolve(Ms, d.T @ (Mt @ y))


def dual_residual(complex_: DeRhamComplex, coeffs: CoefficientSet, level: int,
                  y: np.ndarray, lam: float) -> float:
    """``||A A^* y - lam y||`` in the target mass norm, relative to ``||y||``."""
    d, Ms, Mt = _level_matrices(complex_, coeffs, level)
    r = d @ spla.spsolve(Ms, d.T @ (Mt @ y)) - lam * y
    return float(np.sqrt(r @ (Mt @ r)) / np.sqrt(y @ (Mt @ y)))


def dual_result(complex_: DeRhamComplex, coeffs: CoefficientSet, res: EigenResult) -> EigenResult:
    level = res.level
    d, _, _ = _level_matrices(complex_, coeffs, level)
    vecs, resid = [], []
    for lam, X in zip(res.values, res.vectors):
        Y = (d @ X) / np.sqrt(lam)
        vecs.append(Y)
        resid.append(np.array([dual_residual(complex_, coeffs, level, Y[:, k], lam)
                               for k in range(Y.shape[1])]))
    return EigenResult(res.values.copy(), list(res.multiplicities), vecs, res.kernel_dim, resid,
                       free=complex_.free(level + 1, "t"), level=level + 1, all_values=res.all_values)


def rayleigh_quotient(K, M, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    den = float(x @ (M @ x))
    if not np.any(x) or den == 0.0:
        raise InvalidInputError("Rayleigh quotient of the zero vector")
    return float(x @ (K @ x)) / den
