"""Acceptance criteria, one PASS/FAIL line each (shown in the pytest summary)."""

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import ACCEPTANCE_LINES
from derham_shape.assembly import CoefficientSet, mass_matrix
from derham_shape.derham import build_complex
from derham_shape.eigsolve import (
    EigenPair,
    dual_eigenvector,
    laplace_pencil,
    laplace_spectrum,
    maxwell_pencil,
    maxwell_spectrum,
    merge_spectra,
    rayleigh_quotient,
    vector_laplacian_spectrum,
)
from derham_shape.hodge import cohomology_dim, helmholtz_decompose
from derham_shape.mesh import BoundaryPartition, generate_cube_mesh, tag_boundary
from derham_shape.shapederiv import HADAMARD, fd_check, hellmann_feynman_check, spectral_discrepancy
from derham_shape.transform import VertexField, make_map, transform_coefficients

PI2 = np.pi**2


def verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _cube(n, sel=True):
    m = generate_cube_mesh(n)
    return build_complex(m, tag_boundary(m, sel))


def _opposite_z(c):
    return abs(c[2]) < 1e-12 or abs(c[2] - 1) < 1e-12


def test_1_complex_exactness():
    worst = 0
    for n in (1, 2, 4):
        cx = _cube(n)
        worst = max(worst, (cx.C @ cx.G).count_nonzero(), (cx.D @ cx.C).count_nonzero())
    verdict("1 complex exactness", worst == 0, f"nonzeros in C*G and D*C over n=1,2,4: {worst}")


@pytest.fixture(scope="module")
def dirichlet_laplace():
    return {n: laplace_spectrum(_cube(n), CoefficientSet.identity(6 * n**3)).values[0] for n in (2, 4, 6)}


def test_2a_laplace_first_eigenvalue(dirichlet_laplace):
    r4 = dirichlet_laplace[4] / (3 * PI2) - 1
    r6 = dirichlet_laplace[6] / (3 * PI2) - 1
    verdict("2a Dirichlet Laplace vs 3pi^2", abs(r4) <= 0.10 and abs(r6) <= 0.04,
            f"relative error {r4:.3f} at n=4 (limit 0.10), {r6:.3f} at n=6 (limit 0.04)")


def test_2b_laplace_convergence_order(dirichlet_laplace):
    ns = np.array([2, 4, 6])
    err = np.array([dirichlet_laplace[n] - 3 * PI2 for n in ns])
    order = -np.polyfit(np.log(ns), np.log(err), 1)[0]
    verdict("2b Dirichlet Laplace h^2 convergence", order >= 1.8, f"log-log order {order:.3f} over n=2,4,6")


def test_2c_maxwell_first_eigenvalue():
    cx = _cube(4)
    lam = maxwell_spectrum(cx, CoefficientSet.identity(cx.mesh.n_tets)).values[0]
    rel = lam / (2 * PI2) - 1
    verdict("2c Maxwell gamma_t=boundary vs 2pi^2", abs(rel) <= 0.10, f"relative error {rel:.4f} at n=4")


def test_3_unitary_equivalence():
    cx = _cube(3)
    m = cx.mesh
    spec_dev = mass_dev = 0.0
    for seed in range(5):
        c = CoefficientSet.random(m.n_tets, np.random.default_rng(seed))
        phi = make_map(m, VertexField.random_smooth(m, seed, 1.0), 0.4)
        d = phi.deformed
        cxd = build_complex(d, BoundaryPartition(d, cx.partition.gamma_t))
        tc = transform_coefficients(c, phi)
        for solve in (laplace_spectrum, maxwell_spectrum):
            spec_dev = max(spec_dev, spectral_discrepancy(solve(cxd, c), solve(cx, tc), 10))
        A, B = mass_matrix(d, 1, c.eps), mass_matrix(m, 1, tc.eps)
        mass_dev = max(mass_dev, abs(A - B).max() / abs(A).max())
    verdict("3 unitary equivalence", spec_dev <= 1e-10 and mass_dev <= 1e-12,
            f"spectrum {spec_dev:.2e} (limit 1e-10), level-1 mass {mass_dev:.2e} (limit 1e-12)")


@pytest.mark.parametrize("problem", ["laplace", "laplace-dual", "maxwell"])
@pytest.mark.parametrize("field", ["dilate", "shear", "random"])
def test_4_hadamard_vs_fd(problem, field):
    cx = _cube(3)
    psi = {"dilate": VertexField.dilation, "shear": VertexField.shear,
           "random": lambda m: VertexField.random_smooth(m, 7, 0.3)}[field](cx.mesh)
    rep = fd_check(problem, cx, CoefficientSet.identity(cx.mesh.n_tets), psi, [1e-2, 5e-3, 2.5e-3])
    ok = all(3.5 <= r <= 4.5 for r in rep.error_ratios) and rep.extrapolated_rel_err <= 1e-6
    ratios = ", ".join(f"{r:.3f}" for r in rep.error_ratios)
    verdict(f"4 FD {problem}/{field}", ok,
            f"error ratios [{ratios}], extrapolated relative error {rep.extrapolated_rel_err:.1e}")


def _pairs(cx, c):
    lap = laplace_spectrum(cx, c)
    mx = maxwell_spectrum(cx, c)
    u = lap.pair(0)
    simple = [i for i, d in enumerate(mx.multiplicities) if d == 1][0]
    return {"laplace": u, "laplace-dual": EigenPair(u.value, dual_eigenvector(cx, c, 0, u), 1, 1),
            "maxwell": mx.pair(simple)}


def test_5_structural_identities():
    cx = _cube(3)
    m = cx.mesh
    ident = CoefficientSet.identity(m.n_tets)
    pairs = _pairs(cx, ident)
    dil = max(abs(HADAMARD[p](cx, ident, x, VertexField.dilation(m)).dlambda / x.value + 2) for p, x in pairs.items())
    trans = max(abs(HADAMARD[p](cx, ident, x, VertexField.translation(m)).dlambda) for p, x in pairs.items())
    hf = pd = 0.0
    for seed in range(5):
        c = ident if seed == 0 else CoefficientSet.random(m.n_tets, np.random.default_rng(seed))
        ps = _pairs(cx, c)
        psi = VertexField.random_smooth(m, seed)
        for p, x in ps.items():
            hf = max(hf, hellmann_feynman_check(p, cx, c, x, psi) / x.value)
        a = HADAMARD["laplace"](cx, c, ps["laplace"], psi).dlambda
        b = HADAMARD["laplace-dual"](cx, c, ps["laplace-dual"], psi).dlambda
        pd = max(pd, abs(a - b) / abs(a))
    ok = dil <= 1e-10 and trans == 0 and hf <= 1e-12 and pd <= 1e-9
    verdict("5 structural identities", ok,
            f"dilation |dl/l+2| {dil:.1e}, translation {trans:.1e}, Hellmann-Feynman/lambda {hf:.1e}, "
            f"primal/dual {pd:.1e}")


def test_6_fa_toolbox():
    cx = _cube(3)
    m = cx.mesh
    c = CoefficientSet.random(m.n_tets, np.random.default_rng(11))
    ortho = rq = 0.0
    fp_ok = True
    rng = np.random.default_rng(0)
    for level, res, (K, M), Mt in (
        (0, laplace_spectrum(cx, c), laplace_pencil(cx, c), mass_matrix(m, 1, c.eps)),
        (1, maxwell_spectrum(cx, c), maxwell_pencil(cx, c), mass_matrix(m, 2, c.mu_inv)),
    ):
        fs, ft = cx.free(level), cx.free(level + 1)
        K, M, Mt = K[fs][:, fs], M[fs][:, fs], Mt[ft][:, ft]
        Y = np.column_stack([dual_eigenvector(cx, c, level, res.pair(n, k))
                             for n in range(len(res.values)) for k in range(res.multiplicities[n])])
        ortho = max(ortho, np.abs(Y.T @ (Mt @ Y) - np.eye(Y.shape[1])).max())
        for n, X in enumerate(res.vectors):
            for k in range(X.shape[1]):
                rq = max(rq, abs(rayleigh_quotient(K, M, X[:, k]) - res.values[n]) / res.values[n])
        # Friedrichs-Poincare on vectors M-orthogonal to the kernel of d
        d = cx.restricted_derivative(level).toarray()
        kernel = sla.null_space(d)
        Md = M.toarray()
        for _ in range(100):
            x = rng.standard_normal(len(fs))
            if kernel.shape[1]:
                MK = Md @ kernel
                x = x - kernel @ np.linalg.solve(kernel.T @ MK, MK.T @ x)
            lhs = np.sqrt(x @ (Md @ x))
            dx = d @ x
            rhs = np.sqrt(dx @ (Mt @ dx)) / np.sqrt(res.values[0])
            fp_ok &= bool(lhs <= rhs * (1 + 1e-12))
    ok = ortho <= 1e-10 and rq <= 1e-8 and fp_ok
    verdict("6 functional-analytic invariants", ok,
            f"dual orthonormality {ortho:.1e}, Rayleigh quotient {rq:.1e}, Friedrichs-Poincare on 200 vectors "
            f"{'holds' if fp_ok else 'violated'}")


def test_7_hodge_suite():
    ortho = pyth = 0.0
    coh = {}
    kernel_ok = True
    for n in (2, 3):
        for name, sel in (("boundary", True), ("empty", False), ("opposite faces", _opposite_z)):
            cx = _cube(n, sel)
            c = CoefficientSet.random(cx.mesh.n_tets, np.random.default_rng(n))
            x = np.random.default_rng(0).standard_normal(len(cx.free(1)))
            split = helmholtz_decompose(cx, c, x)
            nm = split.norms
            ortho = max(ortho, split.orthogonality())
            pyth = max(pyth, abs(nm["x"] ** 2 - nm["grad"] ** 2 - nm["harm"] ** 2 - nm["curl"] ** 2) / nm["x"] ** 2)
            h = cohomology_dim(cx)
            coh[(n, name)] = h
            # gradients of free vertex functions; without tangential boundary the constants drop out
            n_grad = len(cx.free(0)) - (1 if sel is False else 0)
            kernel_ok &= maxwell_spectrum(cx, c).kernel_dim == n_grad + h
    trivial = all(coh[(n, k)] == 0 for n in (2, 3) for k in ("boundary", "empty"))
    ok = ortho <= 1e-10 and pyth <= 1e-9 and trivial and kernel_ok
    verdict("7 Hodge suite", ok,
            f"orthogonality {ortho:.1e}, Pythagoras {pyth:.1e}, cohomology {sorted(set(coh.values()))}, "
            f"kernel dimension {'matches' if kernel_ok else 'mismatch'}")


def _union(cx, c, rho):
    lap = laplace_spectrum(cx, c)
    mx = maxwell_spectrum(cx, c)
    return merge_spectra([("laplace", rho * lap.values, lap.multiplicities),
                          ("maxwell", mx.values, mx.multiplicities)])


def test_8_vector_laplacian_union():
    cx = _cube(3)
    m = cx.mesh
    ident = CoefficientSet.identity(m.n_tets)
    v = vector_laplacian_spectrum(cx, ident, 1.0)
    lap, mx = laplace_spectrum(cx, ident), maxwell_spectrum(cx, ident)
    union = np.sort(np.concatenate([np.repeat(lap.values, lap.multiplicities),
                                    np.repeat(mx.values, mx.multiplicities)]))
    same = np.array_equal(v.flat_values(), union)
    c = CoefficientSet.random(m.n_tets, np.random.default_rng(4))
    vp = vector_laplacian_spectrum(cx, c, 1.0)
    vals, mults, tags = _union(cx, c, 1.0)
    resolve = np.array_equal(vp.values, vals) and vp.multiplicities == mults and vp.branches == tags
    verdict("8 vector Laplacian union", same and resolve,
            f"identity coefficients exact union {same}; perturbed coefficients match re-solve {resolve}")
