import numpy as np
import pytest
import scipy.sparse as sp

from derham_shape.assembly import CoefficientSet, mass_matrix
from derham_shape.derham import build_complex
from derham_shape.eigsolve import (
    adjoint_apply,
    dual_eigenvector,
    dual_residual,
    group_values,
    laplace_pencil,
    laplace_spectrum,
    maxwell_pencil,
    maxwell_spectrum,
    merge_spectra,
    rayleigh_quotient,
    solve_gevp,
    vector_laplacian_spectrum,
)
from derham_shape.errors import FactorizationError, InvalidInputError, UsageError
from derham_shape.mesh import generate_cube_mesh, plane_selector, tag_boundary

from conftest import identity


def test_known_small_pencil():
    K = sp.diags([2.0, 6.0, 6.0, 0.0])
    M = sp.diags([1.0, 2.0, 2.0, 1.0])
    res = solve_gevp(K, M)
    assert res.kernel_dim == 1
    assert np.allclose(res.values, [2.0, 3.0])
    assert res.multiplicities == [1, 2]
    X = res.vectors[1]
    assert np.allclose(X.T @ (M.toarray() @ X), np.eye(2))


def test_indefinite_mass_raises():
    with pytest.raises(FactorizationError):
        solve_gevp(sp.eye(2), sp.diags([1.0, -1.0]))


def test_group_values():
    groups = group_values(np.array([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0]), 1e-6)
    assert [len(g) for g in groups] == [2, 1, 2]


def test_laplace_cube(cube2, cube3):
    res = laplace_spectrum(cube3, identity(cube3))
    assert res.kernel_dim == 0
    assert res.residual_max < 1e-10
    assert res.multiplicities[:2] == [1, 2]  # (1,1,2) permutations after the cube symmetry
    res2 = laplace_spectrum(cube2, identity(cube2))
    assert res2.values[0] == pytest.approx(60.0, rel=1e-13)


def test_shift_invert_matches_dense(cube3):
    c = identity(cube3)
    a = laplace_spectrum(cube3, c)
    b = laplace_spectrum(cube3, c, method="shift-invert", count=6)
    n = len(b.flat_values())
    assert np.allclose(a.flat_values()[:n], b.flat_values(), rtol=1e-11)
    with pytest.raises(UsageError):
        laplace_spectrum(cube3, c, method="bogus")


@pytest.mark.parametrize("n", [2, 3])
def test_maxwell_kernel_is_gradients(n):
    m = generate_cube_mesh(n)
    cx = build_complex(m, tag_boundary(m, True))
    res = maxwell_spectrum(cx, identity(cx))
    assert res.kernel_dim == len(cx.free(0))
    assert res.residual_max < 1e-10


def test_neumann_kernels():
    m = generate_cube_mesh(2)
    cx = build_complex(m, tag_boundary(m, False))
    c = identity(cx)
    assert laplace_spectrum(cx, c).kernel_dim == 1
    assert maxwell_spectrum(cx, c).kernel_dim == m.n_vertices - 1


def test_dual_eigenvectors_orthonormal(cube3, rng):
    c = CoefficientSet.random(cube3.mesh.n_tets, rng)
    for level, res in ((0, laplace_spectrum(cube3, c)), (1, maxwell_spectrum(cube3, c))):
        Mt = mass_matrix(cube3.mesh, level + 1, c.eps if level == 0 else c.mu_inv)
        ft = cube3.free(level + 1)
        Mt = Mt[ft][:, ft]
        Y = np.column_stack([dual_eigenvector(cube3, c, level, res.pair(n, k))
                             for n in range(4) for k in range(res.multiplicities[n])])
        assert np.abs(Y.T @ (Mt @ Y) - np.eye(Y.shape[1])).max() < 1e-10
        y = Y[:, 0]
        assert dual_residual(cube3, c, level, y, res.values[0]) < 1e-10
        # A^* y recovers sqrt(lam) x
        x = adjoint_apply(cube3, c, level, y) / np.sqrt(res.values[0])
        assert np.allclose(x, res.pair(0).vector, atol=1e-9)


def test_dual_side_spectrum(cube2):
    c = identity(cube2)
    a = laplace_spectrum(cube2, c)
    b = laplace_spectrum(cube2, c, "dual")
    assert np.array_equal(a.values, b.values)
    assert b.level == 1 and b.vectors[0].shape[0] == len(cube2.free(1))
    with pytest.raises(UsageError):
        laplace_spectrum(cube2, c, "sideways")


def test_rayleigh_quotient(cube3):
    c = identity(cube3)
    K, M = maxwell_pencil(cube3, c)
    f = cube3.free(1)
    K, M = K[f][:, f], M[f][:, f]
    res = maxwell_spectrum(cube3, c)
    for n in range(5):
        assert rayleigh_quotient(K, M, res.pair(n).vector) == pytest.approx(res.values[n], rel=1e-12)
    with pytest.raises(InvalidInputError):
        rayleigh_quotient(K, M, np.zeros(K.shape[0]))


def test_eigen_index_out_of_range(cube2):
    res = laplace_spectrum(cube2, identity(cube2))
    with pytest.raises(InvalidInputError):
        res.pair(len(res.values))


def test_merge_spectra_tags():
    vals, mults, tags = merge_spectra([("laplace", np.array([1.0, 3.0]), [1, 1]),
                                       ("maxwell", np.array([2.0, 3.0]), [2, 1])])
    assert list(vals) == [1.0, 2.0, 3.0]
    assert mults == [1, 2, 2]
    assert tags == ["laplace", "maxwell", "laplace+maxwell"]


def test_vector_laplacian_rho_scaling(cube2):
    c = identity(cube2)
    lap = laplace_spectrum(cube2, c)
    v = vector_laplacian_spectrum(cube2, c, rho=0.1)
    assert 0.1 * lap.values[0] in list(v.values)
    assert v.branches[0] == "laplace"
    assert v.kernel_dim == 0
    with pytest.raises(InvalidInputError):
        vector_laplacian_spectrum(cube2, c, rho=0.0)


def test_mixed_boundary_pencil():
    m = generate_cube_mesh(2)
    cx = build_complex(m, tag_boundary(m, plane_selector(0, 0.0)))
    K, M = laplace_pencil(cx, identity(cx))
    res = solve_gevp(K, M, cx.free(0))
    assert res.kernel_dim == 0
    assert res.residual_max < 1e-11
