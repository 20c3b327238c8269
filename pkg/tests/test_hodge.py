import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derham_shape.assembly import CoefficientSet
from derham_shape.derham import build_complex
from derham_shape.eigsolve import maxwell_spectrum
from derham_shape.hodge import cohomology_dim, helmholtz_decompose, numerical_rank
from derham_shape.mesh import generate_cube_mesh, plane_selector, tag_boundary


def _complex(n, sel):
    m = generate_cube_mesh(n)
    return build_complex(m, tag_boundary(m, sel))


def test_numerical_rank():
    a = np.outer([1.0, 2.0, 3.0], [1.0, 1.0])
    assert numerical_rank(a) == 1
    assert numerical_rank(np.zeros((3, 2))) == 0
    assert numerical_rank(np.zeros((0, 2))) == 0


@pytest.mark.parametrize("sel", [True, False])
def test_cohomology_trivial_on_cube(sel):
    assert cohomology_dim(_complex(2, sel)) == 0


def test_cohomology_two_opposite_faces():
    both = lambda c: abs(c[2]) < 1e-12 or abs(c[2] - 1) < 1e-12
    assert cohomology_dim(_complex(2, both)) == 1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["all", "none", "z"]))
def test_decomposition(seed, which):
    sel = {"all": True, "none": False,
           "z": lambda c: abs(c[2]) < 1e-12 or abs(c[2] - 1) < 1e-12}[which]
    cx = _complex(2, sel)
    rng = np.random.default_rng(seed)
    c = CoefficientSet.random(cx.mesh.n_tets, rng)
    x = rng.standard_normal(len(cx.free(1)))
    split = helmholtz_decompose(cx, c, x)
    assert split.orthogonality() <= 1e-10
    n = split.norms
    assert abs(n["x"] ** 2 - n["grad"] ** 2 - n["harm"] ** 2 - n["curl"] ** 2) <= 1e-9 * n["x"] ** 2
    assert np.allclose(split.x_grad + split.x_harm + split.x_curl, x)
    # the harmonic part is closed and M-orthogonal to gradients
    C = cx.restricted_derivative(1).toarray()
    assert np.abs(C @ split.x_harm).max() <= 1e-9 * np.abs(x).max()
    if which != "z":
        assert split.norm(split.x_harm) <= 1e-9 * n["x"]


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("sel", [True, False, plane_selector(0, 0.0)])
def test_kernel_dim_is_gradients_plus_harmonic(n, sel):
    cx = _complex(n, sel)
    c = CoefficientSet.identity(cx.mesh.n_tets)
    n_grad = len(cx.free(0)) - (0 if sel is not False else 1)
    assert maxwell_spectrum(cx, c).kernel_dim == n_grad + cohomology_dim(cx)
