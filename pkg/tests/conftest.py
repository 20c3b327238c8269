import numpy as np
import pytest

from derham_shape.assembly import CoefficientSet
from derham_shape.derham import build_complex
from derham_shape.mesh import generate_cube_mesh, tag_boundary

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cube2():
    m = generate_cube_mesh(2)
    return build_complex(m, tag_boundary(m, True))


@pytest.fixture(scope="session")
def cube3():
    m = generate_cube_mesh(3)
    return build_complex(m, tag_boundary(m, True))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def identity(cx):
    return CoefficientSet.identity(cx.mesh.n_tets)
