"""Whitney-form de Rham eigenproblems on tetrahedral meshes and their shape derivatives."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .assembly import CoefficientSet, mass_matrix, stiffness_matrix
from .derham import DeRhamComplex, build_complex
from .eigsolve import EigenPair, EigenResult, laplace_spectrum, maxwell_spectrum, vector_laplacian_spectrum
from .errors import DerhamShapeError
from .mesh import BoundaryPartition, TetMesh, generate_cube_mesh, tag_boundary
from .shapederiv import fd_check, hadamard_laplace_dual, hadamard_laplace_primal, hadamard_maxwell
from .transform import VertexField, make_map, transform_coefficients

__all__ = [
    "BACKEND", "BoundaryPartition", "CoefficientSet", "DeRhamComplex", "DerhamShapeError", "EigenPair",
    "EigenResult", "TetMesh", "VertexField", "build_complex", "fd_check", "generate_cube_mesh",
    "hadamard_laplace_dual", "hadamard_laplace_primal", "hadamard_maxwell", "laplace_spectrum",
    "make_map", "mass_matrix", "maxwell_spectrum", "stiffness_matrix", "tag_boundary",
    "transform_coefficients", "vector_laplacian_spectrum",
]
