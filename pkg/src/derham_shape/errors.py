"""Exception hierarchy.

Every error carries a machine-readable ``code`` and a distinct process
``exit_status`` so the command line can report failures uniformly.
"""

from __future__ import annotations


class DerhamShapeError(Exception):
    code = "error"
    exit_status = 1
    module = "derham_shape"


class UsageError(DerhamShapeError, ValueError):
    code = "usage"
    exit_status = 2
    module = "cli"


class ConfigError(DerhamShapeError, ValueError):
    code = "config"
    exit_status = 3
    module = "cli"


class MeshParseError(DerhamShapeError, ValueError):
    code = "mesh-parse"
    exit_status = 10
    module = "mesh"


class MeshValidationError(DerhamShapeError, ValueError):
    code = "mesh-validation"
    exit_status = 11
    module = "mesh"


class AssemblyError(DerhamShapeError, ValueError):
    code = "assembly"
    exit_status = 20
    module = "assembly"


class FactorizationError(DerhamShapeError, ArithmeticError):
    code = "factorization"
    exit_status = 30
    module = "eigsolve"


class InvalidInputError(DerhamShapeError, ValueError):
    code = "invalid-input"
    exit_status = 31
    module = "eigsolve"


class MultiplicityError(DerhamShapeError, ValueError):
    code = "multiplicity"
    exit_status = 40
    module = "shapederiv"


class NormalizationError(DerhamShapeError, ValueError):
    code = "normalization"
    exit_status = 41
    module = "shapederiv"


class TrackingError(DerhamShapeError, RuntimeError):
    code = "tracking"
    exit_status = 42
    module = "shapederiv"


class AdmissibilityError(DerhamShapeError, ValueError):
    code = "admissibility"
    exit_status = 50
    module = "transform"


class ConnectivityError(DerhamShapeError, ValueError):
    code = "connectivity"
    exit_status = 51
    module = "transform"


class VerificationFailure(DerhamShapeError, AssertionError):
    code = "verification"
    exit_status = 70
    module = "cli"
