"""Exception hierarchy with stable machine-readable codes.

Every error carries a ``code`` string and an ``exit_code`` integer; the CLI
prints ``error[<code>]: <message>`` and exits with ``exit_code``.
"""


class CTError(Exception):
    code = "E_GENERIC"
    exit_code = 1


class InvalidGeometry(CTError):
    code = "E_GEOMETRY"
    exit_code = 10


class DegenerateGeometry(CTError):
    code = "E_DEGENERATE"
    exit_code = 11


class RayParallelToFace(DegenerateGeometry):
    code = "E_RAY_PARALLEL"
    exit_code = 12


class SingularPhi(CTError):
    code = "E_SINGULAR_PHI"
    exit_code = 13


class CentralRow(CTError):
    code = "E_CENTRAL_ROW"
    exit_code = 14


class ZRestrictionViolation(CTError):
    code = "E_Z_RESTRICTION"
    exit_code = 15


class OutOfMemory(CTError):
    code = "E_OUT_OF_MEMORY"
    exit_code = 16


class DimensionMismatch(CTError):
    code = "E_DIMENSION"
    exit_code = 20


class NonFinite(CTError):
    code = "E_NON_FINITE"
    exit_code = 21


class ZeroMatrix(CTError):
    code = "E_ZERO_MATRIX"
    exit_code = 22


class TooLarge(CTError):
    code = "E_TOO_LARGE"
    exit_code = 23


class InvalidSpec(CTError):
    code = "E_INVALID_SPEC"
    exit_code = 30


class ConfigError(CTError):
    code = "E_CONFIG"
    exit_code = 31


class FormatError(CTError):
    code = "E_FORMAT"
    exit_code = 32


class ValidationFailed(CTError):
    code = "E_VALIDATION"
    exit_code = 40


class FileIOError(CTError):
    code = "E_IO"
    exit_code = 33
