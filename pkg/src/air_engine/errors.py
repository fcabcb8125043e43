"""Error hierarchy shared by the library, CLI, and service.

Each error class carries the process exit code the CLI maps it to:
1 usage, 2 input format, 3 dimension mismatch, 4 internal.
"""


class EngineError(Exception):
    """Base class for all engine failures."""

    exit_code = 4


class UsageError(EngineError):
    """Bad command line, unknown parameter, or invalid configuration value."""

    exit_code = 1


class ParameterError(UsageError):
    """Numeric parameter outside its valid range (e.g. non-positive epsilon)."""


class FormatError(EngineError):
    """Corrupt or unsupported input file (NPY magic, header, JSON syntax)."""

    exit_code = 2


class DomainError(EngineError):
    """Values outside the operation's domain: non-finite entries, bad marginals."""

    exit_code = 2


class ShapeError(EngineError):
    """Dimension mismatch between operands."""

    exit_code = 3
