"""
Error types for the spectral registration pipeline.

Every error carries the process exit code the command-line front end
reports for it, so library callers and the CLI agree on severity.

Author: SpectralReg
Version: 1.0.0
"""


class RegistrationError(Exception):
    """Base class for all pipeline errors."""
    exit_code: int = 1


class ParseError(RegistrationError):
    """Malformed input file or non-finite coordinate."""
    exit_code = 2


class DegenerateInput(RegistrationError, ValueError):
    """Input violates a structural requirement (duplicates, bad indices, zero areas...)."""
    exit_code = 3


class MissingConnectivity(RegistrationError, ValueError):
    """Operation needs triangles but the shape has none."""
    exit_code = 3


class DimensionMismatch(RegistrationError, ValueError):
    """Sizes of the operands do not agree."""
    exit_code = 3


class SizeLimitExceeded(RegistrationError):
    """Problem is larger than the configured solver guard."""
    exit_code = 3


class ConvergenceFailure(RegistrationError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""
    exit_code = 4


class ReplayMismatch(RegistrationError):
    """A replayed run produced different output hashes than its manifest."""
    exit_code = 3
