"""Exception hierarchy shared by all sphwin modules.

Every error carries a short machine-parsable ``category`` used by the CLI
as a one-line prefix (``category: message``).
"""


class SphwinError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class DomainError(SphwinError):
    """Input value outside the mathematical domain of an operation."""

    category = "domain"


class ConfigError(SphwinError):
    """Structurally invalid configuration (sizes, divisibility, ranges)."""

    category = "config"


class ShapeError(SphwinError):
    """Mismatched array shapes between related inputs."""

    category = "shape"


class FormatError(SphwinError):
    """Malformed or unsupported file content."""

    category = "format"
