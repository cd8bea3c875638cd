"""Exception taxonomy shared across the package.

Every error raised on purpose derives from GiniGraphError so the CLI can map
failure classes to exit codes in one place.
"""

from __future__ import annotations


class GiniGraphError(Exception):
    """Base class for all deliberate failures."""


class ContractError(GiniGraphError):
    """A caller violated an API precondition (shapes, ranges, modes)."""


class DimensionError(ContractError):
    """Operands have incompatible shapes."""


class DomainError(ContractError):
    """An input is outside the mathematical domain of an operation."""


class ConfigError(GiniGraphError):
    """A config file or CLI flag combination is invalid."""


class DataFormatError(GiniGraphError):
    """An input file does not follow the documented format."""


class NumericalError(GiniGraphError):
    """A computation produced NaN/Inf or otherwise left the finite regime."""
