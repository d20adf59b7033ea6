"""Exception taxonomy shared by all modules.

ShapeError / ContractError / FormatError are validation failures (CLI exit
code 2); NumericError and anything else are runtime failures (exit code 1).
"""


class HsiGanError(Exception):
    """Base class for all package errors."""


class ShapeError(HsiGanError):
    """Array dimensions incompatible with the requested operation."""


class ContractError(HsiGanError):
    """A documented precondition was violated by the caller."""


class FormatError(HsiGanError):
    """A file or byte stream does not match its declared layout."""


class NumericError(HsiGanError):
    """Non-finite values where finite ones are required."""
