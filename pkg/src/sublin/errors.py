"""Exception types shared across the package."""


class SublinError(Exception):
    """Base class for all package errors."""


class InputError(SublinError, ValueError):
    """Malformed or inconsistent input."""


class ResourceError(SublinError, RuntimeError):
    """A combinatorial or memory cap would be exceeded."""


class NumericError(SublinError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable numbers."""
