"""Exception types shared across the package."""


class PcmetaError(Exception):
    """Base class for pcmeta errors."""


class InputValidationError(PcmetaError, ValueError):
    """Raised when user-supplied data or parameters violate a contract."""


class NumericDomainError(PcmetaError, ValueError):
    """Raised when a numeric kernel is evaluated outside its domain."""


class NonConvergenceError(PcmetaError, RuntimeError):
    """Raised when an iterative numeric procedure fails to converge."""


class EnumerationBudgetError(PcmetaError, RuntimeError):
    """Raised when a subset enumeration would exceed its size budget."""
