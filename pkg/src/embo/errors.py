"""Exception hierarchy shared across the package."""


class EmboError(Exception):
    """Base class for all package errors."""


class ContractViolation(EmboError):
    """A caller broke a documented precondition or invariant."""


class InconsistentDataError(EmboError):
    """Duplicate observations with conflicting values in a noiseless fit."""


class NumericalConditioningError(EmboError):
    """Factorisation failed even after the maximum jitter repair."""


class TransportError(EmboError):
    """A backend request failed (network, non-2xx status, malformed body)."""


class CapabilityError(EmboError):
    """The backend does not expose a required capability (e.g. embeddings)."""


class EmptyOutputError(EmboError):
    """A generation carried no tokens where at least one was required."""


class DatasetValidationError(EmboError):
    """A dataset file failed validation; the message lists offending lines."""
