"""Exception types shared across the package."""


class KmcertError(Exception):
    """Base class for all package errors."""


class StructuralError(KmcertError, ValueError):
    """Incompatible shapes, weights or block layouts."""


class ParameterError(KmcertError, ValueError):
    """A parameter is outside its admissible range."""


class NumericalError(KmcertError, RuntimeError):
    """Non-finite values, failed solves or broken internal identities."""


class DivergenceError(NumericalError):
    """The iterate norm blew past the divergence guard."""


class UnavailableError(KmcertError, RuntimeError):
    """The requested quantity cannot be computed from the data at hand."""
