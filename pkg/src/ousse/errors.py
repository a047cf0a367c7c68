"""Exception types shared across the package."""


class OusseError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OusseError):
    """An array or parameter failed a structural check.

    Raised eagerly at construction / entry points so that numerical
    kernels can assume well-formed inputs.
    """


class ConfigError(OusseError):
    """A configuration document failed validation.

    Collects every problem found in one pass; ``errors`` is a list of
    human-readable messages, each prefixed with the dotted path of the
    offending field (e.g. ``model.H.coefficients[0]``).
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DivergenceError(OusseError):
    """A trajectory or deterministic propagation left the finite range."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)
