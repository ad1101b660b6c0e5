"""Exception hierarchy.

Everything raised deliberately by this package derives from Error, so
callers can catch one type. Subclasses separate contract violations
(bad inputs) from numerical failures discovered at run time.
"""


class Error(Exception):
    """Base class for all errors raised by this package."""
    pass


class ValidationError(Error):
    """A value handed to a constructor or function violates its contract."""
    pass


class DomainError(Error):
    """A functional was evaluated outside its admissible domain."""
    pass


class ConvergenceError(Error):
    """An iterative routine failed to reach its accuracy target."""
    pass


class SimulationError(Error):
    """A simulation left the numerically trusted region."""
    pass


class ConfigError(Error):
    """An experiment configuration failed schema validation."""
    pass
