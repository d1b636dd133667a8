"""Exception hierarchy shared by all modules.

The command line maps these onto exit codes: configuration problems give 1,
violated standing assumptions give 2, numerical breakdowns give 3.
"""


class ExitwellError(Exception):
    """Base class for all package errors."""


class ConfigError(ExitwellError):
    """Malformed or inconsistent run configuration."""


class AssumptionError(ExitwellError):
    """A standing hypothesis on the domain or the potential fails.

    Parameters
    ----------
    assumption : str
        Short name of the violated hypothesis, e.g. ``"inward-decrease"``.
    message : str
        Human readable explanation including measured values.
    """

    def __init__(self, assumption: str, message: str):
        self.assumption = assumption
        super().__init__(f"[{assumption}] {message}")


class CollarError(AssumptionError):
    """The collar map x(s) + tau*nu(s) is not injective on the requested depth."""

    def __init__(self, message: str):
        super().__init__("collar", message)


class DomainRangeError(ValueError, ExitwellError):
    """A point or coordinate lies outside the admissible range."""


class NumericalError(ExitwellError):
    """An iterative or adaptive numerical procedure failed to converge."""
