"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, BackendError -> 3,
InfeasibleError -> 4.
"""


class DistillError(Exception):
    """Base class for all package errors."""


class ConfigError(DistillError):
    """Invalid or inconsistent configuration."""


class BackendError(DistillError):
    """A model backend call failed (transport, protocol, or model-side)."""

    def __init__(self, message: str, *, context: dict | None = None):
        super().__init__(message)
        self.context = dict(context or {})


class InfeasibleError(DistillError):
    """The requested selection cannot be satisfied by the available candidates."""
