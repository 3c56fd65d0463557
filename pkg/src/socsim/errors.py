"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """A generation or run specification violates its invariants."""


class InvalidInputError(ValueError):
    """Operation inputs are structurally invalid (shape/count mismatches)."""


class BackendError(RuntimeError):
    """An agent backend failed at the application level (timeouts, 4xx)."""


class ProtocolError(RuntimeError):
    """A backend response violates the wire protocol schema."""


class IsolationWarning(UserWarning):
    """Generated graph is heavily fragmented (largest component < 90%)."""
