"""Social-network simulation engine with pluggable agent backends."""

__version__ = "0.1.0"

from .config import RunConfig, load_config, save_config
from .engine import RunArtifacts, run_simulation
from .errors import (
    BackendError,
    InvalidInputError,
    InvalidSpecError,
    IsolationWarning,
    ProtocolError,
)

__all__ = [
    "BackendError",
    "InvalidInputError",
    "InvalidSpecError",
    "IsolationWarning",
    "ProtocolError",
    "RunArtifacts",
    "RunConfig",
    "load_config",
    "run_simulation",
    "save_config",
    "__version__",
]
