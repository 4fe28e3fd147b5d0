"""Exception hierarchy shared by the simulation and verification modules."""


class SepmpError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SepmpError, ValueError):
    """Invalid model or experiment configuration. ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SimulationError(SepmpError, RuntimeError):
    """A path could not be simulated. ``path_id`` is set when known."""

    def __init__(self, message, path_id=None):
        self.path_id = path_id
        if path_id is not None:
            message = f"path {path_id}: {message}"
        super().__init__(message)


class ExplosionError(SimulationError):
    """Event count exceeded the per-path cap."""


class NonFiniteState(SimulationError):
    """A state update produced NaN or an infinity."""


class PositivityViolation(SimulationError):
    """A log-linear state left the positive half line."""


class SupportViolation(SimulationError):
    """A mark pushed the intensity below its baseline at a jump."""


class ModeError(SepmpError):
    """Operation requested on a path simulated in the wrong mark mode."""


class AdmissibilityError(SepmpError, ValueError):
    """A control value left the admissible interval."""
