"""Exception types shared across the benchmark harness."""


class SrafError(Exception):
    """Base class for all harness errors."""


class InvalidParameter(SrafError):
    """An operation received an out-of-range or degenerate parameter."""


class DimensionMismatch(SrafError):
    """Image and mask (or similar paired rasters) disagree in shape."""


class MapFormatError(SrafError):
    """A map file failed to parse."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class MapInvariantError(SrafError):
    """A map parsed but violates a structural invariant."""


class ConditionNotApplicable(SrafError):
    """The condition targets a sensor absent from the agent's suite."""


class RatioUndefined(SrafError):
    """Robustness ratio requested with a zero baseline driving score."""


class ConfigError(SrafError):
    """Benchmark configuration is missing or violates an invariant."""


class ReportError(SrafError):
    """A results log is missing, corrupt, or fails its integrity check."""


class AgentError(SrafError):
    """Base class for agent session failures. ``code`` names the failure
    class recorded in the run trace."""

    code = "AGENT_ERROR"

    def __init__(self, message: str, tick: int | None = None):
        super().__init__(message)
        self.tick = tick


class HandshakeFailed(AgentError):
    code = "HANDSHAKE_FAILED"


class AgentTimeout(AgentError):
    code = "AGENT_TIMEOUT"


class AgentProtocolError(AgentError):
    code = "AGENT_PROTOCOL_ERROR"


class AgentDied(AgentError):
    code = "AGENT_DIED"
