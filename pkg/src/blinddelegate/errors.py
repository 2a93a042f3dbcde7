"""Exception hierarchy shared across the package."""


class BlindDelegateError(Exception):
    """Base class for all package-specific failures."""


class CapacityError(BlindDelegateError):
    """Requested register exceeds the dense-simulation qubit budget."""


class DegenerateMeasurementError(BlindDelegateError):
    """A measurement branch with (numerically) zero probability was selected."""


class RetryLimitError(BlindDelegateError):
    """Channel retransmission cap exhausted (loss too high or adversarial)."""


class CalibrationError(BlindDelegateError):
    """Unit-cell search exhausted without realizing the operation catalog."""


class FormatError(BlindDelegateError):
    """Malformed circuit, graph, or transcript text."""


class ConfigError(BlindDelegateError):
    """Invalid or incomplete scenario configuration."""
