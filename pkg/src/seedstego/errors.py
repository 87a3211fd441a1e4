"""Exception types shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific one that applies rather than bare ValueError.
"""


class ConfigError(Exception):
    """Invalid configuration, key file, or request parameters."""


class ShapeError(ValueError):
    """Tensor or image shapes incompatible with the requested operation."""


class ProtocolError(Exception):
    """Sender/receiver mismatch: wrong sizes, wrong plan, off-lattice stego."""


class NumericsError(Exception):
    """Optimization produced a non-finite loss; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
