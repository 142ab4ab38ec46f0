"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array or mask dimensions do not line up with the network."""


class TrainingDiverged(RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class NonFiniteActivation(RuntimeError):
    def __init__(self, layer, row):
        super().__init__(f"non-finite activation in representation {layer}, row {row}")
        self.layer = layer
        self.row = row


class MissingStatsError(KeyError):
    def __init__(self, layer):
        super().__init__(f"no activation statistics for layer pair ({layer}, {layer + 1})")
        self.layer = layer


class ScheduleError(ValueError):
    def __init__(self, message, suggested_spread=None):
        super().__init__(message)
        self.suggested_spread = suggested_spread


class InstanceTooLarge(ValueError):
    """Exhaustive search refused because the instance is too big."""


class PruneAborted(RuntimeError):
    """Iterative pruning stopped early; ``history`` holds finished iterations."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class FormatError(ValueError):
    """Base class for malformed binary files."""


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass


class ConfigError(ValueError):
    """Experiment configuration is invalid."""
