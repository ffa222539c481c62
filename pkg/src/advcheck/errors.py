"""Exception types shared across the harness."""


class TrainingDiverged(RuntimeError):
    """Raised when SGD produces a NaN; carries the offending epoch."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged (NaN) at epoch {epoch}")


class GradientUnavailable(RuntimeError):
    """The model exposes no analytic input gradient."""


class AttackInapplicable(RuntimeError):
    """The attack cannot run against this model / threat model combination."""


class InitFailure(RuntimeError):
    """A decision-based attack could not find an adversarial starting point."""


class FormatError(ValueError):
    """A file did not match the expected binary or text layout."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ConfigError(ValueError):
    """The experiment configuration is invalid or unresolvable."""
