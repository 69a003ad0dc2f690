"""Exception types shared across the package."""


class LatentSpectrumError(Exception):
    """Base class for every error raised by this package."""


class ContractError(LatentSpectrumError, ValueError):
    """An input violated an operation's precondition (shape, range, size)."""


class ConfigError(LatentSpectrumError, ValueError):
    """A configuration block failed validation.

    ``field`` names the offending key so the CLI can report it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class TrainingError(LatentSpectrumError, RuntimeError):
    """Training produced non-finite values.

    ``epoch`` and ``layer`` are filled in when known.
    """

    def __init__(self, message, epoch=None, layer=None):
        super().__init__(message)
        self.epoch = epoch
        self.layer = layer


class MissingArtifactError(LatentSpectrumError, FileNotFoundError):
    """A downstream stage was asked to run before its upstream output exists."""

    def __init__(self, path):
        super().__init__(f"missing upstream stage: {path}")
        self.path = path
