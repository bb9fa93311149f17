"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, shape mismatch or malformed input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RuntimeError):
    """Non-finite value encountered during training."""
