"""Exception types shared across the package."""


class DomainError(ValueError):
    """A formula or model was evaluated outside the parameter range where it holds."""


class ConfigError(ValueError):
    """A configuration file or command-line option could not be understood."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
