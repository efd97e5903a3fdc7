"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid experiment configuration or mismatched policy/environment."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InvalidInputError(ValueError):
    pass


class SingularGradientError(ZeroDivisionError):
    """log-probability gradient requested at an action with zero probability."""


class ResourceLimitError(RuntimeError):
    """Exhaustive enumeration would exceed the path budget."""


class DomainError(ValueError):
    pass


class DivergenceError(ValueError):
    """A distribution puts mass outside the support of its reference."""
