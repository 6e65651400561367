class InfVAEError(Exception):
    """Base class of every user-facing failure. ``exit_code`` is what the CLI returns."""

    exit_code = 1


class IngestionError(InfVAEError):
    exit_code = 2


class ConfigError(InfVAEError):
    exit_code = 3


class NumericalDivergenceError(InfVAEError):
    exit_code = 4

    def __init__(self, message: str, tensor_name: str = None):
        super().__init__(message)
        self.tensor_name = tensor_name


class ShapeError(ValueError):
    """Contract violation between tensor shapes."""
