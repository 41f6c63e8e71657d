"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (gluing parameter, resolution, config file)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """A point lies outside the region where a formula is defined."""


class IterativeFailure(RuntimeError):
    """An iterative method did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class ContractionHypothesisError(RuntimeError):
    """The fixed-point map is not measurably contracting on the required ball."""

    def __init__(self, message: str, constants: dict):
        self.constants = dict(constants)
        detail = ", ".join(f"{k}={v:.6g}" for k, v in self.constants.items())
        super().__init__(f"{message}: {detail}")
