"""Exception hierarchy shared across the toolkit."""


class BiasnetError(Exception):
    """Base class for all toolkit errors."""


class DomainError(BiasnetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(BiasnetError, ValueError):
    """Inputs violate an operation's structural contract (shapes, kinds, ranks)."""


class ConfigError(BiasnetError, ValueError):
    """Configuration is invalid. ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        self.detail = message
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ConvergenceError(BiasnetError, RuntimeError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class SamplingError(BiasnetError, RuntimeError):
    """The sampler hit a non-finite log density."""


class SequencingError(BiasnetError, RuntimeError):
    """A wave was simulated before the judgments it depends on existed."""


class NestingError(BiasnetError, ValueError):
    """Restricted model fits better than the unrestricted one."""


class TraceParseError(BiasnetError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
