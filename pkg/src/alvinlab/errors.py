"""Exception types shared across the package."""


class UsageError(ValueError):
    """A caller violated an operation's contract (bad argument, bad state)."""


class ConfigError(UsageError):
    """A configuration file or config object is invalid."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but numerically degenerate (e.g. zero norm)."""


class ParseError(ValueError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, *, path: str = "", line: int | None = None):
        loc = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss (learning rate too high?)."""
