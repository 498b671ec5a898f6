"""Exception types shared across the pipeline."""


class TdmError(Exception):
    """Base class for all library errors."""


class SchemaError(TdmError, ValueError):
    """A CSV header or config document is missing required fields."""


class RowError(TdmError, ValueError):
    """A single input row could not be parsed or validated."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class TooManyRowErrors(TdmError, ValueError):
    def __init__(self, errors, total):
        self.errors = list(errors)
        self.total = total
        frac = len(self.errors) / max(total, 1)
        super().__init__(
            f"{len(self.errors)} of {total} rows malformed ({frac:.1%}); first: {self.errors[0]}"
        )


class UnknownTowerError(TdmError, KeyError):
    pass


class NoPathError(TdmError, ValueError):
    """Destination is not reachable from the origin."""


class CalibrationError(TdmError, ValueError):
    """A counted link carries traffic but no CDR-derived flow."""


class TrainingError(TdmError, RuntimeError):
    """Model training produced a non-finite loss."""


class InfeasibleError(TdmError, ValueError):
    """No assignment satisfies the capacity constraints."""


class InstanceTooLargeError(TdmError, ValueError):
    pass


class MissingArtifactError(TdmError, FileNotFoundError):
    """An upstream pipeline artifact has not been produced yet."""


class ConfigError(TdmError, ValueError):
    """Invalid configuration; ``problems`` lists ``field.path: message`` entries."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))
