"""Exception types shared across the package.

The CLI maps each family to a distinct exit code.
"""


class ConfigError(ValueError):
    """Invalid experiment configuration; carries field-level messages."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalFailure(RuntimeError):
    """A solver guard tripped (blow-up, non-finite values)."""


class ResourceRejection(MemoryError):
    """A requested computation exceeds the configured memory budget."""


class BootstrapFailure(ValueError):
    """The cubic ``eps + C x^3 - x`` has no nonnegative root below its minimum."""
