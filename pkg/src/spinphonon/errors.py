"""Exception hierarchy shared across the package."""


class SpinPhononError(Exception):
    """Base class for all package errors."""


class CapacityError(SpinPhononError):
    """Hilbert-space dimension exceeds the configured cap."""


class ValidationError(SpinPhononError):
    """An in-memory object violates one of its invariants."""


class ParseError(SpinPhononError):
    """A data file could not be parsed.

    Carries location info so the CLI can report file/line/offset.
    """

    def __init__(self, message, path=None, line=None, offset=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset


class UnitTagError(ParseError):
    """A data file is missing its unit tags or declares unsupported units."""


class SumRuleError(ValidationError):
    """Force constants violate the acoustic sum rule beyond threshold and
    enforcement was not requested."""


class ConfigError(SpinPhononError):
    """Invalid or unknown configuration content."""


class NumericalError(SpinPhononError):
    """A numerical routine failed (eigensolver, fit, propagation)."""
