"""Exception hierarchy shared by the pipeline and the CLI exit-code mapping."""


class PfhaError(Exception):
    """Base class for all engine errors."""


class ConfigError(PfhaError):
    """Malformed or inconsistent configuration."""


class DataError(PfhaError):
    """Input file missing, unparsable, or violating a schema invariant."""


class NumericError(PfhaError):
    """Non-finite or non-convergent numerical result."""
