"""Exception types shared across the package."""


class TpsgeomError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TpsgeomError):
    """Invalid configuration value (bad flag, option out of range, unknown name)."""


class DegenerateShape(TpsgeomError):
    """Geometry too degenerate to work with (zero area, self-overlap, collapsed side)."""


class MalformedAnnotation(TpsgeomError):
    """Annotation record that cannot be parsed into a text instance."""


class SingularFit(TpsgeomError):
    """Least-squares system too ill-conditioned to produce usable parameters."""


class EmptyCorpus(TpsgeomError):
    """No usable instances were found in the input."""


class IoError(TpsgeomError):
    """File could not be read or written."""
