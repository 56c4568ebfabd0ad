"""Exception hierarchy shared by all homsim modules."""


class HomsimError(Exception):
    """Base class for every error raised by homsim."""


class DomainError(HomsimError, ValueError):
    """A parameter lies outside its physical domain."""


class DegenerateInputError(HomsimError, ValueError):
    """Inputs make a normalization or ratio undefined."""


class PreconditionError(HomsimError, ValueError):
    """Input data violates an ordering or shape precondition."""


class ConfigError(HomsimError, ValueError):
    """Inconsistent configuration, e.g. mismatched histogram binning."""


class BinWidthError(ConfigError):
    """Bin width too coarse to resolve the requested frequency."""


class FormatError(HomsimError, ValueError):
    """Malformed event file or data file."""
