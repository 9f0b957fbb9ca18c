"""Exception types raised across the package."""


class InvalidSpecError(ValueError):
    """A source description does not define a valid model."""


class OutOfRegionError(ValueError):
    """A distortion tuple lies outside the region where a formula is valid."""


class NoClosedFormError(OutOfRegionError):
    """No closed form applies; use the numerical solver instead."""


class InfeasibleError(ValueError):
    """The optimization problem has no finite-rate feasible point."""


class UnsupportedTransformError(ValueError):
    """No structural rate mapping exists between two architectures."""


class ConfigError(ValueError):
    """A configuration file is malformed.

    Parameters
    ----------
    message : str
        Human readable diagnostic.
    key : str, optional
        Dotted ``section.key`` name of the offending entry.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
