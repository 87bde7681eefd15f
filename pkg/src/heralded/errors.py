"""Exception hierarchy shared by all modules."""


class HeraldedError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(HeraldedError, ValueError):
    """An argument lies outside the validity range of a model."""

    def __init__(self, parameter, value, valid):
        self.parameter = parameter
        self.value = value
        self.valid = valid
        super().__init__(f"{parameter}={value!r} outside valid range {valid}")


class ConfigError(HeraldedError, ValueError):
    """Inconsistent or invalid configuration."""


class NoSolutionError(HeraldedError, ValueError):
    pass


class GridError(HeraldedError, ValueError):
    """Spectral grid too coarse or too narrow for the requested quantity."""


class EstimateError(HeraldedError, ValueError):
    """An estimator is undefined for the given inputs."""
