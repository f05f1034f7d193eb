"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ArtifactError(Exception):
    exit_code = 1


class ConfigError(ArtifactError):
    """Invalid or inconsistent configuration / input data."""

    exit_code = 2


class ModelError(ConfigError):
    """Material or coefficient data that cannot define a model."""


class NumericalError(ArtifactError):
    """Non-finite values or a failed numerical procedure."""

    exit_code = 3


class AssumptionError(ArtifactError):
    """A structural modelling assumption does not hold for the setup."""

    exit_code = 4
