"""Exception hierarchy shared by the library and the CLI."""


class EgodynError(Exception):
    """Base class for all package errors."""


class IngestError(EgodynError):
    """Input data cannot be used (unreadable, wrong file, duplicate keys)."""


class AnalysisError(EgodynError):
    """A metric or statistic cannot be computed on the given data."""


class ConfigError(EgodynError):
    """Invalid run configuration or missing input paths."""
