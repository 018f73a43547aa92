"""Exception types shared across the library."""


class DrrhoError(Exception):
    """Base class for all library-specific errors."""


class ConfigError(DrrhoError):
    """A run configuration or constructor argument is invalid."""


class FormatError(DrrhoError):
    """An artifact file is structurally invalid (bad magic, truncation,
    or manifest/payload disagreement)."""


class VersionError(DrrhoError):
    """An artifact file was written by an incompatible format version."""


class ChecksumError(DrrhoError):
    """An artifact file's payload does not match its manifest checksum."""


class DegenerateEmbeddingError(DrrhoError):
    """An encoder produced a (near-)zero vector that cannot be normalized."""


class StateError(DrrhoError):
    """A trainer operation was called out of order or in the wrong mode."""


class TrainingError(DrrhoError):
    """Training aborted, e.g. on non-finite gradients."""


class SolverError(DrrhoError):
    """A numerical solver failed to meet its tolerance."""
