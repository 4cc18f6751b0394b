"""Exception hierarchy shared across the package."""


class SbmRomError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SbmRomError, ValueError):
    """Caller violated an input contract (bad shapes, empty sets, bad values)."""


class MeshFormatError(InvalidInputError):
    """Mesh file could not be parsed or tagged."""


class UnderResolvedError(SbmRomError):
    """Background mesh is too coarse for the embedded geometry."""


class SingularSystemError(SbmRomError):
    """Assembled or factorized system is structurally/numerically singular."""


class RomStabilityError(SingularSystemError):
    """Reduced saddle-point system is singular; velocity space likely needs
    supremizer enrichment."""


class ArtifactMismatchError(SbmRomError):
    """Persisted offline artifacts do not match the current mesh/config."""


class ConfigError(SbmRomError):
    """Study configuration failed schema or path validation."""
