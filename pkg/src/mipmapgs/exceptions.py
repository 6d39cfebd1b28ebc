class MipmapGSError(ValueError):
    """Base class for all errors raised by this package."""


class DegenerateCovariance(MipmapGSError):
    pass


class InvalidZoom(MipmapGSError):
    pass


class InvalidFactor(MipmapGSError):
    pass


class DimensionMismatch(MipmapGSError):
    pass


class TooSmall(MipmapGSError):
    pass


class NonFiniteGradient(MipmapGSError):
    pass


class EmptyScene(MipmapGSError):
    pass


class EmptyViewSet(MipmapGSError):
    pass


class InvalidConfig(MipmapGSError):
    pass


class EmptySceneWarning(UserWarning):
    """Pruning would have removed every primitive and was skipped."""


class SceneFormatError(MipmapGSError):
    """A scene or camera file could not be parsed."""
