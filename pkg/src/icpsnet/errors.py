"""Exception types raised across the package."""


class IcpsError(Exception):
    """Base class for all package errors."""


class ZeroNormQuaternion(IcpsError, ValueError):
    pass


class NonUnitQuaternion(IcpsError, ValueError):
    pass


class DegenerateBounds(IcpsError, ValueError):
    pass


class EmptyInput(IcpsError, ValueError):
    pass


class InvalidConfig(IcpsError, ValueError):
    pass


class UnknownScene(IcpsError, KeyError):
    pass


class ZeroTangent(IcpsError, ValueError):
    pass


class PoseOutsideScene(IcpsError, ValueError):
    pass


class InvalidIntrinsics(IcpsError, ValueError):
    pass


class ZeroDirection(IcpsError, ValueError):
    pass


class OriginOutsideBox(IcpsError, ValueError):
    pass


class ShapeMismatch(IcpsError, ValueError):
    pass


class UnsupportedPadding(IcpsError, ValueError):
    pass


class BatchTooSmall(IcpsError, ValueError):
    pass


class InvalidRate(IcpsError, ValueError):
    pass


class NonOneHotLabel(IcpsError, ValueError):
    pass


class NonScalarOutput(IcpsError, ValueError):
    pass


class CheckpointError(IcpsError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class ModelKindMismatch(CheckpointError):
    pass


class SceneTooSmall(IcpsError, ValueError):
    pass


class MissingRegressor(IcpsError, LookupError):
    pass


class ImageFormatError(IcpsError, ValueError):
    pass
