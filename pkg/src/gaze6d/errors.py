"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Invalid geometric input (bad intrinsics, degenerate ray, frame mixup...)."""


class InvalidIntrinsicsError(GeometryError):
    pass


class BehindCameraError(GeometryError):
    pass


class RayParallelError(GeometryError):
    pass


class FrameMismatchError(GeometryError):
    pass


class GimbalLockError(GeometryError):
    pass


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass
