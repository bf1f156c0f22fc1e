"""
Exception hierarchy for the aerial depth/segmentation pipeline.
Every domain error is a ValueError so callers that only guard against bad
input keep working.
"""


class AerodepthError(ValueError):
    """Base class for user-facing pipeline errors"""


class InvalidPoseError(AerodepthError):
    pass


class BehindCameraError(AerodepthError):
    pass


class InvalidDepthError(AerodepthError):
    pass


class ShapeError(AerodepthError):
    pass


class ConfigError(AerodepthError):
    pass


class ContractError(AerodepthError):
    pass


class TrajectoryError(AerodepthError):
    pass


class DatasetLoadError(AerodepthError):
    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class UnmappedLabelError(AerodepthError):
    def __init__(self, labels, mapping_name):
        self.labels = sorted(int(label) for label in labels)
        super().__init__(f"Labels {self.labels} have no target in class mapping '{mapping_name}'")


class FingerprintMismatchError(AerodepthError):
    pass


class DivergenceError(AerodepthError):
    pass


class ManifestError(AerodepthError):
    pass
