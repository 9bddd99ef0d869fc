class VoxelforgeError(Exception):
    """Base class for library errors."""


class ShapeMismatchError(VoxelforgeError, ValueError):
    """Arrays or grid specs that must agree do not."""


class EmptyVolumeError(VoxelforgeError, ValueError):
    """A distance transform was requested on a volume with no occupied voxel."""


class FormatError(VoxelforgeError):
    """A file on disk is malformed, truncated or of the wrong kind."""


class NumericError(VoxelforgeError, FloatingPointError):
    """Non-finite values appeared during training."""
