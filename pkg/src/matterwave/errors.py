"""Exception hierarchy.

Physics failures (collapse, empty selection, non-convergence) derive from
:class:`PhysicsError`; malformed input derives from :class:`InputError`.
The CLI maps the former to exit status 1 and the latter to 2.
"""


class MatterWaveError(Exception):
    pass


class InputError(MatterWaveError, ValueError):
    pass


class PhysicsError(MatterWaveError):
    pass


class InvalidParameterError(InputError):
    pass


class GridMismatchError(InputError):
    pass


class OutOfRangeError(InputError):
    pass


class GeometryError(InputError):
    pass


class DegenerateSpectrumError(PhysicsError):
    pass


class InsufficientWellError(PhysicsError):
    pass


class EmptySelectionError(PhysicsError):
    pass


class NoSelectablePacketError(PhysicsError):
    pass


class ProjectionCollapseError(PhysicsError):
    pass


class ConfigError(InputError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SnapshotError(InputError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


class SnapshotVersionError(SnapshotError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"snapshot format version {found} is not supported (expected {expected})")
