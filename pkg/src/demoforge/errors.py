"""Failure types raised across the engine.

Everything inherits from DemoforgeError so callers can catch the whole family;
the pipeline additionally distinguishes ConfigError (bad run configuration,
CLI exit code 2) from per-demo failures that are logged and skipped.
"""


class DemoforgeError(Exception):
    pass


class ConfigError(DemoforgeError):
    """Run configuration is missing, malformed, or inconsistent."""


class ParseError(DemoforgeError):
    """A mesh, annotation, or binary file does not match its format."""


class IoError(DemoforgeError):
    """Dataset files could not be written or read back."""


class DegenerateMesh(DemoforgeError):
    """Mesh contains a face of effectively zero area."""


class DegenerateCovariance(DemoforgeError):
    """Principal axes are not unique (two eigenvalues coincide)."""


class NoGraspFound(DemoforgeError):
    """Gripper channel never closes for three consecutive steps."""


class KeypointOffSurface(DemoforgeError):
    """Annotated keypoint lies too far from the mesh surface."""


class EmptyResult(DemoforgeError):
    """An operation that must return points returned none."""


class TooFewPoints(DemoforgeError):
    """Input cloud is smaller than the requested sample size."""


class IndexOutOfRange(DemoforgeError):
    """A replay index points outside the source demonstration."""


class EmptyMask(DemoforgeError):
    """Target view contains no foreground pixels to match against."""


class NoVisibleNeighbors(DemoforgeError):
    """No reference vertex of the keypoint is visible in any view."""


class ZeroWeight(DemoforgeError):
    """Every candidate match weight clamped to zero; transfer undefined."""


class NotGrasped(DemoforgeError):
    """Skill segment contains an open-gripper step."""


class CollisionDetected(DemoforgeError):
    """A planned transition waypoint failed the collision callback."""

    def __init__(self, index: int):
        super().__init__(f"collision at waypoint {index}")
        self.index = index


class BehindCamera(DemoforgeError):
    """Point projects behind the image plane."""


class JointLimit(DemoforgeError):
    """Joint vector violates the chain's limits."""


class IkUnreachable(DemoforgeError):
    """Iterative IK did not converge within the iteration budget."""
