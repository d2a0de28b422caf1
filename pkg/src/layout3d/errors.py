"""Exception hierarchy used across the toolkit."""


class Layout3DError(Exception):
    """Base class for all toolkit errors."""


class NonVerticalWall(Layout3DError):
    """No corner ordering turns the quad into a valid vertical wall."""


class DegenerateWall(Layout3DError):
    """Wall collapses: lower edge or height below tolerance."""


class DegenerateNormal(Layout3DError):
    """Wall normal has no usable horizontal component."""


class FloorMisaligned(Layout3DError):
    """Lower wall corners are not on the z = 0 floor plane."""


class EmptyCloud(Layout3DError):
    """Operation requires a non-empty point cloud."""


class EmptyGrid(Layout3DError):
    """Operation requires a grid with at least one occupied cell."""


class EmptyLevel(Layout3DError):
    """A target's grid level has no candidate locations."""


class UnknownCategory(Layout3DError):
    """Category id missing from the category-to-level map."""


class LengthMismatch(Layout3DError):
    """Parallel input arrays disagree in length."""


class ArityMismatch(Layout3DError):
    """Parameter rows do not match the scheme's parameter count."""


class DimensionMismatch(Layout3DError):
    """MLP weight shapes do not chain or input width is wrong."""


class NoGroundTruth(Layout3DError):
    """Detection metrics need at least one ground-truth instance."""


class PlacementFailure(Layout3DError):
    """Synthetic object placement could not satisfy containment."""


class SceneAlignmentError(Layout3DError):
    """Prediction and ground-truth scene ids do not align."""
