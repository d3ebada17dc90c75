"""Exception types shared across the toolkit.

Everything raised for bad user input derives from ToolError so the CLI can
map expected failures to exit code 2 and keep exit code 3 for genuine bugs.
"""


class ToolError(Exception):
    """Base class for anticipated failures caused by inputs or parameters."""


class ParameterError(ToolError):
    """An argument value is outside its documented domain."""


class ShapeMismatchError(ToolError):
    """Two grids/masks/images that must share dimensions do not."""


class GridBoundsError(ToolError):
    """A voxel index lies outside the grid."""


class FormatError(ToolError):
    """A file does not match its declared on-disk format."""


class LabelRangeError(ToolError):
    """Semantic labels exceed the declared class count."""

    def __init__(self, offending, num_classes):
        self.offending = sorted(int(v) for v in offending)
        self.num_classes = int(num_classes)
        super().__init__(
            f"labels {self.offending} out of range for {self.num_classes} classes"
        )


class GridTooLargeError(ToolError):
    """Brute-force traversal refused; pass the override to force it."""
