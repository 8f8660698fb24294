"""
Exception hierarchy shared by every package.

The CLI maps ConfigError to exit code 2 and any other GlassboxError to exit code 3.
"""


class GlassboxError(Exception):
    """Base class for all errors raised by this project."""


class ConfigError(GlassboxError, ValueError):
    """Invalid configuration file, unknown key, or malformed override."""


class GeometryError(GlassboxError, ValueError):
    """Invalid box/ray description or a point that is not where it must be."""


class OpticsError(GlassboxError, ValueError):
    """Interface optics called outside its preconditions."""


class RenderError(GlassboxError, RuntimeError):
    """A ray tree that violates its structural invariants."""


class NonFiniteError(GlassboxError, FloatingPointError):
    """A NaN or infinity showed up; the message names where."""


class DatasetError(GlassboxError, OSError):
    """Missing, corrupt or inconsistent dataset files."""


class MeshError(GlassboxError, ValueError):
    """Mesh operations on empty or malformed meshes."""


class TrainingDivergedError(GlassboxError, RuntimeError):
    """Training produced a non-finite loss; the failing state was checkpointed."""

    def __init__(self, message: str, checkpoint_path: str = ""):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
