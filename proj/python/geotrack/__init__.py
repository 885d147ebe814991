"""Geodesic multi-hypothesis body tracking on depth-camera meshes."""

from ._geotrack import *  # noqa: F401,F403
from ._geotrack import FormatError, IoError, UsageError, joint_names, eval_radii

__version__ = "0.1.0"
