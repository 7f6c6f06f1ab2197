"""Ground segmentation of 3D LIDAR frames with a two-layer Gaussian process.

Points are binned on a polar grid; per-segment lowest points are modeled by
a non-stationary GP whose log length-scales come from a second GP trained on
pseudo-inputs placed on fitted line pieces.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .pipeline import Label, LabeledFrame, SegmentationConfig, segment_frame

__all__ = ["BACKEND", "Label", "LabeledFrame", "SegmentationConfig", "segment_frame",
           "__version__"]
