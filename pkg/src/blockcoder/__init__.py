"""blockcoder: turn a webpage design raster into HTML/CSS.

The pipeline divides the design into grid-aligned blocks along solid
dividing lines, generates code per block through a chat-completion
client, assembles the blocks with absolute positioning and (context
permitting) model-based merging, and keeps the candidate with the better
reference-free verify score. An evaluation toolkit (DOM-structure
recall, pixel MAE, embedding similarity) supports benchmarking.
"""

__version__ = "0.1.0"

from .geometry import BBox, Line, bbox_intersects, bbox_union, line_crosses_bbox
from .raster import Raster

__all__ = [
    "__version__",
    "BBox",
    "Line",
    "Raster",
    "bbox_intersects",
    "bbox_union",
    "line_crosses_bbox",
]
