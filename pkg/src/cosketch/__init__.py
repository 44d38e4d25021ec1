"""cosketch: real-time collaborative drawing with mask-guided stylization.

Multi-user sketches on a shared canvas are clustered into blobs, converted
into formal intent (concave-hull masks, edge maps) and contextual intent
(descriptor-driven style selection), transformed by a pluggable two-stage
generation backend, and composited back with seam-aware feathering. The
scheduler partitions the canvas into tiles so disjoint regions generate
concurrently.
"""

from .config import ServiceConfig
from .errors import CosketchError

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "CosketchError", "__version__"]
