"""Privacy-preserving spatial counting over two non-colluding servers.

Two schemes share one toolkit: an 8-ary DPF over Gray-coded octree cell paths
(cancel/insert updates) and an incremental DPF over KD-tree prefixes with
per-level payloads (move-bundle updates).  A deterministic in-process protocol
simulator, a plaintext counting oracle and a benchmark CLI sit on top.
"""

from .encoding import GridConfig, KdTree, SpatialPoint
from .prg import DEFAULT_LAMBDA, GROUP_MASK

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAMBDA",
    "GROUP_MASK",
    "GridConfig",
    "KdTree",
    "SpatialPoint",
    "__version__",
]
