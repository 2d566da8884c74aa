"""Simulation and verification lab for loop-erased walks and wired
spanning forests on Z^d."""

__version__ = "0.1.0"

from .lattice import Box, Domain, Point, boundary, box, neighbors, origin_box
from .path_ops import InnerShell, Path, loop_erase
from .rng import RngStream

__all__ = [
    "__version__",
    "Box",
    "Domain",
    "InnerShell",
    "Path",
    "Point",
    "RngStream",
    "boundary",
    "box",
    "loop_erase",
    "neighbors",
    "origin_box",
]
