"""Evidential top-view grid mapping from range images and labeled point sets.

The package builds Dempster-Shafer occupancy and ground-surface grid maps.
Evidence from individual range measurements is accumulated per sensor-aligned
grid column as log "non-relevance" sums, warped into a common Cartesian frame
and converted into basic belief assignments over two frames of discernment:
an occupancy frame (object classes, free space, void) and a ground frame
(street, sidewalk, other ground).
"""

from .evidential import (
    OCCUPANCY,
    GROUND,
    BBA,
    not_relevant,
    bba_from_log_accumulator,
    pignistic,
    validate,
)
from .grids import GridSpec, LayeredGrid, warp_to_cartesian

__all__ = [
    "OCCUPANCY",
    "GROUND",
    "BBA",
    "not_relevant",
    "bba_from_log_accumulator",
    "pignistic",
    "validate",
    "GridSpec",
    "LayeredGrid",
    "warp_to_cartesian",
]

__version__ = "0.1.0"
