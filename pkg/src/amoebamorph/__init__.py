"""Morphological amoebas: image-adaptive structuring elements and the filters,
level-set schemes and texture descriptors built on them."""

__version__ = "0.1.0"

from .grid import Image, PGMError, pgm_read, pgm_write, gaussian_smooth
from .engine import (
    AmoebaMetricSpec, Amoeba, AmoebaField, PixelIndex, LocalGraph,
    edge_weight, compute_amoeba, compute_field, extract_local_graph,
)
from .filters import RankRule, FixedDisk, SelfGenerated, amoeba_rank_filter

__all__ = [
    "Image", "PGMError", "pgm_read", "pgm_write", "gaussian_smooth",
    "AmoebaMetricSpec", "Amoeba", "AmoebaField", "PixelIndex", "LocalGraph",
    "edge_weight", "compute_amoeba", "compute_field", "extract_local_graph",
    "RankRule", "FixedDisk", "SelfGenerated", "amoeba_rank_filter",
]
