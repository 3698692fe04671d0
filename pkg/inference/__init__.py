"""
Full-map prediction with overlapping tiles
"""

from .tiling import InferConfig, Window, TilePlacement, TileConfigError, tile_plan
from .predict import predict_map, argmax_species, species_from_logits, write_preview, worker_count

__all__ = ['InferConfig', 'Window', 'TilePlacement', 'TileConfigError', 'tile_plan', 'predict_map',
           'argmax_species', 'species_from_logits', 'write_preview', 'worker_count']
