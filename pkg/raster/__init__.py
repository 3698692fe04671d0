"""
Georeferenced raster grids, file formats and image kernels
"""

from .grid import (GeoRef, FloatGrid, LabelGrid, crop, BACKGROUND, BIRCH, SCOTS_PINE,
                   NORWAY_SPRUCE, UNLABELED, NUM_CLASSES, CLASS_NAMES)
from .io import load_raster, save_raster, load_ascii_grid, save_ascii_grid
from .filters import compute_chm, gaussian_blur, median_filter

__all__ = ['GeoRef', 'FloatGrid', 'LabelGrid', 'crop', 'load_raster', 'save_raster',
           'load_ascii_grid', 'save_ascii_grid', 'compute_chm', 'gaussian_blur', 'median_filter',
           'BACKGROUND', 'BIRCH', 'SCOTS_PINE', 'NORWAY_SPRUCE', 'UNLABELED', 'NUM_CLASSES',
           'CLASS_NAMES']
