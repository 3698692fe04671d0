"""Seeded value-noise terrain."""

import numpy as np
from scipy import ndimage

OCTAVES = 4
BASE_CELL_M = 512
PERSISTENCE = 0.5


def value_noise(shape, rng: np.random.Generator, octaves: int = OCTAVES,
                base_cell: int = BASE_CELL_M, persistence: float = PERSISTENCE) -> np.ndarray:
    """Sum of cubic-interpolated random lattices, rescaled to [0, 1].

    Each octave halves the lattice spacing and the amplitude. Deterministic in ``rng``.
    """
    height, width = shape
    total = np.zeros(shape, dtype=np.float64)
    amplitude = 1.0
    cell = base_cell
    for _ in range(octaves):
        lattice = rng.random((height // cell + 3, width // cell + 3))
        rows = (np.arange(height, dtype=np.float64) + 0.5) / cell + 1.0
        cols = (np.arange(width, dtype=np.float64) + 0.5) / cell + 1.0
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        total += amplitude * ndimage.map_coordinates(lattice, [rr, cc], order=3, mode="nearest")
        amplitude *= persistence
        cell = max(cell // 2, 8)

    span = total.max() - total.min()
    if span <= 0:
        return np.zeros(shape, dtype=np.float64)
    return (total - total.min()) / span


def terrain(shape, rng: np.random.Generator, base_elevation_m: float, relief_m: float) -> np.ndarray:
    """Ground elevation: base plus value noise spanning exactly ``relief_m``."""
    return base_elevation_m + relief_m * value_noise(shape, rng)
