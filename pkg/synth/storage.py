"""Writing a scene's artifacts to disk."""

import logging
from pathlib import Path
from typing import Dict, Union

from evaluation.plots import write_plots_csv
from raster.io import save_raster
from raster.utils import ensure_dir
from .scene import SynthScene

logger = logging.getLogger(__name__)

SCENE_FILES = {
    "dtm": "dtm.csr",
    "dsm": "dsm.csr",
    "truth": "truth.csr",
    "weak16": "weak16.csr",
    "land_mask": "land_mask.csr",
    "plots": "plots.csv",
}


def save_scene(scene: SynthScene, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write the scene rasters and plot table; returns artifact name -> path."""
    out = ensure_dir(out_dir)
    paths = {name: out / filename for name, filename in SCENE_FILES.items()}
    save_raster(scene.dtm, paths["dtm"])
    save_raster(scene.dsm, paths["dsm"])
    save_raster(scene.truth, paths["truth"])
    save_raster(scene.weak16, paths["weak16"])
    save_raster(scene.land_mask, paths["land_mask"])
    write_plots_csv(scene.plots, paths["plots"])
    logger.info("Saved scene artifacts to %s", out)
    return paths
