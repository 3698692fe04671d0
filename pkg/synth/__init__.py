"""
Procedural synthetic forest scenes
"""

from .scene import (SceneSpec, SynthScene, TreeTable, gen_scene, degrade_labels, sample_plots,
                    block_majority, SceneSpecError, PlotPlacementError)
from .storage import save_scene

__all__ = ['SceneSpec', 'SynthScene', 'TreeTable', 'gen_scene', 'degrade_labels', 'sample_plots',
           'block_majority', 'save_scene', 'SceneSpecError', 'PlotPlacementError']
