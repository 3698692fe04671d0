"""
Weak-label refinement
"""

from .prep import PrepConfig, prep_labels, apply_land_mask, weak_species_map, ExtentMismatchError
from .relabel import relabel_round2, conflict_map, label_stats

__all__ = ['PrepConfig', 'prep_labels', 'apply_land_mask', 'relabel_round2', 'conflict_map',
           'label_stats', 'weak_species_map', 'ExtentMismatchError']
