"""
Training: focal loss, augmentation, tile sampling and the epoch loop
"""

from .loss import FocalConfig, class_weights, focal_loss, ClassFrequencyError
from .augment import CowMixConfig, dihedral_augment, dihedral_inverse, cow_mask, cow_batch_mix
from .dataset import (TrainingData, training_data, normalize_features, validation_windows,
                      sample_train_windows, RegionError, NoLabeledPixelsError)
from .trainer import TrainConfig, EpochMetrics, train_epochs, validation_loss, write_metrics_csv, read_metrics_csv

__all__ = ['FocalConfig', 'class_weights', 'focal_loss', 'ClassFrequencyError', 'CowMixConfig',
           'dihedral_augment', 'dihedral_inverse', 'cow_mask', 'cow_batch_mix', 'TrainingData',
           'training_data', 'normalize_features', 'validation_windows', 'sample_train_windows',
           'RegionError', 'NoLabeledPixelsError', 'TrainConfig', 'EpochMetrics', 'train_epochs',
           'validation_loss', 'write_metrics_csv', 'read_metrics_csv']
