"""
Plot-based evaluation of species maps
"""

from .plots import PlotRecord, plot_dominant_class, read_plots_csv, write_plots_csv
from .metrics import ConfusionMatrix, evaluate_plots
from .report import emit_report, load_report_counts

__all__ = ['PlotRecord', 'plot_dominant_class', 'read_plots_csv', 'write_plots_csv',
           'ConfusionMatrix', 'evaluate_plots', 'emit_report', 'load_report_counts']
