"""Evaluation report: an aligned text table plus a full-precision CSV."""

import csv
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from tabulate import tabulate

from raster.grid import CLASS_NAMES, NUM_CLASSES
from .metrics import ConfusionMatrix

logger = logging.getLogger(__name__)

CSV_CLASS_KEYS = ["background", "birch", "scots_pine", "norway_spruce"]


class EmptyEvaluationError(ValueError):
    pass


def format_table(cm: ConfusionMatrix) -> str:
    """Rows are predictions, columns the plot reference, with sums and scores on the margins."""
    headers = ["Predictions \\ Plots"] + list(CLASS_NAMES) + ["Sum", "Precision", "F1 Score"]
    rows: List[List[str]] = []
    for r in range(NUM_CLASSES):
        rows.append([CLASS_NAMES[r]] + [str(int(c)) for c in cm.counts[r]]
                    + [str(int(cm.row_sums[r])), f"{cm.precision[r]:.2f}", f"{cm.f1[r]:.2f}"])
    rows.append(["Sum"] + [str(int(c)) for c in cm.col_sums]
                + [str(cm.total), f"OA: {cm.overall_accuracy:.2f}", f"Macro F1: {cm.macro_f1:.2f}"])
    rows.append(["Recall"] + [f"{v:.2f}" for v in cm.recall] + ["", "", ""])
    return tabulate(rows, headers=headers, tablefmt="simple", stralign="right", disable_numparse=True)


def emit_report(cm: ConfusionMatrix, path: Union[str, Path]) -> None:
    """Write the text table to ``path`` and counts + metrics to ``path`` with a .csv suffix."""
    if cm.total == 0:
        raise EmptyEvaluationError("empty evaluation")
    path = Path(path)
    path.write_text(format_table(cm) + "\n")

    csv_path = path.with_suffix(".csv")
    with open(csv_path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(["row"] + CSV_CLASS_KEYS)
        for r in range(NUM_CLASSES):
            writer.writerow([f"pred_{CSV_CLASS_KEYS[r]}"] + [int(c) for c in cm.counts[r]])
        writer.writerow(["precision"] + [repr(float(v)) for v in cm.precision])
        writer.writerow(["recall"] + [repr(float(v)) for v in cm.recall])
        writer.writerow(["f1"] + [repr(float(v)) for v in cm.f1])
        writer.writerow(["overall_accuracy", repr(cm.overall_accuracy)])
        writer.writerow(["macro_f1", repr(cm.macro_f1)])
    logger.info("Wrote evaluation report to %s and %s", path, csv_path)


def load_report_counts(csv_path: Union[str, Path]) -> ConfusionMatrix:
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    with open(csv_path, 'r', newline='') as f:
        for row in csv.reader(f):
            if row and row[0].startswith("pred_"):
                counts[CSV_CLASS_KEYS.index(row[0][len("pred_"):])] = [int(v) for v in row[1:]]
    return ConfusionMatrix(counts)
