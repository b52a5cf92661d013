from dataclasses import dataclass

import numpy as np
import pandas as pd

from sasvfusion.data.trials import TrialLabel
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.metrics.scores import CLASS_ORDER, ScoreSet
from sasvfusion.utils import write_csv

logger = get_logger(__name__)


@dataclass
class Histogram:
    """Probability-normalised bin densities; ``empty`` marks a class without scores."""
    edges: np.ndarray
    density: np.ndarray
    count: int
    empty: bool = False

    @property
    def widths(self):
        return np.diff(self.edges)


def histogram(scores: ScoreSet, label, bins: int = 50, value_range=(0.0, 1.0), column: str = "s_sasv") -> Histogram:
    """
    Equal-width histogram of one class's scores, normalised so that density times width sums to 1.

    Scores outside ``value_range`` are counted in the outermost bins.
    """
    if bins < 1:
        raise ContractViolation("histogram: bins must be >= 1")
    lo, hi = value_range
    if not hi > lo:
        raise ContractViolation("histogram: empty value range")
    values = scores.of_class(TrialLabel(label), column)
    edges = np.linspace(lo, hi, bins + 1)
    if values.size == 0:
        return Histogram(edges, np.zeros(bins), 0, empty=True)
    counts, edges = np.histogram(np.clip(values, lo, hi), bins=bins, range=(lo, hi))
    density = counts / (values.size * np.diff(edges))
    return Histogram(edges, density, int(values.size))


def histogram_frame(scores: ScoreSet, bins: int = 50, column: str = "s_sasv") -> pd.DataFrame:
    """One row per bin: bin_left, bin_right and the density of each class."""
    hists = {label.value: histogram(scores, label, bins, column=column) for label in CLASS_ORDER}
    edges = hists[TrialLabel.TARGET.value].edges
    frame = pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:]})
    for name, h in hists.items():
        if h.empty:
            logger.warning(f"No {name} scores; its histogram column is all zeros")
        frame[name] = h.density
    return frame


def write_histograms(scores: ScoreSet, path, bins: int = 50, column: str = "s_sasv"):
    return write_csv(histogram_frame(scores, bins, column), path)
