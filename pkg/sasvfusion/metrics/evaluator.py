"""Detection metrics over a ScoreSet.

Thresholds are swept over the cuts between consecutive distinct scores. A trial
is accepted iff its score is strictly greater than the threshold, so at cut
``k`` exactly the scores ranked ``>= k`` among the distinct values are accepted.
Error rates are counted per cut, and the threshold reported for a cut is the
midpoint of its two neighbouring scores (or a sentinel one unit beyond the
extreme scores).
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from sasvfusion.data.trials import TrialLabel
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.metrics.scores import CLASS_ORDER, ScoreSet
from sasvfusion.utils import write_tsv

logger = get_logger(__name__)

TAR, NON, SPF = (label.value for label in CLASS_ORDER)
REPORT_COLUMNS = ["metric", "point", "ci_lower", "ci_upper", "threshold"]


@dataclass(frozen=True)
class ADcfConfig:
    """Priors and costs of the architecture-agnostic detection cost function."""
    pi_tar: float = 0.9405
    pi_non: float = 0.0095
    pi_spf: float = 0.05
    c_miss: float = 1.0
    c_fa_non: float = 10.0
    c_fa_spf: float = 10.0

    def __post_init__(self):
        priors = (self.pi_tar, self.pi_non, self.pi_spf)
        if min(priors) <= 0 or abs(sum(priors) - 1.0) > 1e-12:
            raise ContractViolation(f"a-DCF priors must be positive and sum to 1, got {priors}")
        if min(self.c_miss, self.c_fa_non, self.c_fa_spf) <= 0:
            raise ContractViolation("a-DCF costs must be positive")

    @property
    def normalizer(self):
        return min(self.c_miss * self.pi_tar, self.c_fa_non * self.pi_non + self.c_fa_spf * self.pi_spf)


@dataclass(frozen=True)
class ErrorRates:
    threshold: float
    p_miss: float
    p_fa_non: float
    p_fa_spf: float


def _require(values, label):
    if values.size == 0:
        raise ContractViolation(f"the {label} class is empty")
    return values


def error_rates_at(scores: ScoreSet, t: float, column: str = "s_sasv") -> ErrorRates:
    """Miss and false-alarm rates at threshold ``t``; accept iff score > t."""
    classes = scores_by_class(scores, column)
    tar, non, spf = (_require(classes[c], c) for c in (TAR, NON, SPF))
    return ErrorRates(float(t), float(np.mean(tar <= t)), float(np.mean(non > t)), float(np.mean(spf > t)))


def scores_by_class(scores: ScoreSet, column: str = "s_sasv") -> Dict[str, np.ndarray]:
    values = scores.column(column)
    return {label.value: values[scores.mask(label)] for label in CLASS_ORDER}


# --- threshold sweep -----------------------------------------------------------

class _Sweep:
    """Distinct sorted scores of the pooled classes and the threshold of every cut."""

    def __init__(self, *groups):
        self.values = np.unique(np.concatenate(groups))
        u = self.values
        self.thresholds = np.concatenate([[u[0] - 1.0], 0.5 * (u[:-1] + u[1:]), [u[-1] + 1.0]])

    def rejected(self, x):
        """Fraction of ``x`` rejected at each cut k = 0..K (non-decreasing in k)."""
        rank = np.searchsorted(self.values, x)
        counts = np.bincount(rank, minlength=self.values.size)
        return np.concatenate([[0], np.cumsum(counts)]) / x.size


def eer(targets, impostors) -> Tuple[float, float]:
    """
    Equal error rate between miss rate of ``targets`` and false-alarm rate of ``impostors``.

    Returns:
    tuple: (eer, threshold). The first cut where the miss rate reaches the
    false-alarm rate gives the EER directly when both are equal; otherwise both
    rate curves are interpolated linearly from the previous cut.
    """
    targets = _require(np.asarray(targets, dtype=np.float64), TAR)
    impostors = _require(np.asarray(impostors, dtype=np.float64), "impostor")
    sweep = _Sweep(targets, impostors)
    frr = sweep.rejected(targets)
    far = 1.0 - sweep.rejected(impostors)
    gap = far - frr
    k = int(np.argmax(gap <= 0))
    if gap[k] == 0:
        return float(frr[k]), float(sweep.thresholds[k])
    alpha = gap[k - 1] / (gap[k - 1] - gap[k])
    rate = frr[k - 1] + alpha * (frr[k] - frr[k - 1])
    t = sweep.thresholds[k - 1] + alpha * (sweep.thresholds[k] - sweep.thresholds[k - 1])
    return float(rate), float(t)


def _pooled(classes, impostors):
    return np.concatenate([classes[c] for c in impostors])


def sasv_eer(scores: ScoreSet, column: str = "s_sasv") -> Tuple[float, float]:
    """EER of targets against non-target and spoof trials pooled."""
    classes = scores_by_class(scores, column)
    return eer(classes[TAR], _pooled(classes, (NON, SPF)))


def sv_eer(scores: ScoreSet, column: str = "s_sasv") -> Tuple[float, float]:
    """EER of targets against zero-effort non-targets only."""
    classes = scores_by_class(scores, column)
    return eer(classes[TAR], classes[NON])


def spf_eer(scores: ScoreSet, column: str = "s_sasv") -> Tuple[float, float]:
    """EER of targets against spoofs only."""
    classes = scores_by_class(scores, column)
    return eer(classes[TAR], classes[SPF])


def adcf_curve(tar, non, spf, cfg: ADcfConfig = ADcfConfig()):
    """Normalised a-DCF at every cut, with the cut thresholds."""
    tar, non, spf = _require(tar, TAR), _require(non, NON), _require(spf, SPF)
    sweep = _Sweep(tar, non, spf)
    p_miss = sweep.rejected(tar)
    p_fa_non = 1.0 - sweep.rejected(non)
    p_fa_spf = 1.0 - sweep.rejected(spf)
    cost = (cfg.c_miss * cfg.pi_tar * p_miss
            + cfg.c_fa_non * cfg.pi_non * p_fa_non
            + cfg.c_fa_spf * cfg.pi_spf * p_fa_spf) / cfg.normalizer
    return cost, sweep.thresholds


def min_adcf(scores: ScoreSet, cfg: ADcfConfig = ADcfConfig(), column: str = "s_sasv") -> Tuple[float, float]:
    """
    Minimum normalised a-DCF over all thresholds.

    Returns:
    tuple: (value, threshold); ties resolve to the smallest threshold.
    """
    classes = scores_by_class(scores, column)
    cost, thresholds = adcf_curve(classes[TAR], classes[NON], classes[SPF], cfg)
    k = int(np.argmin(cost))
    return float(cost[k]), float(thresholds[k])


# --- metric strategies ---------------------------------------------------------

# Abstract Base Class for Metric Strategy
# ---------------------------------------
# Each metric reduces per-class score arrays to a (value, threshold) pair.
class MetricStrategy(ABC):
    name: str = "metric"

    @abstractmethod
    def compute_classes(self, classes: Dict[str, np.ndarray]) -> Tuple[float, float]:
        pass

    def compute(self, scores: ScoreSet, column: str = "s_sasv") -> Tuple[float, float]:
        return self.compute_classes(scores_by_class(scores, column))


class SasvEerMetric(MetricStrategy):
    """EER of targets against a pool of impostor classes (both by default)."""

    def __init__(self, impostors: Iterable[str] = (NON, SPF), name: str = "sasv_eer"):
        self.impostors = tuple(TrialLabel(c).value for c in impostors)
        self.name = name

    def compute_classes(self, classes):
        return eer(classes[TAR], _pooled(classes, self.impostors))


class MinADcfMetric(MetricStrategy):
    name = "min_adcf"

    def __init__(self, cfg: Optional[ADcfConfig] = None):
        self.cfg = cfg or ADcfConfig()

    def compute_classes(self, classes):
        cost, thresholds = adcf_curve(classes[TAR], classes[NON], classes[SPF], self.cfg)
        k = int(np.argmin(cost))
        return float(cost[k]), float(thresholds[k])


def metric_by_name(name: str, adcf: Optional[ADcfConfig] = None) -> MetricStrategy:
    if isinstance(name, MetricStrategy):
        return name
    metrics = {
        "sasv_eer": lambda: SasvEerMetric(),
        "sv_eer": lambda: SasvEerMetric((NON,), "sv_eer"),
        "spf_eer": lambda: SasvEerMetric((SPF,), "spf_eer"),
        "min_adcf": lambda: MinADcfMetric(adcf),
    }
    if name not in metrics:
        raise ContractViolation(f"unknown metric '{name}', expected one of {sorted(metrics)}")
    return metrics[name]()


def default_metrics(adcf: Optional[ADcfConfig] = None) -> List[MetricStrategy]:
    return [metric_by_name(n, adcf) for n in ("sasv_eer", "min_adcf", "sv_eer", "spf_eer")]


# Context Class for Score Evaluation
# ----------------------------------
# Runs each metric strategy with its bootstrap interval and collects report rows.
class ScoreEvaluator:
    def __init__(self, metrics: Optional[List[MetricStrategy]] = None, replicates: int = 1000,
                 level: float = 0.95, seed: int = 0, n_jobs: int = 1, column: str = "s_sasv"):
        self._metrics = metrics or default_metrics()
        self.replicates = replicates
        self.level = level
        self.seed = seed
        self.n_jobs = n_jobs
        self.column = column

    def set_metrics(self, metrics: List[MetricStrategy]):
        logger.debug("Switching evaluation metrics.")
        self._metrics = metrics

    def evaluate(self, scores: ScoreSet) -> pd.DataFrame:
        from sasvfusion.metrics.bootstrap import bootstrap_ci

        rows = []
        for metric in self._metrics:
            value, threshold = metric.compute(scores, self.column)
            if self.replicates > 0:
                ci = bootstrap_ci(scores, metric, self.replicates, self.level, self.seed,
                                  n_jobs=self.n_jobs, column=self.column)
                lower, upper = ci.lower, ci.upper
            else:
                lower = upper = float("nan")
            rows.append((metric.name, value, lower, upper, threshold))
            logger.info(f"{metric.name}: {value:.6f} [{lower:.6f}, {upper:.6f}] at threshold {threshold:.6f}")
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_metric_report(report: pd.DataFrame, path):
    return write_tsv(report, path, header=True)
