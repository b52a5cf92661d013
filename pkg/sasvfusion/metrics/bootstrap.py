from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.metrics.evaluator import metric_by_name, scores_by_class
from sasvfusion.metrics.scores import ScoreSet

logger = get_logger(__name__)


@dataclass(frozen=True)
class CiResult:
    point: float
    lower: float
    upper: float
    replicates: int
    level: float


def _replicate(metric, classes, seed, r):
    rng = np.random.default_rng([seed, r])
    resampled = {}
    for label, values in classes.items():
        n = values.size
        resampled[label] = values[rng.integers(0, n, size=n)] if n else values
    return metric.compute_classes(resampled)[0]


def bootstrap_ci(scores: ScoreSet, metric="sasv_eer", replicates: int = 1000, level: float = 0.95,
                 seed: int = 0, n_jobs: int = 1, column: str = "s_sasv", adcf=None) -> CiResult:
    """
    Percentile bootstrap interval of a metric, resampling each class separately.

    Parameters:
    scores (ScoreSet): Scores to resample.
    metric (str or MetricStrategy): "sasv_eer", "min_adcf", "sv_eer", "spf_eer" or a strategy.
    replicates (int): Number of resamples.
    level (float): Confidence level in (0, 1).
    seed (int): Replicate r draws from the stream (seed, r).
    n_jobs (int): joblib workers; results do not depend on it.
    column (str): Score column to evaluate.
    adcf (ADcfConfig, optional): Costs for "min_adcf".

    Returns:
    CiResult: Point estimate on the full set and the interval bounds.
    """
    if replicates < 1:
        raise ContractViolation("bootstrap_ci: replicates must be >= 1")
    if not 0.0 < level < 1.0:
        raise ContractViolation("bootstrap_ci: level must lie in (0, 1)")
    metric = metric_by_name(metric, adcf)
    classes = scores_by_class(scores, column)
    small = [label for label, values in classes.items() if 0 < values.size < 2]
    if small:
        raise ContractViolation(f"bootstrap_ci: classes {small} need at least two scores")
    point = metric.compute_classes(classes)[0]
    values = Parallel(n_jobs=n_jobs)(delayed(_replicate)(metric, classes, seed, r) for r in range(replicates))
    values = np.asarray(values, dtype=np.float64)
    alpha = 1.0 - level
    lower, upper = np.percentile(values, [100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)])
    logger.debug(f"bootstrap {metric.name}: {point:.6f} [{lower:.6f}, {upper:.6f}] over {replicates} replicates")
    return CiResult(float(point), float(lower), float(upper), replicates, level)
