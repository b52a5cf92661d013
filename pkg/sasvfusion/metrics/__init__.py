from .scores import ScoreSet, read_scores, write_scores
from .evaluator import (
    ADcfConfig,
    ErrorRates,
    MetricStrategy,
    MinADcfMetric,
    SasvEerMetric,
    ScoreEvaluator,
    default_metrics,
    eer,
    error_rates_at,
    metric_by_name,
    min_adcf,
    sasv_eer,
    spf_eer,
    sv_eer,
    write_metric_report,
)
from .bootstrap import CiResult, bootstrap_ci
from .histogram import Histogram, histogram, histogram_frame, write_histograms
