from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from sasvfusion.data.trials import TrialLabels
from sasvfusion.exceptions import ContractViolation
from sasvfusion.nn.numerics import bce_grad, bce_loss

CONVENTIONAL_LAMBDA = 0.5


@dataclass(frozen=True)
class LossConfig:
    """Weight of the SASV term; the CM term gets ``1 - lam``."""
    lam: float = CONVENTIONAL_LAMBDA

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ContractViolation(f"LossConfig.lam must lie in [0, 1], got {self.lam}")


def label_arrays(labels: Union[TrialLabels, Sequence[TrialLabels]]) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(labels, TrialLabels):
        labels = [labels]
    y_sasv = np.array([l.y_sasv for l in labels], dtype=np.float64)
    y_cm = np.array([l.y_cm for l in labels], dtype=np.float64)
    return y_sasv, y_cm


def total_loss(trace, labels, cfg: LossConfig = LossConfig(), reduction: str = "mean"):
    """
    Weighted multi-task BCE ``lam * BCE(sasv) + (1 - lam) * BCE(cm)`` from the logits.

    Parameters:
    trace (ForwardTrace): Forward pass over N trials.
    labels (TrialLabels or list of TrialLabels): One per trial.
    cfg (LossConfig): Task weighting.
    reduction (str): "mean" or "sum" over the trials.

    Returns:
    tuple: (loss, d_sasv_logit, d_cm_logit); the gradients are per-trial arrays
    of the reduced loss.
    """
    y_sasv, y_cm = label_arrays(labels)
    n = len(trace)
    if y_sasv.shape != (n,):
        raise ContractViolation(f"total_loss: {y_sasv.size} labels for {n} trials")
    if reduction not in ("mean", "sum"):
        raise ContractViolation(f"total_loss: unknown reduction '{reduction}'")
    lam = cfg.lam
    per_trial = lam * np.asarray(bce_loss(trace.s_sasv_logit, y_sasv)) \
        + (1.0 - lam) * np.asarray(bce_loss(trace.s_cm_logit, y_cm))
    scale = 1.0 / n if reduction == "mean" else 1.0
    d_sasv = lam * bce_grad(trace.s_sasv_logit, y_sasv) * scale
    d_cm = (1.0 - lam) * bce_grad(trace.s_cm_logit, y_cm) * scale
    return float(per_trial.sum() * scale), d_sasv, d_cm
