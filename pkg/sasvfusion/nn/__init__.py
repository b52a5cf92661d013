from .numerics import (
    TReluParams,
    affine,
    relu,
    trelu,
    l2_normalize,
    sigmoid,
    bce_loss,
    cosine_score,
)
from .gradcheck import grad_check, GradCheckReport

__all__ = [
    "TReluParams",
    "affine",
    "relu",
    "trelu",
    "l2_normalize",
    "sigmoid",
    "bce_loss",
    "cosine_score",
    "grad_check",
    "GradCheckReport",
]
