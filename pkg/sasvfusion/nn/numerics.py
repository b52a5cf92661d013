"""Dense arithmetic, activations, losses and their analytic gradients.

Every operation accepts either a single vector (shape ``(d,)``) or a batch of
row vectors (shape ``(n, d)``).  All arithmetic is float64.
"""
from dataclasses import dataclass, field

import numpy as np

from sasvfusion.exceptions import ContractViolation

DTYPE = np.float64
NORM_EPS = 1e-12


def as_vector(x, name="x"):
    """Coerce to a finite float64 vector or batch of vectors."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim not in (1, 2):
        raise ContractViolation(f"{name} must be a vector or a batch of vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def as_matrix(w, name="w"):
    arr = np.asarray(w, dtype=DTYPE)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class TReluParams:
    """Learnable square transform applied before the ReLU clamp.

    Parameters:
    w_a (np.ndarray): Square matrix; identity at construction.
    """
    w_a: np.ndarray = field(repr=False)

    def __post_init__(self):
        w_a = as_matrix(self.w_a, "w_a")
        if w_a.shape[0] != w_a.shape[1]:
            raise ContractViolation(f"w_a must be square, got shape {w_a.shape}")
        object.__setattr__(self, "w_a", w_a)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim, dtype=DTYPE))


# --- affine ------------------------------------------------------------------

def affine(w, x, b):
    """Return ``w @ x + b`` for a vector, or ``x @ w.T + b`` row-wise for a batch."""
    w = as_matrix(w, "w")
    x = as_vector(x, "x")
    b = np.asarray(b, dtype=DTYPE)
    if x.shape[-1] != w.shape[1]:
        raise ContractViolation(f"affine: w has {w.shape[1]} columns but x has dimension {x.shape[-1]}")
    if b.shape != (w.shape[0],):
        raise ContractViolation(f"affine: b has shape {b.shape}, expected ({w.shape[0]},)")
    return x @ w.T + b


def affine_backward(dy, w, x):
    """Gradients of ``affine`` for a batch: returns (dx, dw, db)."""
    dy = np.atleast_2d(dy)
    x = np.atleast_2d(x)
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


# --- activations -------------------------------------------------------------

def relu(x):
    """Element-wise ``max(x, 0)``."""
    x = np.asarray(x, dtype=DTYPE)
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    # subgradient at exactly 0 is 0
    return dy * (x > 0.0)


def trelu(params, z, return_preactivation=False):
    """Structural ReLU: element-wise ``max(w_a @ z, 0)``.

    Parameters:
    params (TReluParams or np.ndarray): The transform, or ``w_a`` itself.
    z (np.ndarray): Pre-activation affine output, vector or batch.
    return_preactivation (bool): Also return ``w_a @ z``, the input of the clamp.

    Returns:
    np.ndarray: Activations with the same shape as ``z``, or the pair
    (activations, pre-activations).
    """
    w_a = params.w_a if isinstance(params, TReluParams) else as_matrix(params, "w_a")
    z = as_vector(z, "z")
    if w_a.shape[1] != z.shape[-1]:
        raise ContractViolation(f"trelu: w_a has {w_a.shape[1]} columns but z has dimension {z.shape[-1]}")
    u = z @ w_a.T
    if return_preactivation:
        return relu(u), u
    return relu(u)


def trelu_backward(dy, w_a, z, diagonal=False):
    """Gradients of ``trelu`` for a batch: returns (dz, dw_a).

    With ``diagonal`` only the diagonal of ``dw_a`` is kept (a diagonal-only ``w_a``).
    """
    w_a = w_a.w_a if isinstance(w_a, TReluParams) else np.asarray(w_a, dtype=DTYPE)
    z = np.atleast_2d(z)
    du = relu_backward(np.atleast_2d(dy), z @ w_a.T)
    dw_a = du.T @ z
    if diagonal:
        dw_a = np.diag(np.diag(dw_a))
    return du @ w_a, dw_a


def l2_normalize(x, eps=NORM_EPS):
    """Scale to unit Euclidean norm; vectors with norm <= eps map to zero."""
    x = np.asarray(x, dtype=DTYPE)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norm > eps, norm, 1.0)
    return np.where(norm > eps, x / safe, 0.0)


def l2_normalize_backward(dy, x, eps=NORM_EPS):
    x = np.atleast_2d(x)
    dy = np.atleast_2d(dy)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    live = norm > eps
    safe = np.where(live, norm, 1.0)
    n = x / safe
    dx = (dy - n * np.sum(n * dy, axis=-1, keepdims=True)) / safe
    return np.where(live, dx, 0.0)


def sigmoid(z):
    """Logistic function evaluated branch-by-sign so large |z| never overflows."""
    arr = np.asarray(z, dtype=DTYPE)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out) if out.ndim == 0 else out


def bce_loss(logit, y):
    """Binary cross-entropy of ``sigmoid(logit)`` against ``y`` in {0, 1}, from the logit."""
    logit = np.asarray(logit, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ContractViolation("bce_loss: labels must be 0 or 1")
    out = np.maximum(logit, 0.0) - logit * y + np.log1p(np.exp(-np.abs(logit)))
    return float(out) if out.ndim == 0 else out


def bce_grad(logit, y):
    """d bce_loss / d logit."""
    return sigmoid(logit) - np.asarray(y, dtype=DTYPE)


# --- regularisation layers ---------------------------------------------------

def batchnorm_forward(x, gamma, beta, mean, var, eps):
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    return gamma * x_hat + beta, x_hat, inv_std


def batchnorm_backward(dy, x_hat, inv_std, gamma, batch_stats):
    """Returns (dx, dgamma, dbeta). ``batch_stats`` selects the train-time formula."""
    dgamma = np.sum(dy * x_hat, axis=0)
    dbeta = dy.sum(axis=0)
    dx_hat = dy * gamma
    if not batch_stats:
        return dx_hat * inv_std, dgamma, dbeta
    n = dy.shape[0]
    dx = (inv_std / n) * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * np.sum(dx_hat * x_hat, axis=0))
    return dx, dgamma, dbeta


def dropout_mask(rng, shape, rate):
    """Inverted-dropout mask: kept units are scaled by 1/(1-rate)."""
    if rate <= 0.0:
        return np.ones(shape, dtype=DTYPE)
    keep = rng.random(shape) >= rate
    return keep.astype(DTYPE) / (1.0 - rate)


# --- scoring and initialisation ----------------------------------------------

def cosine_score(a, b):
    """Cosine similarity rescaled to [0, 1] as (1 + cos) / 2; zero vectors score 0.5."""
    a = np.atleast_2d(np.asarray(a, dtype=DTYPE))
    b = np.atleast_2d(np.asarray(b, dtype=DTYPE))
    if a.shape != b.shape:
        raise ContractViolation(f"cosine_score: shapes {a.shape} and {b.shape} differ")
    denom = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    dot = np.sum(a * b, axis=-1)
    cos = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
    return 0.5 * (1.0 + np.clip(cos, -1.0, 1.0))


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(DTYPE)
