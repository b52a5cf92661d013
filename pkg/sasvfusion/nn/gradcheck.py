from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger

logger = get_logger(__name__)

# below this magnitude both gradients are treated as zero when forming relative errors
ABS_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference gradient comparison."""
    max_rel_error: float
    passed: bool
    checked: int
    excluded: int
    worst: Optional[str] = None
    tol: float = 1e-4
    errors: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def _patterns_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(
    f: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
    kink_inputs: Optional[Callable[[Dict[str, np.ndarray]], Sequence[np.ndarray]]] = None,
) -> GradCheckReport:
    """
    Compare analytic gradients to central differences ``(f(θ+h) - f(θ-h)) / 2h``.

    Parameters:
    f: Scalar function of the parameter dict. Entries are perturbed in place
       and restored before the next evaluation.
    params: Name -> array of parameters.
    grads: Name -> analytic gradient, same shapes as ``params``.
    h: Perturbation step, > 0.
    tol: Relative-error threshold for ``passed``.
    kink_inputs: Optional callable returning the signed distance to every kink at
       the current parameters: ReLU/tReLU inputs, and norms minus the cutoff below
       which an L2 normalisation outputs zero. An entry is excluded when a base input lies
       within ``h`` of zero or when perturbing it flips any activation pattern.

    Returns:
    GradCheckReport: Max relative error over non-excluded entries.
    """
    if h <= 0:
        raise ContractViolation("grad_check: h must be positive")
    missing = set(params) - set(grads)
    if missing:
        raise ContractViolation(f"grad_check: no analytic gradient for {sorted(missing)}")

    base_pattern = None
    if kink_inputs is not None:
        base_inputs = list(kink_inputs(params))
        base_pattern = [u > 0 for u in base_inputs]
        if any(np.any(np.abs(u) < h) for u in base_inputs):
            logger.debug("kink input within h of zero at the base point")

    max_err, worst, checked, excluded = 0.0, None, 0, 0
    errors = {}
    for name, theta in params.items():
        analytic = np.asarray(grads[name], dtype=np.float64)
        if analytic.shape != theta.shape:
            raise ContractViolation(f"grad_check: gradient of {name} has shape {analytic.shape}, expected {theta.shape}")
        err = np.full(theta.shape, np.nan)
        flat = theta.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = f(params)
            crossed = False
            if base_pattern is not None:
                crossed = not _patterns_equal(base_pattern, [u > 0 for u in kink_inputs(params)])
            flat[i] = original - h
            f_minus = f(params)
            if base_pattern is not None and not crossed:
                crossed = not _patterns_equal(base_pattern, [u > 0 for u in kink_inputs(params)])
            flat[i] = original
            if crossed:
                excluded += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), ABS_FLOOR)
            err.reshape(-1)[i] = rel
            checked += 1
            if rel > max_err:
                max_err, worst = rel, f"{name}[{i}]"
        errors[name] = err

    report = GradCheckReport(max_err, max_err < tol, checked, excluded, worst, tol, errors)
    logger.debug(f"grad_check: {checked} entries checked, {excluded} excluded, max rel. error {max_err:.3e}")
    return report
