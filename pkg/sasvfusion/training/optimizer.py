from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.model.fusion import FusionModel, GradientSet, GroupTag

logger = get_logger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind).lower())
        if self.kind not in OPTIMIZERS:
            raise ContractViolation(f"unknown optimizer '{self.kind}', expected one of {sorted(OPTIMIZERS)}")
        if self.learning_rate <= 0:
            raise ContractViolation("OptimizerConfig.learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ContractViolation("OptimizerConfig betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ContractViolation("OptimizerConfig.eps must be positive")


@dataclass
class OptimizerState:
    """Per-parameter moments and step counts; parameters of frozen groups keep theirs untouched."""
    config: OptimizerConfig
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)
    updates: int = 0

    @property
    def kind(self):
        return self.config.kind

    @property
    def learning_rate(self):
        return self.config.learning_rate


# Abstract Base Class for Update Rules
# ------------------------------------
class Optimizer(ABC):
    @abstractmethod
    def step(self, name: str, param: np.ndarray, grad: np.ndarray, state: OptimizerState) -> None:
        """Update ``param`` in place from ``grad``, advancing the state of ``name`` only."""
        pass


class Sgd(Optimizer):
    def step(self, name, param, grad, state):
        state.steps[name] = state.steps.get(name, 0) + 1
        param -= state.config.learning_rate * grad


class Adam(Optimizer):
    """Adam with bias correction; the correction uses each parameter's own step count."""

    def step(self, name, param, grad, state):
        cfg = state.config
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        t = state.steps.get(name, 0) + 1
        state.steps[name] = t
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


OPTIMIZERS = {"sgd": Sgd, "adam": Adam}


def make_optimizer(cfg: Optional[OptimizerConfig] = None) -> OptimizerState:
    return OptimizerState(cfg or OptimizerConfig())


def apply_update(model: FusionModel, grads: GradientSet, opt: OptimizerState,
                 frozen: Optional[Iterable[GroupTag]] = None) -> FusionModel:
    """
    Apply one optimizer step to every parameter outside the frozen groups.

    Parameters:
    model (FusionModel): Updated in place; its version is bumped.
    grads (GradientSet): Gradients for every parameter.
    opt (OptimizerState): Updated in place.
    frozen (iterable of GroupTag, optional): Groups to leave bitwise unchanged.
        Defaults to the groups currently frozen on the model.

    Returns:
    FusionModel: The same model.
    """
    frozen = model.frozen_tags() if frozen is None else frozenset(GroupTag(t) for t in frozen)
    if GroupTag.JOINT in frozen:
        raise ContractViolation("the Joint group is never frozen")
    rule = OPTIMIZERS[opt.kind]()
    for tag, group in model.groups.items():
        if tag in frozen:
            continue
        for name in group.names:
            g = grads.grads.get(name)
            if g is None:
                raise ContractViolation(f"apply_update: no gradient for '{name}'")
            if g.shape != model.params[name].shape:
                raise ContractViolation(f"apply_update: gradient of '{name}' has shape {g.shape}, "
                                        f"expected {model.params[name].shape}")
            rule.step(name, model.params[name], g, opt)
    opt.updates += 1
    model.touch()
    return model
