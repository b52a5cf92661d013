"""SASV fusion network: a CM path producing a spoof score, an ASV path producing
a normalised speaker embedding, and a joint head that combines them.

Three integration strategies are available:

* S1 (early): the CM score gates the normalised ASV embedding before the joint layers.
* S2 (late): the same layers, but the gate multiplies the joint hidden activation
  right before the output layer.
* S3 (score fusion): one affine layer over (cosine ASV score, CM score).
"""
import hashlib
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.nn.numerics import (
    DTYPE,
    NORM_EPS,
    affine,
    affine_backward,
    as_vector,
    batchnorm_backward,
    batchnorm_forward,
    cosine_score,
    dropout_mask,
    glorot_uniform,
    l2_normalize,
    l2_normalize_backward,
    relu,
    relu_backward,
    sigmoid,
    trelu,
    trelu_backward,
)

logger = get_logger(__name__)

DEFAULT_DROPOUT = 0.2
_MODEL_IDS = itertools.count(1)


class Strategy(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ContractViolation(f"unknown strategy '{value}', expected one of s1, s2, s3") from None


class Mode(str, Enum):
    TRAIN = "Train"
    INFER = "Infer"


class GroupTag(str, Enum):
    CM_PATH = "CmPath"
    ASV_PATH = "AsvPath"
    JOINT = "Joint"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and initialisation settings of a fusion model.

    Hidden widths left as None default to the dimension-preserving choice:
    ``hidden_cm = cm_dim``, ``hidden_asv = asv_dim``, ``hidden_post = asv_dim``.
    """
    strategy: Strategy = Strategy.S1
    asv_dim: int = 32
    cm_dim: int = 16
    hidden_cm: Optional[int] = None
    hidden_asv: Optional[int] = None
    hidden_post: Optional[int] = None
    use_batchnorm: bool = False
    dropout_rate: float = 0.0
    seed: int = 0
    activation: str = "trelu"
    share_trelu: bool = True
    diagonal_trelu: bool = False
    cm_input: str = "both"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.hidden_cm is None:
            object.__setattr__(self, "hidden_cm", self.cm_dim)
        if self.hidden_asv is None:
            object.__setattr__(self, "hidden_asv", self.asv_dim)
        if self.hidden_post is None:
            object.__setattr__(self, "hidden_post", self.asv_dim)
        for name in ("asv_dim", "cm_dim", "hidden_cm", "hidden_asv", "hidden_post"):
            if int(getattr(self, name)) < 1:
                raise ContractViolation(f"ModelConfig.{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractViolation("ModelConfig.dropout_rate must lie in [0, 1)")
        if self.activation not in ("trelu", "relu"):
            raise ContractViolation(f"ModelConfig.activation must be 'trelu' or 'relu', got '{self.activation}'")
        if self.cm_input not in ("both", "test"):
            raise ContractViolation(f"ModelConfig.cm_input must be 'both' or 'test', got '{self.cm_input}'")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ContractViolation("ModelConfig.bn_momentum must lie in [0, 1)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ContractViolation("ModelConfig.seed must be a non-negative 64-bit integer")

    @property
    def cm_input_dim(self):
        return 2 * self.cm_dim if self.cm_input == "both" else self.cm_dim


@dataclass
class ParamGroup:
    """Parameters sharing one freeze flag."""
    tag: GroupTag
    names: List[str] = field(default_factory=list)
    frozen: bool = False


@dataclass(frozen=True)
class TrialInput:
    """Embeddings of one trial; ``enroll_*`` are already aggregated over the enrollment set."""
    enroll_asv: np.ndarray
    test_asv: np.ndarray
    enroll_cm: np.ndarray
    test_cm: np.ndarray


@dataclass(frozen=True)
class TrialBatch:
    """Row-stacked trial inputs, one row per trial."""
    enroll_asv: np.ndarray
    test_asv: np.ndarray
    enroll_cm: np.ndarray
    test_cm: np.ndarray

    def __len__(self):
        return self.test_asv.shape[0]

    @classmethod
    def stack(cls, inputs: Sequence[TrialInput]):
        if not inputs:
            raise ContractViolation("cannot stack an empty list of trial inputs")
        return cls(*(np.vstack([np.asarray(getattr(t, f), dtype=DTYPE) for t in inputs])
                     for f in ("enroll_asv", "test_asv", "enroll_cm", "test_cm")))

    @classmethod
    def of(cls, value):
        if isinstance(value, TrialBatch):
            return value
        if isinstance(value, TrialInput):
            return cls.stack([value])
        return cls.stack(list(value))


@dataclass
class ForwardTrace:
    """All activations of one forward pass; arrays have one row per trial."""
    s_cm: np.ndarray
    s_cm_logit: np.ndarray
    e_asv: np.ndarray
    e_sasv: np.ndarray
    s_sasv: np.ndarray
    s_sasv_logit: np.ndarray
    mode: Mode
    model_uid: int
    model_version: int
    cache: Dict[str, object] = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.s_sasv.shape[0]

    def kink_inputs(self) -> List[np.ndarray]:
        """Inputs of every ReLU/tReLU site, for kink-aware gradient checks.

        Each L2 normalisation contributes ``norm - NORM_EPS`` per row: a row whose
        norm is at or below the cutoff maps to zero, so crossing it is a kink too.
        """
        sites = [block["u"] for block in self.cache.get("blocks", {}).values()]
        sites += [np.linalg.norm(x, axis=-1) - NORM_EPS for x in self.cache.get("normalized", [])]
        return sites


@dataclass
class GradientSet:
    """Gradients for every parameter; ``frozen`` lists the groups flagged at backward time."""
    grads: Dict[str, np.ndarray]
    frozen: frozenset = frozenset()

    def __getitem__(self, name):
        return self.grads[name]

    def is_zero(self):
        return all(not np.any(g) for g in self.grads.values())


def enroll_aggregate(embeddings):
    """Arithmetic mean of a non-empty list of equal-dimension embeddings."""
    if len(embeddings) == 0:
        raise ContractViolation("enroll_aggregate: empty enrollment list")
    stacked = np.vstack([np.asarray(e, dtype=DTYPE) for e in embeddings])
    return stacked.mean(axis=0)


def saga_gate(s_cm, e_asv):
    """Scale ASV embeddings by the CM score: ``s_cm * e_asv`` row-wise."""
    s_cm = np.asarray(s_cm, dtype=DTYPE)
    e_asv = np.asarray(e_asv, dtype=DTYPE)
    if s_cm.ndim == 0:
        return s_cm * e_asv
    return s_cm[:, None] * e_asv


def saga_gate_backward(d_out, s_cm, e_asv):
    """Product-rule gradients of ``saga_gate``: returns (d_s_cm, d_e_asv)."""
    return np.sum(d_out * e_asv, axis=1), d_out * s_cm[:, None]


# --- layer blocks --------------------------------------------------------------

class _Context:
    def __init__(self, model, mode, rng):
        self.model = model
        self.mode = mode
        self.rng = rng
        self.blocks = {}
        self.normalized = []


def _hidden_forward(ctx, prefix, x, w_a=None):
    """affine -> [batchnorm] -> ReLU or tReLU -> [dropout], with its cache."""
    model, cfg = ctx.model, ctx.model.config
    p = model.params
    z = affine(p[f"{prefix}.w"], x, p[f"{prefix}.b"])
    block = {"x": x, "w": f"{prefix}.w", "b": f"{prefix}.b", "bn": None, "w_a": w_a, "mask": None}
    v = z
    if cfg.use_batchnorm:
        batch_stats = ctx.mode == Mode.TRAIN and z.shape[0] > 1
        if batch_stats:
            mean, var = z.mean(axis=0), z.var(axis=0)
        else:
            mean, var = model.buffers[f"{prefix}.bn.running_mean"], model.buffers[f"{prefix}.bn.running_var"]
        v, x_hat, inv_std = batchnorm_forward(z, p[f"{prefix}.bn.gamma"], p[f"{prefix}.bn.beta"], mean, var, cfg.bn_eps)
        block["bn"] = {"x_hat": x_hat, "inv_std": inv_std, "batch_stats": batch_stats, "mean": mean, "var": var}
    block["v"] = v
    if w_a is not None:
        out, block["u"] = trelu(p[w_a], v, return_preactivation=True)
    else:
        out, block["u"] = relu(v), v
    if ctx.mode == Mode.TRAIN and cfg.dropout_rate > 0.0:
        block["mask"] = dropout_mask(ctx.rng, out.shape, cfg.dropout_rate)
        out = out * block["mask"]
    ctx.blocks[prefix] = block
    return out


def _normalize(ctx, x):
    ctx.normalized.append(x)
    return l2_normalize(x)


def _hidden_backward(model, block, d_out, grads):
    p = model.params
    d = d_out * block["mask"] if block["mask"] is not None else d_out
    if block["w_a"] is not None:
        dv, d_w_a = trelu_backward(d, p[block["w_a"]], block["v"], diagonal=model.config.diagonal_trelu)
        grads[block["w_a"]] += d_w_a
    else:
        dv = relu_backward(d, block["u"])
    dz = dv
    if block["bn"] is not None:
        prefix = block["w"][:-2]
        bn = block["bn"]
        dz, d_gamma, d_beta = batchnorm_backward(dv, bn["x_hat"], bn["inv_std"], p[f"{prefix}.bn.gamma"], bn["batch_stats"])
        grads[f"{prefix}.bn.gamma"] += d_gamma
        grads[f"{prefix}.bn.beta"] += d_beta
    dx, dw, db = affine_backward(dz, p[block["w"]], block["x"])
    grads[block["w"]] += dw
    grads[block["b"]] += db
    return dx


def _output_forward(model, prefix, x):
    p = model.params
    return affine(p[f"{prefix}.w"], x, p[f"{prefix}.b"])[:, 0]


def _output_backward(model, prefix, x, d_logit, grads):
    dx, dw, db = affine_backward(d_logit[:, None], model.params[f"{prefix}.w"], x)
    grads[f"{prefix}.w"] += dw
    grads[f"{prefix}.b"] += db
    return dx


# --- integration strategies --------------------------------------------------

class IntegrationStrategy(ABC):
    """Builds the parameters of one strategy and runs its forward/backward pass.

    The CM path is shared by all strategies; subclasses define how its score
    is combined with the ASV evidence.
    """

    def build(self, model, rng):
        cfg = model.config
        hc = cfg.hidden_cm
        model.add_affine(GroupTag.CM_PATH, "cm.fc1", hc, cfg.cm_input_dim, rng, bn=True)
        model.add_affine(GroupTag.CM_PATH, "cm.fc2", hc, hc, rng, bn=True)
        model.add_affine(GroupTag.CM_PATH, "cm.fc3", hc, hc, rng)
        model.add_affine(GroupTag.CM_PATH, "cm.out", 1, hc, rng)
        if cfg.activation == "trelu":
            names = ["cm.trelu.w_a"] if cfg.share_trelu else ["cm.trelu1.w_a", "cm.trelu2.w_a"]
            for name in names:
                model.add_identity(GroupTag.CM_PATH, name, hc)
        self.build_fusion(model, rng)

    @abstractmethod
    def build_fusion(self, model, rng):
        pass

    def _trelu_names(self, cfg):
        if cfg.activation != "trelu":
            return None, None
        if cfg.share_trelu:
            return "cm.trelu.w_a", "cm.trelu.w_a"
        return "cm.trelu1.w_a", "cm.trelu2.w_a"

    def cm_forward(self, ctx, batch):
        cfg = ctx.model.config
        x = np.hstack([batch.enroll_cm, batch.test_cm]) if cfg.cm_input == "both" else batch.test_cm
        w_a1, w_a2 = self._trelu_names(cfg)
        a1 = _hidden_forward(ctx, "cm.fc1", x, w_a1)
        a2 = _hidden_forward(ctx, "cm.fc2", a1, w_a2)
        z3 = affine(ctx.model.params["cm.fc3.w"], a2, ctx.model.params["cm.fc3.b"])
        n3 = _normalize(ctx, z3)
        logit = _output_forward(ctx.model, "cm.out", n3)
        return logit, {"a2": a2, "z3": z3, "n3": n3}

    def cm_backward(self, model, trace, d_logit, grads):
        c = trace.cache["cm"]
        blocks = trace.cache["blocks"]
        dn3 = _output_backward(model, "cm.out", c["n3"], d_logit, grads)
        dz3 = l2_normalize_backward(dn3, c["z3"])
        da2, dw, db = affine_backward(dz3, model.params["cm.fc3.w"], c["a2"])
        grads["cm.fc3.w"] += dw
        grads["cm.fc3.b"] += db
        da1 = _hidden_backward(model, blocks["cm.fc2"], da2, grads)
        _hidden_backward(model, blocks["cm.fc1"], da1, grads)

    @abstractmethod
    def forward(self, ctx, batch) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict]:
        """Returns (cm_logit, sasv_logit, e_asv, e_sasv, cache)."""

    @abstractmethod
    def backward(self, model, trace, d_sasv_logit, d_cm_logit, grads):
        pass


class GatedIntegration(IntegrationStrategy):
    """S1 and S2: ASV path + joint head, gated by the CM score."""

    def __init__(self, late=False):
        self.late = late

    def build_fusion(self, model, rng):
        cfg = model.config
        model.add_affine(GroupTag.ASV_PATH, "asv.fc1", cfg.hidden_asv, 2 * cfg.asv_dim, rng, bn=True)
        model.add_affine(GroupTag.JOINT, "post.fc1", cfg.hidden_post, cfg.hidden_asv, rng, bn=True)
        model.add_affine(GroupTag.JOINT, "post.out", 1, cfg.hidden_post, rng)

    def forward(self, ctx, batch):
        cm_logit, cm_cache = self.cm_forward(ctx, batch)
        s_cm = sigmoid(cm_logit)
        x = np.hstack([batch.enroll_asv, batch.test_asv])
        a_asv = _hidden_forward(ctx, "asv.fc1", x)
        e_asv = _normalize(ctx, a_asv)
        if self.late:
            h = _hidden_forward(ctx, "post.fc1", e_asv)
            e_sasv = saga_gate(s_cm, h)
            head_in = e_sasv
        else:
            e_sasv = saga_gate(s_cm, e_asv)
            head_in = _hidden_forward(ctx, "post.fc1", e_sasv)
        sasv_logit = _output_forward(ctx.model, "post.out", head_in)
        cache = {"cm": cm_cache, "a_asv": a_asv, "head_in": head_in}
        if self.late:
            cache["h"] = h
        return cm_logit, sasv_logit, e_asv, e_sasv, cache

    def backward(self, model, trace, d_sasv_logit, d_cm_logit, grads):
        c, blocks = trace.cache, trace.cache["blocks"]
        s_cm = trace.s_cm
        d_head = _output_backward(model, "post.out", c["head_in"], d_sasv_logit, grads)
        if self.late:
            d_s_cm, d_h = saga_gate_backward(d_head, s_cm, c["h"])
            d_e_asv = _hidden_backward(model, blocks["post.fc1"], d_h, grads)
        else:
            d_e_sasv = _hidden_backward(model, blocks["post.fc1"], d_head, grads)
            d_s_cm, d_e_asv = saga_gate_backward(d_e_sasv, s_cm, trace.e_asv)
        d_a_asv = l2_normalize_backward(d_e_asv, c["a_asv"])
        _hidden_backward(model, blocks["asv.fc1"], d_a_asv, grads)
        d_cm_total = d_cm_logit + d_s_cm * s_cm * (1.0 - s_cm)
        self.cm_backward(model, trace, d_cm_total, grads)


class ScoreFusion(IntegrationStrategy):
    """S3: affine fusion of the cosine ASV score and the CM score."""

    def build_fusion(self, model, rng):
        model.add_affine(GroupTag.JOINT, "fusion", 1, 2, rng)

    def forward(self, ctx, batch):
        cm_logit, cm_cache = self.cm_forward(ctx, batch)
        s_cm = sigmoid(cm_logit)
        s_asv = cosine_score(batch.enroll_asv, batch.test_asv)
        fused = np.column_stack([s_asv, s_cm])
        sasv_logit = _output_forward(ctx.model, "fusion", fused)
        return cm_logit, sasv_logit, s_asv[:, None], fused, {"cm": cm_cache}

    def backward(self, model, trace, d_sasv_logit, d_cm_logit, grads):
        d_fused = _output_backward(model, "fusion", trace.e_sasv, d_sasv_logit, grads)
        s_cm = trace.s_cm
        d_cm_total = d_cm_logit + d_fused[:, 1] * s_cm * (1.0 - s_cm)
        self.cm_backward(model, trace, d_cm_total, grads)


def strategy_for(strategy: Strategy) -> IntegrationStrategy:
    if strategy == Strategy.S1:
        return GatedIntegration(late=False)
    if strategy == Strategy.S2:
        return GatedIntegration(late=True)
    return ScoreFusion()


# --- model -------------------------------------------------------------------

class FusionModel:
    """Parameters, parameter groups and running statistics of one fusion network."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.groups: Dict[GroupTag, ParamGroup] = {tag: ParamGroup(tag) for tag in GroupTag}
        self.version = 0
        self.uid = next(_MODEL_IDS)
        self._strategy = strategy_for(config.strategy)

    @property
    def strategy(self) -> IntegrationStrategy:
        return self._strategy

    def add_param(self, tag, name, value):
        if name in self.params:
            raise ContractViolation(f"duplicate parameter '{name}'")
        self.params[name] = np.asarray(value, dtype=DTYPE)
        self.groups[tag].names.append(name)

    def add_affine(self, tag, prefix, fan_out, fan_in, rng, bn=False):
        self.add_param(tag, f"{prefix}.w", glorot_uniform(rng, fan_out, fan_in))
        self.add_param(tag, f"{prefix}.b", np.zeros(fan_out, dtype=DTYPE))
        if bn and self.config.use_batchnorm:
            self.add_param(tag, f"{prefix}.bn.gamma", np.ones(fan_out, dtype=DTYPE))
            self.add_param(tag, f"{prefix}.bn.beta", np.zeros(fan_out, dtype=DTYPE))
            self.buffers[f"{prefix}.bn.running_mean"] = np.zeros(fan_out, dtype=DTYPE)
            self.buffers[f"{prefix}.bn.running_var"] = np.ones(fan_out, dtype=DTYPE)

    def add_identity(self, tag, name, dim):
        self.add_param(tag, name, np.eye(dim, dtype=DTYPE))

    def group_of(self, name) -> GroupTag:
        for tag, group in self.groups.items():
            if name in group.names:
                return tag
        raise ContractViolation(f"unknown parameter '{name}'")

    def set_frozen(self, tags):
        tags = {GroupTag(t) for t in tags}
        for tag, group in self.groups.items():
            group.frozen = tag in tags

    def frozen_tags(self):
        return frozenset(tag for tag, group in self.groups.items() if group.frozen)

    def digest(self, tag) -> str:
        """SHA-256 over the names and bytes of one group's parameters."""
        h = hashlib.sha256()
        for name in self.groups[GroupTag(tag)].names:
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return h.hexdigest()

    def digests(self) -> Dict[GroupTag, str]:
        return {tag: self.digest(tag) for tag in GroupTag}

    def touch(self):
        """Mark parameters as changed so older traces are rejected by ``backward``."""
        self.version += 1

    def update_running_stats(self, trace: ForwardTrace, frozen=()):
        """Fold the batch statistics of a Train-mode trace into the BN running averages.

        Layers of the ``frozen`` groups keep their running statistics.
        """
        if not self.config.use_batchnorm or trace.mode != Mode.TRAIN:
            return
        frozen = {GroupTag(t) for t in frozen}
        m = self.config.bn_momentum
        for prefix, block in trace.cache["blocks"].items():
            bn = block["bn"]
            if bn is None or not bn["batch_stats"] or self.group_of(f"{prefix}.w") in frozen:
                continue
            mean_key, var_key = f"{prefix}.bn.running_mean", f"{prefix}.bn.running_var"
            self.buffers[mean_key] = m * self.buffers[mean_key] + (1.0 - m) * bn["mean"]
            self.buffers[var_key] = m * self.buffers[var_key] + (1.0 - m) * bn["var"]

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))


def build_model(cfg: ModelConfig) -> FusionModel:
    """Construct a freshly initialised model; identical configs give identical parameters."""
    model = FusionModel(cfg)
    rng = np.random.default_rng(cfg.seed)
    model.strategy.build(model, rng)
    logger.debug(f"built {cfg.strategy.value} model with {model.num_parameters()} parameters")
    return model


def parameter_census(model: FusionModel) -> List[Tuple[str, GroupTag, tuple]]:
    """(name, group, shape) for every parameter, in group order."""
    return [(name, tag, model.params[name].shape)
            for tag in GroupTag for name in model.groups[tag].names]


class _ShapePlan:
    """Stands in for a FusionModel during ``build`` and records shapes without allocating."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: Dict[str, Tuple[GroupTag, tuple]] = {}
        self.buffers: Dict[str, tuple] = {}

    def add_param(self, tag, name, value):
        self.params[name] = (tag, np.shape(value))

    def add_affine(self, tag, prefix, fan_out, fan_in, rng, bn=False):
        self.params[f"{prefix}.w"] = (tag, (fan_out, fan_in))
        self.params[f"{prefix}.b"] = (tag, (fan_out,))
        if bn and self.config.use_batchnorm:
            for name in ("gamma", "beta"):
                self.params[f"{prefix}.bn.{name}"] = (tag, (fan_out,))
            for name in ("running_mean", "running_var"):
                self.buffers[f"{prefix}.bn.{name}"] = (fan_out,)

    def add_identity(self, tag, name, dim):
        self.params[name] = (tag, (dim, dim))


def parameter_shapes(cfg: ModelConfig) -> Tuple[Dict[str, Tuple[GroupTag, tuple]], Dict[str, tuple]]:
    """
    Names, groups and shapes ``build_model(cfg)`` would allocate, computed without allocating.

    Returns:
    tuple: ({param name: (group, shape)}, {buffer name: shape}).
    """
    plan = _ShapePlan(cfg)
    strategy_for(cfg.strategy).build(plan, rng=None)
    return plan.params, plan.buffers


def _check_batch(cfg, batch):
    expected = {"enroll_asv": cfg.asv_dim, "test_asv": cfg.asv_dim,
                "enroll_cm": cfg.cm_dim, "test_cm": cfg.cm_dim}
    n = None
    for name, dim in expected.items():
        arr = as_vector(getattr(batch, name), name)
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise ContractViolation(f"{name} has shape {arr.shape}, expected (n, {dim})")
        if n is None:
            n = arr.shape[0]
        elif arr.shape[0] != n:
            raise ContractViolation("trial batch fields have different row counts")


def forward(model: FusionModel, inputs, mode=Mode.INFER, stream: Tuple[int, ...] = (0, 0)) -> ForwardTrace:
    """
    Run the network on one trial or a batch of trials.

    Parameters:
    model (FusionModel): The network; it is not modified.
    inputs (TrialInput, TrialBatch or list of TrialInput): Trials to score.
    mode (Mode): Train enables dropout and BN batch statistics.
    stream (tuple of int): Selector of the dropout stream, e.g. (step, first trial index);
        combined with the model seed.

    Returns:
    ForwardTrace: Scores, embeddings and cached activations.
    """
    mode = Mode(mode)
    batch = TrialBatch.of(inputs)
    _check_batch(model.config, batch)
    rng = None
    if mode == Mode.TRAIN and model.config.dropout_rate > 0.0:
        rng = np.random.default_rng([model.config.seed, *[int(s) for s in stream]])
    ctx = _Context(model, mode, rng)
    cm_logit, sasv_logit, e_asv, e_sasv, cache = model.strategy.forward(ctx, batch)
    cache["blocks"] = ctx.blocks
    cache["normalized"] = ctx.normalized
    return ForwardTrace(
        s_cm=sigmoid(cm_logit), s_cm_logit=cm_logit,
        e_asv=e_asv, e_sasv=e_sasv,
        s_sasv=sigmoid(sasv_logit), s_sasv_logit=sasv_logit,
        mode=mode, model_uid=model.uid, model_version=model.version, cache=cache,
    )


def backward(model: FusionModel, trace: ForwardTrace, d_loss_d_sasv_logit, d_loss_d_cm_logit) -> GradientSet:
    """
    Reverse-mode gradients of a loss given its derivatives w.r.t. both logits.

    Gradients of frozen groups are computed too; ``GradientSet.frozen`` records
    which groups were frozen so the optimizer can skip them.
    """
    if trace.model_uid != model.uid or trace.model_version != model.version:
        raise ContractViolation("backward: trace was produced by another model or before the last update")
    if trace.mode != Mode.TRAIN:
        raise ContractViolation("backward: trace must come from a Train-mode forward pass")
    n = len(trace)
    d_sasv = np.broadcast_to(np.asarray(d_loss_d_sasv_logit, dtype=DTYPE), (n,)).copy()
    d_cm = np.broadcast_to(np.asarray(d_loss_d_cm_logit, dtype=DTYPE), (n,)).copy()
    grads = {name: np.zeros_like(p) for name, p in model.params.items()}
    model.strategy.backward(model, trace, d_sasv, d_cm, grads)
    return GradientSet(grads, model.frozen_tags())
