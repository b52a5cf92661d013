"""Conventional multi-task training and alternating training with module freezing."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sasvfusion.data.store import EmbeddingStore
from sasvfusion.data.trials import AtmmDatasets, Trial, sample_indices
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.model.fusion import FusionModel, GroupTag, Mode, backward, forward
from sasvfusion.training.loss import CONVENTIONAL_LAMBDA, LossConfig, total_loss
from sasvfusion.training.optimizer import OptimizerState, apply_update, make_optimizer
from sasvfusion.training.scoring import TrialTable
from sasvfusion.utils import write_tsv

logger = get_logger(__name__)

DEFAULT_BATCH_SIZE = 128
REPORT_COLUMNS = ["step", "p", "lambda", "mean_loss", "frozen"]


@dataclass(frozen=True)
class AtmmConfig:
    """
    Alternating training settings.

    Parameters:
    rounds (int): Number of rounds run by ``train_atmm``.
    iters_per_round (int): Iterations per round.
    sample_fraction (float): Share of the chosen dataset sampled per iteration.
    lambda_cm_focus (float): Loss weight when the CM dataset is sampled (p = 0).
    lambda_asv_focus (float): Loss weight when the ASV dataset is sampled (p = 1).
    batch_size (int): Minibatch size within one iteration's sample.
    seed (int): Seed of the p-stream and of the samples.
    p_sequence (tuple of int, optional): Forced p schedule, cycled; overrides the p-stream.
    """
    rounds: int = 5
    iters_per_round: int = 100
    sample_fraction: float = 0.01
    lambda_cm_focus: float = 0.1
    lambda_asv_focus: float = 0.9
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    p_sequence: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.rounds < 0 or self.iters_per_round < 0:
            raise ContractViolation("AtmmConfig.rounds and iters_per_round must be >= 0")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ContractViolation("AtmmConfig.sample_fraction must lie in (0, 1]")
        for name in ("lambda_cm_focus", "lambda_asv_focus"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ContractViolation(f"AtmmConfig.{name} must lie strictly between 0 and 1")
        if self.batch_size < 1:
            raise ContractViolation("AtmmConfig.batch_size must be >= 1")
        if self.p_sequence is not None:
            seq = tuple(int(p) for p in self.p_sequence)
            if not seq or any(p not in (0, 1) for p in seq):
                raise ContractViolation("AtmmConfig.p_sequence must be a non-empty sequence of 0/1")
            object.__setattr__(self, "p_sequence", seq)


@dataclass
class AtmmStep:
    """Audit record of one alternating-training iteration."""
    step: int
    p: int
    lambda_used: float
    frozen_group: GroupTag
    batch: List[Trial] = field(repr=False)
    mean_loss: float
    digests_pre: Dict[GroupTag, str] = field(repr=False)
    digests_post: Dict[GroupTag, str] = field(repr=False)

    def unchanged(self, tag) -> bool:
        tag = GroupTag(tag)
        return self.digests_pre[tag] == self.digests_post[tag]


@dataclass
class ReportRow:
    step: int
    p: str
    lam: float
    mean_loss: float
    frozen: str


def _minibatch_step(model, opt, table, index, lam, frozen):
    """Forward, backward and update on one minibatch; returns its mean loss."""
    trace = forward(model, table.batch(index), Mode.TRAIN, stream=(opt.updates, 0))
    loss, d_sasv, d_cm = total_loss(trace, table.labels_at(index), LossConfig(lam))
    grads = backward(model, trace, d_sasv, d_cm)
    model.update_running_stats(trace, frozen)
    apply_update(model, grads, opt, frozen)
    return loss


def _batches(index, batch_size):
    for start in range(0, len(index), batch_size):
        yield index[start:start + batch_size]


def train_conventional(model: FusionModel, trials: Sequence[Trial], store: EmbeddingStore, epochs: int,
                       batch_size: int = DEFAULT_BATCH_SIZE, opt: Optional[OptimizerState] = None,
                       loss_cfg: LossConfig = LossConfig(CONVENTIONAL_LAMBDA), seed: int = 0) -> List[ReportRow]:
    """
    Minibatch training on the unified dataset with a fixed task weighting.

    Parameters:
    model (FusionModel): Trained in place.
    trials (list of Trial): Unified CM + ASV training set.
    store (EmbeddingStore): Embeddings of every referenced utterance.
    epochs (int): Passes over the data; 0 leaves the model untouched.
    batch_size (int): Trials per update.
    opt (OptimizerState, optional): Defaults to Adam with the standard settings.
    loss_cfg (LossConfig): Task weighting, 0.5 by default.
    seed (int): Seed of the per-epoch shuffles.

    Returns:
    list of ReportRow: One row per epoch.
    """
    if not trials:
        raise ContractViolation("train_conventional: empty training set")
    if epochs < 0 or batch_size < 1:
        raise ContractViolation("train_conventional: epochs must be >= 0 and batch_size >= 1")
    table = TrialTable(trials, store)
    opt = opt or make_optimizer()
    rows = []
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch, 5]).permutation(len(table))
        total = 0.0
        for index in _batches(order, batch_size):
            total += _minibatch_step(model, opt, table, index, loss_cfg.lam, ()) * len(index)
        rows.append(ReportRow(epoch, "-", loss_cfg.lam, total / len(table), "-"))
        logger.info(f"Epoch {epoch + 1}/{epochs}: mean loss {total / len(table):.6f}")
    return rows


def _p_for(cfg, rng, step):
    draw = int(rng.integers(2))
    return cfg.p_sequence[step % len(cfg.p_sequence)] if cfg.p_sequence else draw


def atmm_round(model: FusionModel, datasets: AtmmDatasets, store: EmbeddingStore, cfg: AtmmConfig,
               opt: OptimizerState, round_index: int = 0, tables=None) -> List[AtmmStep]:
    """
    One round of alternating training.

    Each iteration draws p in {0, 1}. p = 0 samples the CM dataset, weights the
    loss with ``lambda_cm_focus`` and freezes the ASV path; p = 1 samples the
    ASV dataset, weights with ``lambda_asv_focus`` and freezes the CM path. The
    joint layers are always updated.
    """
    if not datasets.cm_dataset or not datasets.asv_dataset:
        raise ContractViolation("atmm_round: both datasets must be non-empty")
    if tables is None:
        tables = (TrialTable(datasets.cm_dataset, store), TrialTable(datasets.asv_dataset, store))
    rng = np.random.default_rng([cfg.seed, round_index, 11])
    steps = []
    for it in range(cfg.iters_per_round):
        step = round_index * cfg.iters_per_round + it
        p = _p_for(cfg, rng, step)
        if p == 0:
            lam, frozen_group, table = cfg.lambda_cm_focus, GroupTag.ASV_PATH, tables[0]
        else:
            lam, frozen_group, table = cfg.lambda_asv_focus, GroupTag.CM_PATH, tables[1]
        model.set_frozen({frozen_group})
        pre = model.digests()
        index = sample_indices(len(table), cfg.sample_fraction, cfg.seed, step)
        total = 0.0
        for chunk in _batches(index, cfg.batch_size):
            total += _minibatch_step(model, opt, table, chunk, lam, {frozen_group}) * len(chunk)
        model.set_frozen(())
        steps.append(AtmmStep(step, p, lam, frozen_group, [table.trials[i] for i in index],
                              total / len(index), pre, model.digests()))
        logger.debug(f"ATMM step {step}: p={p} lambda={lam} frozen={frozen_group.value} loss={total / len(index):.6f}")
    return steps


def train_atmm(model: FusionModel, datasets: AtmmDatasets, store: EmbeddingStore, cfg: AtmmConfig = AtmmConfig(),
               opt: Optional[OptimizerState] = None) -> List[AtmmStep]:
    """Run ``cfg.rounds`` rounds and return the concatenated step audit."""
    opt = opt or make_optimizer()
    tables = (TrialTable(datasets.cm_dataset, store), TrialTable(datasets.asv_dataset, store))
    steps = []
    for r in range(cfg.rounds):
        round_steps = atmm_round(model, datasets, store, cfg, opt, round_index=r, tables=tables)
        steps.extend(round_steps)
        mean = np.mean([s.mean_loss for s in round_steps]) if round_steps else float("nan")
        logger.info(f"ATMM round {r + 1}/{cfg.rounds}: mean loss {mean:.6f}")
    return steps


def atmm_report(steps: Sequence[AtmmStep]) -> List[ReportRow]:
    return [ReportRow(s.step, str(s.p), s.lambda_used, s.mean_loss, s.frozen_group.value) for s in steps]


def write_report(rows: Sequence[ReportRow], path):
    """Training report TSV with a header row."""
    df = pd.DataFrame([(r.step, r.p, r.lam, r.mean_loss, r.frozen) for r in rows], columns=REPORT_COLUMNS)
    return write_tsv(df, path, header=True)
