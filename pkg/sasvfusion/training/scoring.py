"""Turning trials into model inputs, and scoring protocols."""
from typing import List, Sequence

import numpy as np

from sasvfusion.data.store import EmbeddingStore
from sasvfusion.data.trials import Trial, labels_of
from sasvfusion.exceptions import MissingUtteranceError
from sasvfusion.logger import get_logger
from sasvfusion.metrics.scores import ScoreSet
from sasvfusion.model.fusion import FusionModel, Mode, TrialBatch, enroll_aggregate, forward
from sasvfusion.nn.numerics import cosine_score

logger = get_logger(__name__)

SCORING_BATCH = 512


def check_trials(trials: Sequence[Trial], store: EmbeddingStore):
    """Raise MissingUtteranceError listing every trial that references an unknown utterance."""
    missing, offending = [], []
    for i, t in enumerate(trials):
        absent = [u for u in (*t.enroll_ids, t.test_id) if u not in store]
        if absent:
            offending.append(f"#{i} ({','.join(t.enroll_ids)} -> {t.test_id})")
            missing.extend(a for a in absent if a not in missing)
    if offending:
        shown = "; ".join(offending[:5]) + (f" and {len(offending) - 5} more" if len(offending) > 5 else "")
        raise MissingUtteranceError(
            f"{len(offending)} trials reference utterances missing from the store: {shown}", missing)


class TrialTable:
    """Row-aligned model inputs and labels for a fixed list of trials."""

    def __init__(self, trials: Sequence[Trial], store: EmbeddingStore):
        check_trials(trials, store)
        self.trials: List[Trial] = list(trials)
        n = len(self.trials)
        self.enroll_asv = np.empty((n, store.asv_dim))
        self.enroll_cm = np.empty((n, store.cm_dim))
        for i, t in enumerate(self.trials):
            self.enroll_asv[i] = enroll_aggregate([store[u].asv for u in t.enroll_ids])
            self.enroll_cm[i] = enroll_aggregate([store[u].cm for u in t.enroll_ids])
        test_ids = [t.test_id for t in self.trials]
        self.test_asv = store.asv_matrix(test_ids) if n else np.empty((0, store.asv_dim))
        self.test_cm = store.cm_matrix(test_ids) if n else np.empty((0, store.cm_dim))
        self.labels = [labels_of(t) for t in self.trials]

    def __len__(self):
        return len(self.trials)

    def batch(self, index) -> TrialBatch:
        index = np.asarray(index, dtype=np.int64)
        return TrialBatch(self.enroll_asv[index], self.test_asv[index], self.enroll_cm[index], self.test_cm[index])

    def labels_at(self, index):
        return [self.labels[i] for i in index]


def export_scores(model: FusionModel, trials: Sequence[Trial], store: EmbeddingStore,
                  batch_size: int = SCORING_BATCH) -> ScoreSet:
    """Infer-mode scores for every trial, in trial order."""
    table = TrialTable(trials, store)
    s_sasv, s_cm = np.empty(len(table)), np.empty(len(table))
    for start in range(0, len(table), batch_size):
        index = np.arange(start, min(start + batch_size, len(table)))
        trace = forward(model, table.batch(index), Mode.INFER)
        s_sasv[index] = trace.s_sasv
        s_cm[index] = trace.s_cm
    logger.info(f"Scored {len(table)} trials with a {model.config.strategy.value} model")
    return ScoreSet([t.label for t in trials], s_sasv, s_cm, [t.test_id for t in trials])


def cosine_baseline_scores(trials: Sequence[Trial], store: EmbeddingStore) -> ScoreSet:
    """Standalone ASV: rescaled cosine between enrollment mean and test embedding; no CM (s_cm = 1)."""
    table = TrialTable(trials, store)
    s_asv = cosine_score(table.enroll_asv, table.test_asv) if len(table) else np.empty(0)
    return ScoreSet([t.label for t in trials], s_asv, np.ones(len(table)), [t.test_id for t in trials])


def cm_baseline_scores(model: FusionModel, trials: Sequence[Trial], store: EmbeddingStore,
                       batch_size: int = SCORING_BATCH) -> ScoreSet:
    """Standalone CM: the model's spoof score alone decides every trial (s_sasv = s_cm)."""
    scores = export_scores(model, trials, store, batch_size)
    return ScoreSet(scores.labels, scores.s_cm, scores.s_cm, scores.test_ids)
