"""Trial-pair construction.

Builds target, zero-effort non-target and spoof non-target trials from
utterance metadata and partitions them into the CM-training and ASV-training
datasets used by alternating training.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger

logger = get_logger(__name__)

DEFAULT_ENROLL_SIZE = 3

# Trial counts of the reference ASVspoof2019 LA training construction (target, non-target, spoof).
# Not reproduced by build_cm_trials: the pairing quotas behind them are unknown.
REFERENCE_TABLE_COUNTS = {
    "cm": (262228, 249094, 463910),
    "asv": (806025, 779601, 0),
}


class Authenticity(str, Enum):
    BONA_FIDE = "bonafide"
    SPOOF = "spoof"


class TrialLabel(str, Enum):
    TARGET = "target"
    NON_TARGET = "nontarget"
    SPOOF = "spoof"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ContractViolation(f"unknown trial label '{value}'") from None


@dataclass(frozen=True)
class UtteranceMeta:
    utt_id: str
    speaker_id: str
    authenticity: Authenticity
    attack_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "authenticity", Authenticity(self.authenticity))
        if (self.attack_id is not None) != (self.authenticity == Authenticity.SPOOF):
            raise ContractViolation(f"{self.utt_id}: attack_id must be set exactly for spoofed utterances")

    @property
    def is_bona_fide(self):
        return self.authenticity == Authenticity.BONA_FIDE


@dataclass(frozen=True)
class Trial:
    enroll_ids: Tuple[str, ...]
    test_id: str
    label: TrialLabel

    def __post_init__(self):
        object.__setattr__(self, "enroll_ids", tuple(self.enroll_ids))
        object.__setattr__(self, "label", TrialLabel(self.label))
        if not self.enroll_ids:
            raise ContractViolation(f"trial for {self.test_id} has an empty enrollment set")

    @property
    def key(self):
        return self.enroll_ids, self.test_id


@dataclass(frozen=True)
class TrialLabels:
    y_sasv: int
    y_cm: int


_LABELS = {
    TrialLabel.TARGET: TrialLabels(1, 1),
    TrialLabel.NON_TARGET: TrialLabels(0, 1),
    TrialLabel.SPOOF: TrialLabels(0, 0),
}


def labels_of(trial) -> TrialLabels:
    """Binary SASV and CM labels of a trial (or of a bare TrialLabel)."""
    label = trial.label if isinstance(trial, Trial) else TrialLabel(trial)
    return _LABELS[label]


@dataclass
class AtmmDatasets:
    cm_dataset: List[Trial]
    asv_dataset: List[Trial]

    def __post_init__(self):
        if any(t.label == TrialLabel.SPOOF for t in self.asv_dataset):
            raise ContractViolation("the ASV dataset must not contain spoof trials")

    def merged(self) -> List[Trial]:
        """Unified dataset used for conventional (non-alternating) training."""
        return list(self.cm_dataset) + list(self.asv_dataset)


@dataclass(frozen=True)
class TrialQuotas:
    """Per-test-utterance pairing quotas and enrollment-set size."""
    cm_targets: int = 2
    cm_nontargets: int = 2
    cm_spoofs: int = 2
    asv_targets: int = 2
    asv_nontargets: int = 2
    enroll_size: int = DEFAULT_ENROLL_SIZE

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if int(value) < 0:
                raise ContractViolation(f"TrialQuotas.{name} must be >= 0")
        if self.enroll_size < 1:
            raise ContractViolation("TrialQuotas.enroll_size must be >= 1")


# --- pair sampling -------------------------------------------------------------

@dataclass
class _SpeakerIndex:
    order: List[str] = field(default_factory=list)
    bona_fide: Dict[str, List[str]] = field(default_factory=dict)
    spoofs: Dict[str, List[str]] = field(default_factory=dict)

    @classmethod
    def of(cls, utts: Sequence[UtteranceMeta]):
        index = cls()
        seen_ids = set()
        for u in utts:
            if u.utt_id in seen_ids:
                raise ContractViolation(f"duplicate utterance id '{u.utt_id}'")
            seen_ids.add(u.utt_id)
            if u.speaker_id not in index.bona_fide:
                index.order.append(u.speaker_id)
                index.bona_fide[u.speaker_id] = []
                index.spoofs[u.speaker_id] = []
            (index.bona_fide if u.is_bona_fide else index.spoofs)[u.speaker_id].append(u.utt_id)
        return index


def _subset_pool(candidates, size):
    k = min(size, len(candidates))
    return k, math.comb(len(candidates), k) if k else 0


def _draw_subsets(rng, pools, quota, size):
    """Draw up to ``quota`` distinct enrollment subsets from a union of candidate pools.

    Each pool is an ordered list of utterance ids; a subset is taken from a single
    pool. When the pools hold no more than ``quota`` distinct subsets, all of them
    are returned in enumeration order.
    """
    pools = [p for p in pools if p]
    sizes = [_subset_pool(p, size) for p in pools]
    total = sum(n for _, n in sizes)
    if quota <= 0 or total == 0:
        return []
    if total <= quota:
        return [tuple(c) for p, (k, _) in zip(pools, sizes) for c in combinations(p, k)]
    weights = np.array([n for _, n in sizes], dtype=np.float64) / total
    chosen, seen = [], set()
    while len(chosen) < quota:
        i = int(rng.choice(len(pools), p=weights)) if len(pools) > 1 else 0
        k = sizes[i][0]
        picks = np.sort(rng.choice(len(pools[i]), size=k, replace=False))
        subset = tuple(pools[i][j] for j in picks)
        if subset not in seen:
            seen.add(subset)
            chosen.append(subset)
    return chosen


def _require_speakers(index):
    if len(index.order) < 2:
        raise ContractViolation("trial construction needs at least two speakers")
    empty = [s for s in index.order if not index.bona_fide[s]]
    if len(empty) == len(index.order):
        raise ContractViolation("no speaker has a bona fide utterance")


def _bona_fide_trials(index, rng, per_utt_targets, per_utt_nontargets, enroll_size):
    trials = []
    for speaker in index.order:
        own = index.bona_fide[speaker]
        for test_id in own:
            partners = [u for u in own if u != test_id]
            for enroll in _draw_subsets(rng, [partners], per_utt_targets, enroll_size):
                trials.append(Trial(enroll, test_id, TrialLabel.TARGET))
            others = [index.bona_fide[s] for s in index.order if s != speaker]
            for enroll in _draw_subsets(rng, others, per_utt_nontargets, enroll_size):
                trials.append(Trial(enroll, test_id, TrialLabel.NON_TARGET))
    return trials


def build_cm_trials(utts: Sequence[UtteranceMeta], per_utt_targets: int, per_utt_nontargets: int,
                    per_utt_spoofs: int, seed: int, enroll_size: int = DEFAULT_ENROLL_SIZE) -> List[Trial]:
    """
    Build the CM-training trials: all three classes.

    Parameters:
    utts: Utterance metadata; its order fixes the enumeration order.
    per_utt_targets: Max target trials per bona fide test utterance.
    per_utt_nontargets: Max zero-effort non-target trials per bona fide test utterance.
    per_utt_spoofs: Max spoof trials per spoofed test utterance, always against the
        same speaker's bona fide enrollment.
    seed: Sampling seed.
    enroll_size: Enrollment-set size, capped by availability.

    Returns:
    list of Trial: No (enrollment, test) pair appears twice.
    """
    index = _SpeakerIndex.of(utts)
    _require_speakers(index)
    rng = np.random.default_rng([seed, 1])
    trials = _bona_fide_trials(index, rng, per_utt_targets, per_utt_nontargets, enroll_size)
    skipped = 0
    for speaker in index.order:
        own = index.bona_fide[speaker]
        for test_id in index.spoofs[speaker]:
            if not own:
                skipped += 1
                continue
            for enroll in _draw_subsets(rng, [own], per_utt_spoofs, enroll_size):
                trials.append(Trial(enroll, test_id, TrialLabel.SPOOF))
    if skipped:
        logger.warning(f"Skipped {skipped} spoofed utterances whose speaker has no bona fide enrollment")
    logger.info(f"Built {len(trials)} CM trials: {class_counts(trials)}")
    return trials


def build_asv_trials(utts: Sequence[UtteranceMeta], per_utt_targets: int, per_utt_nontargets: int,
                     seed: int, enroll_size: int = DEFAULT_ENROLL_SIZE) -> List[Trial]:
    """Build the ASV-training trials from bona fide utterances only (never spoof trials)."""
    bona_fide = [u for u in utts if u.is_bona_fide]
    index = _SpeakerIndex.of(bona_fide)
    if not index.order:
        raise ContractViolation("no bona fide utterances to pair")
    rng = np.random.default_rng([seed, 2])
    trials = _bona_fide_trials(index, rng, per_utt_targets, per_utt_nontargets, enroll_size)
    logger.info(f"Built {len(trials)} ASV trials: {class_counts(trials)}")
    return trials


def build_atmm_datasets(utts: Sequence[UtteranceMeta], quotas: TrialQuotas, seed: int) -> AtmmDatasets:
    cm = build_cm_trials(utts, quotas.cm_targets, quotas.cm_nontargets, quotas.cm_spoofs, seed, quotas.enroll_size)
    asv = build_asv_trials(utts, quotas.asv_targets, quotas.asv_nontargets, seed, quotas.enroll_size)
    return AtmmDatasets(cm, asv)


def build_eval_trials(utts: Sequence[UtteranceMeta], quotas: TrialQuotas, seed: int) -> List[Trial]:
    """Held-out evaluation protocol with all three classes."""
    return build_cm_trials(utts, quotas.cm_targets, quotas.cm_nontargets, quotas.cm_spoofs,
                           seed + 7919, quotas.enroll_size)


def class_counts(trials: Sequence[Trial]) -> Dict[str, int]:
    counts = {label.value: 0 for label in TrialLabel}
    for t in trials:
        counts[t.label.value] += 1
    return counts


def sample_fraction(trials: Sequence[Trial], fraction: float, seed: int, step: int) -> List[Trial]:
    """
    Uniform sample without replacement of ceil(fraction * N) trials (at least one).

    The sample is a deterministic function of (seed, step).
    """
    return [trials[i] for i in sample_indices(len(trials), fraction, seed, step)]


def sample_indices(n: int, fraction: float, seed: int, step: int) -> np.ndarray:
    """Positions drawn by ``sample_fraction`` for a list of length ``n``."""
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation(f"sample fraction must lie in (0, 1], got {fraction}")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    # products such as 0.07 * 100 can land a hair above the integer
    k = min(n, max(1, math.ceil(round(fraction * n, 9))))
    rng = np.random.default_rng([seed, step, 3])
    return rng.permutation(n)[:k]


def merge_datasets(datasets: AtmmDatasets) -> List[Trial]:
    """The unified training set of conventional multi-task training."""
    return datasets.merged()


def attack_split_masks(trials: Sequence[Trial], attack_of: Dict[str, Optional[str]],
                       seen_attacks) -> Tuple[np.ndarray, np.ndarray]:
    """
    Boolean masks of the seen-attack (dev) and unseen-attack (eval) views of a protocol.

    Target and non-target trials belong to both views; a spoof trial belongs to
    the view its test utterance's attack falls in.

    Parameters:
    trials: The protocol.
    attack_of: Utterance id -> attack id (None for bona fide speech).
    seen_attacks: Attack ids present in the training data.

    Returns:
    tuple: (dev mask, eval mask), one entry per trial.
    """
    seen = set(seen_attacks)
    spoof = np.array([t.label == TrialLabel.SPOOF for t in trials], dtype=bool)
    known = np.array([attack_of.get(t.test_id) in seen for t in trials], dtype=bool)
    return ~spoof | known, ~spoof | ~known
