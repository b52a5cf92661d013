from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from sasvfusion.data.trials import TrialLabel
from sasvfusion.exceptions import ContractViolation
from sasvfusion.utils import read_tsv, write_tsv

SCORE_COLUMNS = ["test_id", "label", "s_sasv", "s_cm"]
CLASS_ORDER = (TrialLabel.TARGET, TrialLabel.NON_TARGET, TrialLabel.SPOOF)


@dataclass
class ScoreSet:
    """Per-trial SASV and CM scores with the trial's three-way label."""
    labels: np.ndarray
    s_sasv: np.ndarray
    s_cm: np.ndarray
    test_ids: Optional[Sequence[str]] = field(default=None, repr=False)

    def __post_init__(self):
        self.labels = np.asarray([TrialLabel(l).value for l in self.labels], dtype=object)
        self.s_sasv = np.asarray(self.s_sasv, dtype=np.float64).reshape(-1)
        self.s_cm = np.asarray(self.s_cm, dtype=np.float64).reshape(-1)
        n = self.labels.shape[0]
        if self.s_sasv.shape != (n,) or self.s_cm.shape != (n,):
            raise ContractViolation("ScoreSet columns have different lengths")
        if not (np.all(np.isfinite(self.s_sasv)) and np.all(np.isfinite(self.s_cm))):
            raise ContractViolation("ScoreSet contains non-finite scores")
        if self.test_ids is None:
            self.test_ids = [f"trial{i}" for i in range(n)]
        elif len(self.test_ids) != n:
            raise ContractViolation("ScoreSet test_ids length differs from the scores")
        self.test_ids = list(self.test_ids)

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def from_classes(cls, target=(), nontarget=(), spoof=(), cm=None):
        """Build from per-class SASV score lists; CM scores default to 1.0."""
        parts = [(TrialLabel.TARGET, target), (TrialLabel.NON_TARGET, nontarget), (TrialLabel.SPOOF, spoof)]
        labels = [label.value for label, values in parts for _ in values]
        s_sasv = np.concatenate([np.asarray(v, dtype=np.float64).reshape(-1) for _, v in parts])
        s_cm = np.ones_like(s_sasv) if cm is None else cm
        return cls(labels, s_sasv, s_cm)

    def column(self, name="s_sasv") -> np.ndarray:
        if name not in ("s_sasv", "s_cm"):
            raise ContractViolation(f"unknown score column '{name}'")
        return getattr(self, name)

    def mask(self, label) -> np.ndarray:
        return self.labels == TrialLabel(label).value

    def of_class(self, label, column="s_sasv") -> np.ndarray:
        return self.column(column)[self.mask(label)]

    def class_counts(self):
        return {label.value: int(np.sum(self.mask(label))) for label in CLASS_ORDER}

    def subset(self, index) -> "ScoreSet":
        index = np.asarray(index)
        return ScoreSet(self.labels[index], self.s_sasv[index], self.s_cm[index],
                        [self.test_ids[i] for i in np.arange(len(self))[index]])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"test_id": self.test_ids, "label": self.labels,
                             "s_sasv": self.s_sasv, "s_cm": self.s_cm}, columns=SCORE_COLUMNS)


def write_scores(scores: ScoreSet, path):
    """Score file: ``test_id <TAB> label <TAB> s_sasv <TAB> s_cm``, no header."""
    return write_tsv(scores.to_frame(), path)


def read_scores(path) -> ScoreSet:
    df = read_tsv(path, SCORE_COLUMNS, dtype={"s_sasv": np.float64, "s_cm": np.float64})
    labels = [TrialLabel.parse(l) for l in df["label"]]
    return ScoreSet(labels, df["s_sasv"].to_numpy(), df["s_cm"].to_numpy(), list(df["test_id"]))
