from abc import ABC, abstractmethod
from typing import List, Sequence, Tuple

from sklearn.model_selection import train_test_split

from sasvfusion.data.trials import UtteranceMeta
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger

logger = get_logger(__name__)

# two per side
MIN_SPEAKERS = 4


def _speakers_in_order(utts):
    seen = {}
    for u in utts:
        seen.setdefault(u.speaker_id, None)
    return list(seen)


# Abstract Base Class for Speaker Splitting Strategy
# --------------------------------------------------
# Partitions utterance metadata into training and held-out evaluation parts.
# No speaker may appear on both sides.
class SpeakerSplittingStrategy(ABC):
    @abstractmethod
    def split(self, utts: Sequence[UtteranceMeta]) -> Tuple[List[UtteranceMeta], List[UtteranceMeta]]:
        """
        Split utterances into (train, eval).

        Parameters:
        utts (list of UtteranceMeta): All utterances.

        Returns:
        train, eval: Speaker-disjoint lists, each keeping the input order.
        """
        pass


# Concrete Strategy for a Random Speaker Split
# --------------------------------------------
# Draws the held-out speakers with scikit-learn's train_test_split.
class RandomSpeakerSplitStrategy(SpeakerSplittingStrategy):
    def __init__(self, eval_fraction=0.3, seed=42):
        """
        Parameters:
        eval_fraction (float): Share of speakers held out for evaluation, in (0, 1).
        seed (int): The seed used by the random number generator.
        """
        if not 0.0 < eval_fraction < 1.0:
            raise ContractViolation(f"eval_fraction must lie in (0, 1), got {eval_fraction}")
        self.eval_fraction = eval_fraction
        self.seed = seed

    def split(self, utts):
        speakers = _speakers_in_order(utts)
        if len(speakers) < MIN_SPEAKERS:
            raise ContractViolation(f"a speaker split needs at least {MIN_SPEAKERS} speakers (two per side)")
        n_eval = min(len(speakers) - 2, max(2, round(self.eval_fraction * len(speakers))))
        _, eval_speakers = train_test_split(speakers, test_size=n_eval, random_state=self.seed % 2 ** 32)
        held_out = set(eval_speakers)
        train = [u for u in utts if u.speaker_id not in held_out]
        evaluation = [u for u in utts if u.speaker_id in held_out]
        logger.info(f"Speaker split: {len(speakers) - n_eval} train / {n_eval} eval speakers")
        return train, evaluation


# Context Class for Speaker Splitting
# -----------------------------------
class SpeakerSplitter:
    def __init__(self, strategy: SpeakerSplittingStrategy):
        self._strategy = strategy

    def set_strategy(self, strategy: SpeakerSplittingStrategy):
        logger.debug("Switching speaker splitting strategy.")
        self._strategy = strategy

    def split(self, utts: Sequence[UtteranceMeta]):
        return self._strategy.split(list(utts))


def split_speakers(utts: Sequence[UtteranceMeta], eval_fraction: float = 0.3, seed: int = 42):
    """Speaker-disjoint (train, eval) partition of ``utts``."""
    return SpeakerSplitter(RandomSpeakerSplitStrategy(eval_fraction, seed)).split(utts)
