"""Synthetic ASV/CM embeddings with the geometry of a spoofing attack.

Spoofed utterances imitate their target speaker in the ASV space (the
``mimicry`` share of their direction is the speaker's mean), while CM
embeddings of bona fide and spoofed speech form two gaussian clusters
``separation`` apart along a hidden artifact axis.
"""
from dataclasses import dataclass

import numpy as np

from sasvfusion.data.store import EmbeddingStore
from sasvfusion.data.trials import Authenticity, UtteranceMeta
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.nn.numerics import l2_normalize

logger = get_logger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 50
    utts_per_speaker: int = 20
    spoofs_per_speaker: int = 20
    asv_dim: int = 32
    cm_dim: int = 16
    speaker_noise: float = 0.3
    spoof_mimicry: float = 0.95
    cm_separation: float = 4.0
    n_attacks: int = 6
    n_unseen_attacks: int = 0
    unseen_spoofs_per_speaker: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ContractViolation("SynthConfig.n_speakers must be >= 2")
        if self.utts_per_speaker < 1 or self.spoofs_per_speaker < 0:
            raise ContractViolation("SynthConfig needs >= 1 bona fide and >= 0 spoofed utterances per speaker")
        if self.asv_dim < 1 or self.cm_dim < 1:
            raise ContractViolation("SynthConfig dimensions must be >= 1")
        if self.speaker_noise < 0:
            raise ContractViolation("SynthConfig.speaker_noise must be >= 0")
        if not 0.0 <= self.spoof_mimicry <= 1.0:
            raise ContractViolation("SynthConfig.spoof_mimicry must lie in [0, 1]")
        if self.cm_separation < 0:
            raise ContractViolation("SynthConfig.cm_separation must be >= 0")
        if self.n_attacks < 1:
            raise ContractViolation("SynthConfig.n_attacks must be >= 1")
        if self.n_unseen_attacks < 0 or self.unseen_spoofs_per_speaker < 0:
            raise ContractViolation("SynthConfig unseen-attack counts must be >= 0")
        if self.unseen_spoofs_per_speaker and not self.n_unseen_attacks:
            raise ContractViolation("SynthConfig.unseen_spoofs_per_speaker needs n_unseen_attacks >= 1")

    @property
    def seen_attacks(self):
        return [attack_id(k) for k in range(self.n_attacks)]

    @property
    def unseen_attacks(self):
        return [attack_id(self.n_attacks + k) for k in range(self.n_unseen_attacks)]


def _unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def speaker_id(i):
    return f"spk{i:03d}"


def attack_id(k):
    return f"A{k + 1:02d}"


def generate(cfg: SynthConfig) -> EmbeddingStore:
    """
    Generate a store: per speaker, the bona fide utterances followed by the spoofed ones.

    Bona fide ASV embeddings are ``normalize(mean + noise)`` around a random unit
    speaker direction; spoofed ones are ``normalize(mimicry * mean +
    (1 - mimicry) * attack_direction + noise)``. The noise has expected norm
    ``speaker_noise`` (per-coordinate deviation ``speaker_noise / sqrt(asv_dim)``).
    CM embeddings are unit gaussians centred at ``+separation/2`` (bona fide) or
    ``-separation/2`` (spoof) along a fixed artifact axis.

    The ``unseen_spoofs_per_speaker`` extra spoofs of each speaker follow its
    regular ones and use the attacks ``A{n_attacks + 1}`` onwards, whose
    directions are drawn after the regular ones; with the defaults (none) the
    store is unchanged.

    Returns:
    EmbeddingStore: Fully determined by ``cfg.seed``.
    """
    base = np.random.default_rng([cfg.seed, 0])
    artifact_axis = _unit(base, cfg.cm_dim)
    attack_dirs = [_unit(base, cfg.asv_dim) for _ in range(cfg.n_attacks + cfg.n_unseen_attacks)]
    sigma = cfg.speaker_noise / np.sqrt(cfg.asv_dim)
    mu = cfg.spoof_mimicry
    half = 0.5 * cfg.cm_separation

    store = EmbeddingStore(cfg.asv_dim, cfg.cm_dim)
    for i in range(cfg.n_speakers):
        rng = np.random.default_rng([cfg.seed, 1, i])
        spk = speaker_id(i)
        mean = _unit(rng, cfg.asv_dim)
        for j in range(cfg.utts_per_speaker):
            asv = l2_normalize(mean + sigma * rng.standard_normal(cfg.asv_dim))
            cm = half * artifact_axis + rng.standard_normal(cfg.cm_dim)
            store.add(UtteranceMeta(f"{spk}_bf{j:03d}", spk, Authenticity.BONA_FIDE), asv, cm)
        n_spoofs = cfg.spoofs_per_speaker + cfg.unseen_spoofs_per_speaker
        for j in range(n_spoofs):
            if j < cfg.spoofs_per_speaker:
                k = int(rng.integers(cfg.n_attacks))
            else:
                k = cfg.n_attacks + int(rng.integers(cfg.n_unseen_attacks))
            direction = mu * mean + (1.0 - mu) * attack_dirs[k]
            asv = l2_normalize(direction + sigma * rng.standard_normal(cfg.asv_dim))
            cm = -half * artifact_axis + rng.standard_normal(cfg.cm_dim)
            store.add(UtteranceMeta(f"{spk}_sp{j:03d}", spk, Authenticity.SPOOF, attack_id(k)), asv, cm)
    logger.info(f"Generated {len(store)} utterances for {cfg.n_speakers} speakers (seed {cfg.seed})")
    return store


def speaker_means(cfg: SynthConfig) -> np.ndarray:
    """The unit speaker directions ``generate`` draws, one row per speaker."""
    return np.vstack([_unit(np.random.default_rng([cfg.seed, 1, i]), cfg.asv_dim) for i in range(cfg.n_speakers)])


def artifact_axis(cfg: SynthConfig) -> np.ndarray:
    return _unit(np.random.default_rng([cfg.seed, 0]), cfg.cm_dim)
