"""Trial protocol and utterance metadata files (headerless UTF-8 TSV).

protocol:  enroll_id1,enroll_id2,... <TAB> test_id <TAB> target|nontarget|spoof
metadata:  utt_id <TAB> speaker_id <TAB> bonafide|spoof <TAB> attack_id|-
"""
from typing import List, Sequence

import pandas as pd

from sasvfusion.data.trials import Authenticity, Trial, TrialLabel, UtteranceMeta
from sasvfusion.exceptions import ContractViolation
from sasvfusion.logger import get_logger
from sasvfusion.utils import read_tsv, write_tsv

logger = get_logger(__name__)

PROTOCOL_COLUMNS = ["enroll_ids", "test_id", "label"]
METADATA_COLUMNS = ["utt_id", "speaker_id", "authenticity", "attack_id"]
NO_ATTACK = "-"


def write_protocol(trials: Sequence[Trial], path):
    df = pd.DataFrame(
        [(",".join(t.enroll_ids), t.test_id, t.label.value) for t in trials],
        columns=PROTOCOL_COLUMNS,
    )
    return write_tsv(df, path)


def read_protocol(path) -> List[Trial]:
    df = read_tsv(path, PROTOCOL_COLUMNS)
    trials = []
    for i, row in enumerate(df.itertuples(index=False), start=1):
        enroll = tuple(e for e in row.enroll_ids.split(",") if e)
        if not enroll:
            raise ContractViolation(f"{path}:{i}: empty enrollment list")
        trials.append(Trial(enroll, row.test_id, TrialLabel.parse(row.label)))
    logger.info(f"Read {len(trials)} trials from {path}")
    return trials


def write_metadata(utts: Sequence[UtteranceMeta], path):
    df = pd.DataFrame(
        [(u.utt_id, u.speaker_id, u.authenticity.value, u.attack_id or NO_ATTACK) for u in utts],
        columns=METADATA_COLUMNS,
    )
    return write_tsv(df, path)


def read_metadata(path) -> List[UtteranceMeta]:
    df = read_tsv(path, METADATA_COLUMNS)
    utts = []
    for i, row in enumerate(df.itertuples(index=False), start=1):
        try:
            authenticity = Authenticity(row.authenticity.strip().lower())
        except ValueError:
            raise ContractViolation(f"{path}:{i}: authenticity must be 'bonafide' or 'spoof', got '{row.authenticity}'") from None
        attack = None if row.attack_id in ("", NO_ATTACK) else row.attack_id
        utts.append(UtteranceMeta(row.utt_id, row.speaker_id, authenticity, attack))
    return utts
