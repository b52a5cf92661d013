from .trials import (
    Authenticity,
    AtmmDatasets,
    Trial,
    TrialLabel,
    TrialLabels,
    TrialQuotas,
    UtteranceMeta,
    REFERENCE_TABLE_COUNTS,
    build_asv_trials,
    build_atmm_datasets,
    build_cm_trials,
    attack_split_masks,
    build_eval_trials,
    class_counts,
    labels_of,
    merge_datasets,
    sample_fraction,
)
from .store import EmbeddingStore, StoreRecord, read_store, store_bytes, store_from_bytes, write_store
from .synth import SynthConfig, generate
from .splitter import MIN_SPEAKERS, RandomSpeakerSplitStrategy, SpeakerSplitter, split_speakers
from .protocol import read_metadata, read_protocol, write_metadata, write_protocol
