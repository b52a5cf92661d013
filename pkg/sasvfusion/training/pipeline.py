from typing import List, Optional, Sequence, Tuple

from sasvfusion.data.store import EmbeddingStore
from sasvfusion.data.trials import AtmmDatasets, UtteranceMeta, build_atmm_datasets
from sasvfusion.exceptions import MissingUtteranceError
from sasvfusion.logger import get_logger
from sasvfusion.model.fusion import FusionModel, build_model
from sasvfusion.training.config import TrainConfig
from sasvfusion.training.optimizer import make_optimizer
from sasvfusion.training.trainer import ReportRow, atmm_report, train_atmm, train_conventional

logger = get_logger(__name__)


def fit_model(store: EmbeddingStore, cfg: TrainConfig, utts: Optional[Sequence[UtteranceMeta]] = None,
              datasets: Optional[AtmmDatasets] = None) -> Tuple[FusionModel, List[ReportRow]]:
    """
    Build trials from ``utts`` (default: the whole store), then train a fresh model.

    Prebuilt ``datasets`` skip the trial construction and ``utts``.

    With ``cfg.atmm`` the alternating schedule runs ``cfg.rounds`` rounds;
    otherwise the merged dataset is trained for ``cfg.epochs`` epochs.

    Returns:
    tuple: (model, report rows).
    """
    if datasets is None:
        datasets = training_datasets(store, cfg, utts)
    model = build_model(cfg.model_config(store.asv_dim, store.cm_dim))
    opt = make_optimizer(cfg.optimizer_config())
    logger.info(f"Training {cfg.strategy.upper()} (atmm={'on' if cfg.atmm else 'off'}, "
                f"bn={'on' if cfg.use_batchnorm else 'off'}, dropout={cfg.dropout_rate}) "
                f"on {len(datasets.cm_dataset)} CM / {len(datasets.asv_dataset)} ASV trials")
    if cfg.atmm:
        steps = train_atmm(model, datasets, store, cfg.atmm_config(), opt)
        return model, atmm_report(steps)
    rows = train_conventional(model, datasets.merged(), store, cfg.epochs, cfg.batch_size, opt, seed=cfg.seed)
    return model, rows


def training_datasets(store: EmbeddingStore, cfg: TrainConfig,
                      utts: Optional[Sequence[UtteranceMeta]] = None) -> AtmmDatasets:
    """CM and ASV training trials of ``utts`` (default: the whole store) under ``cfg``'s quotas and seed."""
    utts = store.metas() if utts is None else list(utts)
    absent = [u.utt_id for u in utts if u.utt_id not in store]
    if absent:
        raise MissingUtteranceError(f"{len(absent)} metadata entries are missing from the store, "
                                    f"e.g. '{absent[0]}'", absent)
    return build_atmm_datasets(utts, cfg.quotas(), cfg.seed)
