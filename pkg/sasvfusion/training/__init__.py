from .loss import CONVENTIONAL_LAMBDA, LossConfig, total_loss
from .optimizer import Adam, Optimizer, OptimizerConfig, OptimizerState, Sgd, apply_update, make_optimizer
from .scoring import TrialTable, check_trials, cm_baseline_scores, cosine_baseline_scores, export_scores
from .trainer import (
    AtmmConfig,
    AtmmStep,
    ReportRow,
    atmm_report,
    atmm_round,
    train_atmm,
    train_conventional,
    write_report,
)
from .config import TrainConfig, load_config, parse_config
from .pipeline import fit_model, training_datasets
