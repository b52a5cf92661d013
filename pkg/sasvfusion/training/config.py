"""Training configuration file.

Plain ``key = value`` lines, ``#`` starts a comment::

    strategy = s1
    atmm = on
    use_batchnorm = off
    dropout_rate = 0.0
    rounds = 5
    seed = 7
"""
import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from sasvfusion.data.trials import TrialQuotas
from sasvfusion.exceptions import ConfigError, ContractViolation
from sasvfusion.model.fusion import ModelConfig, Strategy
from sasvfusion.training.optimizer import OptimizerConfig
from sasvfusion.training.trainer import DEFAULT_BATCH_SIZE, AtmmConfig

_SECTION = "train"
_BOOLEANS = {"1": True, "yes": True, "true": True, "on": True,
             "0": False, "no": False, "false": False, "off": False}


@dataclass(frozen=True)
class TrainConfig:
    # model
    strategy: str = "s1"
    hidden_cm: Optional[int] = None
    hidden_asv: Optional[int] = None
    hidden_post: Optional[int] = None
    use_batchnorm: bool = False
    dropout_rate: float = 0.0
    activation: str = "trelu"
    share_trelu: bool = True
    diagonal_trelu: bool = False
    cm_input: str = "both"
    # schedule
    atmm: bool = True
    epochs: int = 3
    batch_size: int = DEFAULT_BATCH_SIZE
    rounds: int = 5
    iters_per_round: int = 100
    sample_fraction: float = 0.01
    lambda_cm_focus: float = 0.1
    lambda_asv_focus: float = 0.9
    # optimizer
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # trial construction; CM class shares follow the reference training set (1:1:2)
    cm_targets: int = 50
    cm_nontargets: int = 50
    cm_spoofs: int = 100
    asv_targets: int = 100
    asv_nontargets: int = 100
    enroll_size: int = 3
    seed: int = 0

    def __post_init__(self):
        try:
            self.model_config(asv_dim=1, cm_dim=1)
            self.atmm_config()
            self.optimizer_config()
            self.quotas()
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from None
        if self.epochs < 0:
            raise ConfigError("TrainConfig.epochs must be >= 0")

    def with_overrides(self, **values) -> "TrainConfig":
        """Copy with every non-None value replaced (CLI flags win over the file)."""
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})

    def model_config(self, asv_dim: int, cm_dim: int) -> ModelConfig:
        return ModelConfig(
            strategy=Strategy.parse(self.strategy), asv_dim=asv_dim, cm_dim=cm_dim,
            hidden_cm=self.hidden_cm, hidden_asv=self.hidden_asv, hidden_post=self.hidden_post,
            use_batchnorm=self.use_batchnorm, dropout_rate=self.dropout_rate, seed=self.seed,
            activation=self.activation, share_trelu=self.share_trelu, diagonal_trelu=self.diagonal_trelu,
            cm_input=self.cm_input,
        )

    def atmm_config(self) -> AtmmConfig:
        return AtmmConfig(self.rounds, self.iters_per_round, self.sample_fraction, self.lambda_cm_focus,
                          self.lambda_asv_focus, self.batch_size, self.seed)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(self.optimizer, self.learning_rate, self.beta1, self.beta2, self.eps)

    def quotas(self) -> TrialQuotas:
        return TrialQuotas(self.cm_targets, self.cm_nontargets, self.cm_spoofs,
                           self.asv_targets, self.asv_nontargets, self.enroll_size)


def _convert(key, raw, annotation):
    text = raw.strip()
    try:
        if annotation is bool:
            if text.lower() not in _BOOLEANS:
                raise ValueError(text)
            return _BOOLEANS[text.lower()]
        if annotation is int:
            return int(text)
        if annotation == Optional[int]:
            return None if text.lower() in ("", "none", "auto") else int(text)
        if annotation is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot use value '{raw}'") from None


def parse_config(text: str, origin: str = "<config>") -> TrainConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in types:
            raise ConfigError(f"{origin}: unknown config key '{key}'")
        values[key] = _convert(key, raw, types[key])
    try:
        return TrainConfig(**values)
    except ContractViolation as exc:
        raise ConfigError(f"{origin}: {exc}") from None


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File '{path}' not found.")
    return parse_config(path.read_text(encoding="utf-8"), str(path))
