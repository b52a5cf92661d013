from .fusion import (
    FusionModel,
    ForwardTrace,
    GradientSet,
    GroupTag,
    Mode,
    ModelConfig,
    ParamGroup,
    Strategy,
    TrialBatch,
    TrialInput,
    DEFAULT_DROPOUT,
    backward,
    build_model,
    enroll_aggregate,
    forward,
    parameter_census,
    saga_gate,
)
from .checkpoint import checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint
