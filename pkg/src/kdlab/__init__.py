"""Knowledge-distillation laboratory: temperature-scaled KL, its limits, and direct
logit matching (MSE), studied on small synthetic classification tasks."""
from . import data, diagnostics, distill, losses, network, numerics
from .data import Dataset
from .distill import RunResult, StageSpec, TrainConfig
from .losses import DistillObjective, LossKind
from .network import Mlp

__version__ = "0.1.0"
