"""Online action detection on per-frame features.

A forward GRU trained with a cycle-consistency loss anticipates future
features, a second GRU aggregates observed and anticipated frames into
per-class probabilities with a learned smoothing recursion, and several
phase-shifted streams are averaged at test time.
"""

from .anticipation import AnticipationParams, forward_pass, phase1_step, phase2_step
from .metrics import EvalResult, evaluate
from .model import Model, ModelDims
from .numerics import BACKEND
from .pfa import PfaParams, classify
from .streaming import Ensemble, StreamConfig, predict_sequence
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AnticipationParams",
    "BACKEND",
    "Ensemble",
    "EvalResult",
    "Model",
    "ModelDims",
    "PfaParams",
    "StreamConfig",
    "TrainConfig",
    "classify",
    "evaluate",
    "forward_pass",
    "phase1_step",
    "phase2_step",
    "predict_sequence",
    "train",
]
