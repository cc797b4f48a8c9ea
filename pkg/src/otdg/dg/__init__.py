"""Domain generalization with Wasserstein-barycenter feature alignment."""

from .config import ALPHA_GRID, BETA_GRID, METHODS, ConfigError, TrainConfig
from .estimator import WassersteinBarycenterClassifier
from .losses import LossError, classification_loss, cross_entropy, reconstruction_loss
from .model import FORMAT_VERSION, MAGIC, Model, ModelError
from .optim import SGD, Adam, make_optimizer
from .steps import StepError, StepRecord, compute_barycenter, erm_step, wbae_step, wbmi_step
from .train import (
    ABLATION_VARIANTS,
    AblationTable,
    Cell,
    EpochRecord,
    LOOTable,
    RunReport,
    TrainError,
    ablate,
    accuracy,
    encoded_divergence,
    leave_one_out,
    select_epoch,
    train,
)

__all__ = [
    "ABLATION_VARIANTS",
    "ALPHA_GRID",
    "AblationTable",
    "Adam",
    "BETA_GRID",
    "Cell",
    "ConfigError",
    "EpochRecord",
    "FORMAT_VERSION",
    "LOOTable",
    "LossError",
    "MAGIC",
    "METHODS",
    "Model",
    "ModelError",
    "RunReport",
    "SGD",
    "StepError",
    "StepRecord",
    "TrainConfig",
    "TrainError",
    "WassersteinBarycenterClassifier",
    "ablate",
    "accuracy",
    "classification_loss",
    "compute_barycenter",
    "cross_entropy",
    "encoded_divergence",
    "erm_step",
    "leave_one_out",
    "make_optimizer",
    "reconstruction_loss",
    "select_epoch",
    "train",
    "wbae_step",
    "wbmi_step",
]
