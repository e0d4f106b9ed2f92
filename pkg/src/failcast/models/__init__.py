from .base import (InstanceWeights, MODEL_KINDS, ModelSpec, NEURAL_KINDS,
                   ScoredInstance, TrainedModel, gradient_check, train)
from .gbdt import GBDTModel, train_gbdt
from .nets import weighted_squared_loss

__all__ = [
    "InstanceWeights", "MODEL_KINDS", "ModelSpec", "NEURAL_KINDS",
    "ScoredInstance", "TrainedModel", "gradient_check", "train",
    "GBDTModel", "train_gbdt", "weighted_squared_loss",
]
