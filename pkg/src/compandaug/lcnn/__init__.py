from .layers import (MFM, BatchNorm, Conv2d, Dense, Dropout, Flatten, MaxPool2d, ShapeError,
                     UttNorm, mfm_forward, softmax_cross_entropy)
from .model import DEFAULT_LAYERS, CheckpointError, Lcnn, LcnnSpec
from .scoring import ScoreRecord, score_set
from .training import BONAFIDE, SPOOF, DegenerateDataError, TrainConfig, TrainLog, train

__all__ = [
    "MFM", "BatchNorm", "Conv2d", "Dense", "Dropout", "Flatten", "MaxPool2d", "ShapeError", "UttNorm",
    "mfm_forward", "softmax_cross_entropy", "DEFAULT_LAYERS", "Lcnn", "LcnnSpec",
    "ScoreRecord", "score_set", "BONAFIDE", "SPOOF", "DegenerateDataError", "TrainConfig",
    "TrainLog", "train",
]
