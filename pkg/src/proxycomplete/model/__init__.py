"""The proxy-based completion network."""
from .config import PROFILES, ModelConfig, expected_parameter_count, get_profile
from .fape import EncoderPlan, FeaturePositionExtractor, PositionExtractor, ProxySet
from .folding import FoldingDecoder
from .generator import CoarseHead, MissingFeatureGenerator, random_position_encoding
from .network import (
    CompletionModel,
    CompletionResult,
    LossBreakdown,
    TrainPlan,
    TrainSample,
    alignment_loss,
    chamfer_tensor,
    chamfer_tensor_with_prefix,
    constant_nn_d2,
    train_step,
    training_loss,
)
from .transformer import MissingPartSensitiveTransformer, SensitiveBlock

__all__ = [
    "PROFILES",
    "CoarseHead",
    "CompletionModel",
    "CompletionResult",
    "EncoderPlan",
    "FeaturePositionExtractor",
    "FoldingDecoder",
    "LossBreakdown",
    "MissingFeatureGenerator",
    "MissingPartSensitiveTransformer",
    "ModelConfig",
    "PositionExtractor",
    "ProxySet",
    "SensitiveBlock",
    "TrainPlan",
    "TrainSample",
    "alignment_loss",
    "chamfer_tensor",
    "chamfer_tensor_with_prefix",
    "constant_nn_d2",
    "expected_parameter_count",
    "get_profile",
    "random_position_encoding",
    "train_step",
    "training_loss",
]
