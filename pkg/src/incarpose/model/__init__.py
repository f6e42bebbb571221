"""Two-view relative pose network and its training loop."""

from .layers import Attention, DecoderBlock, rope2d_apply, rope2d_tables
from .network import (
    InCaRPoseNet,
    ModelConfig,
    StubBackbone,
    TokenGrid,
    model_forward,
    paper_preset,
    postprocess_output,
    stub_backbone_forward,
)
from .train import TrainConfig, evaluate, paper_train_config, stack_dataset, train

__all__ = [
    "Attention",
    "DecoderBlock",
    "InCaRPoseNet",
    "ModelConfig",
    "StubBackbone",
    "TokenGrid",
    "TrainConfig",
    "evaluate",
    "model_forward",
    "paper_preset",
    "paper_train_config",
    "postprocess_output",
    "rope2d_apply",
    "rope2d_tables",
    "stack_dataset",
    "stub_backbone_forward",
    "train",
]
