"""Segment-level attention model for enzyme temperature stability prediction."""

from .config import ModelConfig
from .embeddings import ResidueEmbedding, read_embedding, synth_embed, write_embedding
from .head import Prediction
from .metrics import EvalReport, WeightTable, build_weight_table, evaluate
from .model import Model
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "Checkpoint",
    "EvalReport",
    "Model",
    "ModelConfig",
    "Prediction",
    "ResidueEmbedding",
    "TrainConfig",
    "WeightTable",
    "build_weight_table",
    "evaluate",
    "load_checkpoint",
    "read_embedding",
    "save_checkpoint",
    "synth_embed",
    "train",
    "write_embedding",
]

__version__ = "0.1.0"
