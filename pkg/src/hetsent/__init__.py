"""Aspect-based sentiment classification over heterogeneous dependency graphs."""

__version__ = "0.1.0"

from .corpus import LabeledInstance, EmbeddingTable, EncodedInstance  # noqa: F401
from .model import ModelConfig, SentimentGraphModel  # noqa: F401
from .train import TrainConfig, train, evaluate, run_ablations  # noqa: F401
