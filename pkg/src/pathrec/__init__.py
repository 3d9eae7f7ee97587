"""Learnable K x D path index over items: EM-trained structure model, beam
search retrieval, softmax reranking, and a brute-force baseline."""

from .em import EmConfig, ScoreTable
from .reranker import SoftmaxModel
from .retrieval import ItemPathMapping
from .structure import StructureConfig, StructureParams, UserContext
from .trained import TrainedModel

__all__ = [
    "EmConfig", "ItemPathMapping", "ScoreTable", "SoftmaxModel",
    "StructureConfig", "StructureParams", "TrainedModel", "UserContext",
]
