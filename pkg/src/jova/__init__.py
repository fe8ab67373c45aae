"""Joint user/item variational autoencoders for top-k recommendation."""

from .data import InteractionMatrix, Schema, binarize, filter_min_interactions, ingest, split, stats
from .metrics import EvalReport, evaluate, evaluate_scores, f1_at_k, ndcg_at_k, precision_at_k, recall_at_k, top_k
from .model import (
    JovaModel,
    hinge_loss,
    jova_hinge_loss,
    jova_loss,
    make_blocks,
    predict,
    sample_negatives,
)
from .train import TrainConfig, build_model, train

__version__ = "0.1.0"
