"""Block mini-batch training with Adam and validation early stopping."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

from .data import InteractionMatrix
from .linalg import spawn
from .metrics import evaluate_scores
from .model import JovaModel, make_blocks, objective, predict, sample_epoch_negatives
from .nn import AdamState, adam_step

log = logging.getLogger(__name__)

# fixed order: appending names never changes existing streams
STREAMS = ["split", "init", "negatives", "blocks", "noise"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.003
    epochs: int = 200
    patience: int = 10
    seed: int = 0
    block_users: int = 1500
    block_items: int = 1500
    eval_k: int = 10

    def validate(self) -> None:
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")
        if self.block_users < 1 or self.block_items < 1:
            raise ValueError("block sizes must be >= 1")


@dataclass
class TrainResult:
    model: JovaModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_ndcg: float = -math.inf


def validation_ndcg(model: JovaModel, matrix: InteractionMatrix, k: int = 10) -> float:
    report = evaluate_scores(predict(model, matrix.train), matrix, ks=[k], split="valid", grid=())
    return report.averages[k]["ndcg"]


def train(
    model: JovaModel,
    matrix: InteractionMatrix,
    config: TrainConfig | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train ``model`` in place and return the best-validation copy.

    Each epoch resamples one negative per training positive, reshuffles the
    blocks, takes one Adam step per block, then scores NDCG@k on the
    validation split. Training stops after ``patience`` epochs without a
    strict improvement.
    """
    config = config or TrainConfig()
    config.validate()
    train_csr = matrix.train
    if train_csr.nnz == 0:
        raise TrainingError("training split is empty")
    model.check_dims(train_csr)
    has_valid = matrix.counts("valid") > 0

    rngs = spawn(config.seed, STREAMS)
    params = model.params()
    adam = AdamState.for_params(params, lr=config.lr)
    result = TrainResult(model.copy())
    stale = 0
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        triples = sample_epoch_negatives(train_csr, rngs["negatives"])
        blocks = make_blocks(train_csr, config.block_users, config.block_items, rngs["blocks"], triples)
        epoch_loss = 0.0
        for b, batch in enumerate(blocks):
            out = objective(model, batch, rngs["noise"])
            if not math.isfinite(out.total):
                raise TrainingError(f"non-finite loss {out.total} at epoch {epoch}, block {b}")
            adam_step(params, out.grads, adam)
            epoch_loss += out.total

        score = validation_ndcg(model, matrix, config.eval_k) if has_valid else -epoch_loss
        record = {
            "epoch": epoch,
            "train_loss": epoch_loss,
            f"valid_ndcg@{config.eval_k}": score if has_valid else None,
            "wall_time": time.perf_counter() - start,
        }
        result.history.append(record)
        if on_epoch:
            on_epoch(record)
        log.info("epoch %d loss %.4f valid ndcg@%d %.4f", epoch, epoch_loss, config.eval_k, score)

        if score > result.best_ndcg:
            result.best_ndcg, result.best_epoch = score, epoch
            result.model = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if not has_valid:
        result.best_ndcg = math.nan
    return result


def build_model(n_users: int, n_items: int, seed: int, **kwargs) -> JovaModel:
    """Fresh model initialised from the ``init`` stream of ``seed``."""
    return JovaModel.build(n_users, n_items, spawn(seed, STREAMS)["init"], **kwargs)

