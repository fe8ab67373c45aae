"""Top-k ranking and P@k / R@k / F1@k / NDCG@k evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import InteractionMatrix

METRICS = ("precision", "recall", "f1", "ndcg")
IDCG_MODES = ("full", "truncated")
DEFAULT_GRID = (10, 20, 40, 80, 160, math.inf)


class EvaluationError(RuntimeError):
    pass


@dataclass
class RankedList:
    user: int
    items: np.ndarray
    scores: np.ndarray
    short: bool = False


def top_k(scores: np.ndarray, user: int, k: int, exclude: Iterable[int] = ()) -> RankedList:
    """Highest-scoring non-excluded items; ties go to the lower item index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.ones(scores.size, dtype=bool)
    mask[list(exclude)] = False
    candidates = np.flatnonzero(mask)
    order = candidates[np.argsort(-scores[candidates], kind="stable")][:k]
    return RankedList(user, order, scores[order], short=order.size < k)


def _hits(ranked: Sequence[int], relevant: set, k: int) -> list[bool]:
    return [item in relevant for item in list(ranked)[:k]]


def precision_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> float:
    return sum(_hits(ranked, set(relevant), k)) / k


def recall_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> float:
    relevant = set(relevant)
    if not relevant:
        raise EvaluationError("recall is undefined for a user with no relevant items")
    return sum(_hits(ranked, relevant, k)) / len(relevant)


def f1_at_k(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def idcg(k: int, n_relevant: int, mode: str = "full") -> float:
    """Ideal DCG. ``full`` sums all k discounts; ``truncated`` stops at
    min(k, n_relevant) as most toolkits do."""
    if mode not in IDCG_MODES:
        raise ValueError(f"unknown idcg mode {mode!r}")
    n = k if mode == "full" else min(k, n_relevant)
    return float(_discounts(n).sum())


def ndcg_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int, mode: str = "full") -> float:
    relevant = set(relevant)
    hits = np.array(_hits(ranked, relevant, k), dtype=np.float64)
    norm = idcg(k, len(relevant), mode)
    if norm == 0:
        return 0.0
    dcg = float(np.sum((2.0**hits - 1.0) * _discounts(k)[: hits.size]))
    return dcg / norm


@dataclass
class EvalReport:
    split: str
    ks: list[int]
    idcg: str
    n_users: int
    n_skipped: int
    averages: dict[int, dict[str, float]]
    cold_start: list[dict]
    users: np.ndarray = field(repr=False)
    train_counts: np.ndarray = field(repr=False)
    per_user: dict[int, dict[str, np.ndarray]] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "ks": list(self.ks),
            "idcg": self.idcg,
            "evaluated_users": self.n_users,
            "skipped_users": self.n_skipped,
            "metrics": {str(k): self.averages[k] for k in self.ks},
            "cold_start": self.cold_start,
        }

    def table(self) -> str:
        lines = [f"{'k':>4}  {'P@k':>8}  {'R@k':>8}  {'F1@k':>8}  {'NDCG@k':>8}"]
        for k in self.ks:
            a = self.averages[k]
            lines.append(
                f"{k:>4}  {a['precision']:8.4f}  {a['recall']:8.4f}  {a['f1']:8.4f}  {a['ndcg']:8.4f}"
            )
        lines.append(f"users evaluated: {self.n_users} (skipped, no held-out positives: {self.n_skipped})")
        return "\n".join(lines)

    def cold_start_table(self) -> str:
        head = ["L", "users"] + [f"{m}@{k}" for k in self.ks for m in ("P", "R", "F1", "NDCG")]
        rows = ["\t".join(head)]
        for b in self.cold_start:
            vals = [str(b["max_train_interactions"]), str(b["users"])]
            for k in self.ks:
                m = b["metrics"].get(str(k)) if b["metrics"] else None
                vals += ["nan"] * 4 if m is None else [f"{m[x]:.6f}" for x in METRICS]
            rows.append("\t".join(vals))
        return "\n".join(rows) + "\n"

    def per_user_tsv(self, user_ids: Sequence[str] | None = None) -> str:
        head = ["user", "train_positives"] + [f"{m}@{k}" for k in self.ks for m in METRICS]
        rows = ["\t".join(head)]
        for row, u in enumerate(self.users):
            name = user_ids[u] if user_ids is not None else str(u)
            vals = [name, str(int(self.train_counts[row]))]
            for k in self.ks:
                vals += [f"{self.per_user[k][m][row]:.6f}" for m in METRICS]
            rows.append("\t".join(vals))
        return "\n".join(rows) + "\n"


def _grid_label(limit: float):
    return "inf" if math.isinf(limit) else int(limit)


def evaluate_scores(
    scores: np.ndarray,
    matrix: InteractionMatrix,
    ks: Sequence[int] = (1, 5, 10),
    split: str = "test",
    idcg_mode: str = "full",
    grid: Sequence[float] = DEFAULT_GRID,
    users: np.ndarray | None = None,
) -> EvalReport:
    """Average ranking metrics over users with held-out positives in ``split``.

    ``scores`` is (n_users x n_items), or (len(users) x n_items) when
    ``users`` is given. Training positives are never recommended; for the
    test split validation positives are excluded as well.
    """
    if split not in ("test", "valid"):
        raise ValueError(f"split must be 'test' or 'valid', got {split!r}")
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive integers, got {ks}")
    all_users = np.arange(matrix.n_users) if users is None else np.asarray(users, dtype=np.int64)
    if scores.shape != (all_users.size, matrix.n_items):
        raise EvaluationError(
            f"score matrix {scores.shape} does not match {all_users.size} users x {matrix.n_items} items"
        )

    held = matrix.csr(split)[all_users]
    excluded = matrix.csr("train", "valid") if split == "test" else matrix.csr("train")
    excluded = excluded[all_users]
    n_rel = np.diff(held.indptr)
    rows = np.flatnonzero(n_rel > 0)
    if rows.size == 0:
        raise EvaluationError(f"no user has positives in the {split!r} split")

    kmax = ks[-1]
    hits = np.zeros((rows.size, kmax), dtype=bool)
    chunk = 1024
    for s in range(0, rows.size, chunk):
        r = rows[s:s + chunk]
        block = np.array(scores[r], dtype=np.float64)
        ex = sp.csr_matrix(excluded[r])
        block[np.repeat(np.arange(r.size), np.diff(ex.indptr)), ex.indices] = -np.inf
        order = np.argsort(-block, axis=1, kind="stable")[:, :kmax]
        rel = held[r]
        valid = np.take_along_axis(block, order, axis=1) > -np.inf
        hits[s:s + chunk] = np.asarray(rel[np.arange(r.size)[:, None], order].todense(), dtype=bool) & valid

    n_rel = n_rel[rows].astype(np.float64)
    train_counts = np.diff(matrix.train.indptr)[all_users[rows]]
    disc = _discounts(kmax)
    per_user: dict[int, dict[str, np.ndarray]] = {}
    for k in ks:
        h = hits[:, :k]
        count = h.sum(axis=1)
        p = count / k
        r = count / n_rel
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
        dcg = (h * disc[:k]).sum(axis=1)
        if idcg_mode == "full":
            norm = np.full(rows.size, disc[:k].sum())
        elif idcg_mode == "truncated":
            cum = np.cumsum(disc[:k])
            norm = cum[np.minimum(k, n_rel.astype(np.int64)) - 1]
        else:
            raise ValueError(f"unknown idcg mode {idcg_mode!r}")
        per_user[k] = {"precision": p, "recall": r, "f1": f1, "ndcg": dcg / norm}

    def averages(mask: np.ndarray) -> dict[int, dict[str, float]]:
        return {k: {m: float(np.mean(per_user[k][m][mask])) for m in METRICS} for k in ks}

    everyone = np.ones(rows.size, dtype=bool)
    cold = []
    for limit in grid:
        mask = train_counts <= limit
        n = int(mask.sum())
        cold.append({
            "max_train_interactions": _grid_label(limit),
            "users": n,
            "metrics": {str(k): v for k, v in averages(mask).items()} if n else None,
        })
    return EvalReport(
        split=split,
        ks=ks,
        idcg=idcg_mode,
        n_users=int(rows.size),
        n_skipped=int(all_users.size - rows.size),
        averages=averages(everyone),
        cold_start=cold,
        users=all_users[rows],
        train_counts=train_counts,
        per_user=per_user,
    )


def evaluate(model, matrix: InteractionMatrix, ks: Sequence[int] = (1, 5, 10),
             split: str = "test", **kwargs) -> EvalReport:
    """Score every user with ``model`` and evaluate on ``split``."""
    from .model import predict

    return evaluate_scores(predict(model, matrix.train), matrix, ks, split, **kwargs)


def popularity_scores(matrix: InteractionMatrix) -> np.ndarray:
    """Every user gets the same scores: each item's training-positive count."""
    counts = np.asarray(matrix.train.sum(axis=0)).ravel()
    return np.tile(counts, (matrix.n_users, 1))
