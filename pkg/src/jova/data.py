"""Ingest rating files, binarize, filter users, and split interactions."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .io import read_archive, write_archive

log = logging.getLogger(__name__)

DATASET_FORMAT = "jova-dataset/1"
SPLITS = ("train", "valid", "test")
FORMATS = ("csv", "tsv", "movielens-dat")


class DataError(RuntimeError):
    pass


class RawRating(NamedTuple):
    user_id: str
    item_id: str
    value: float


@dataclass
class Schema:
    """Where to find the columns of a delimited ratings file.

    Columns are header names when ``header`` is set, otherwise 0-based
    positions. ``rating_col=None`` marks already-implicit data (value 1).
    """

    format: str = "csv"
    delimiter: str | None = None
    header: bool = False
    user_col: int | str = 0
    item_col: int | str = 1
    rating_col: int | str | None = 2

    def resolved_delimiter(self) -> str:
        if self.delimiter:
            return self.delimiter
        return {"csv": ",", "tsv": "\t", "movielens-dat": "::"}[self.format]


@dataclass
class Ingested:
    ratings: list[RawRating]
    malformed_lines: list[int] = field(default_factory=list)
    total_lines: int = 0


def _split_lines(path: Path, schema: Schema) -> Iterable[tuple[int, list[str]]]:
    delim = schema.resolved_delimiter()
    with open(path, newline="", encoding="utf-8", errors="replace") as fh:
        if len(delim) == 1:
            for lineno, row in enumerate(csv.reader(fh, delimiter=delim), start=1):
                yield lineno, row
        else:
            for lineno, line in enumerate(fh, start=1):
                yield lineno, line.rstrip("\r\n").split(delim)


def ingest(path: str | Path, schema: Schema | None = None, max_malformed: float = 0.01) -> Ingested:
    """Parse a delimited ratings file.

    Malformed lines are counted; more than ``max_malformed`` of the data
    lines being malformed is a hard error.
    """
    schema = schema or Schema()
    if schema.format not in FORMATS:
        raise DataError(f"unknown input format {schema.format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cannot read ratings file: {path}")

    rows = _split_lines(path, schema)
    cols = [schema.user_col, schema.item_col, schema.rating_col]
    if schema.header:
        try:
            _, names = next(rows)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        names = [n.strip() for n in names]
        try:
            cols = [c if c is None or isinstance(c, int) else names.index(c) for c in cols]
        except ValueError as exc:
            raise DataError(f"{path}: column not found in header {names}: {exc}") from None
    elif any(isinstance(c, str) for c in cols):
        raise DataError("named columns require header=True")
    ucol, icol, rcol = cols
    width = max(c for c in cols if c is not None) + 1

    out = Ingested([])
    for lineno, fields in rows:
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        out.total_lines += 1
        if len(fields) < width:
            out.malformed_lines.append(lineno)
            continue
        uid, iid = fields[ucol].strip(), fields[icol].strip()
        if rcol is None:
            value = 1.0
        else:
            try:
                value = float(fields[rcol])
            except ValueError:
                value = math.nan
        if not uid or not iid or not math.isfinite(value):
            out.malformed_lines.append(lineno)
            continue
        out.ratings.append(RawRating(uid, iid, value))

    bad = len(out.malformed_lines)
    if bad:
        log.warning("%s: %d of %d lines malformed", path, bad, out.total_lines)
    if out.total_lines and bad / out.total_lines > max_malformed:
        shown = ", ".join(map(str, out.malformed_lines[:20]))
        raise DataError(
            f"{path}: {bad} of {out.total_lines} lines malformed "
            f"(> {max_malformed:.1%}); first bad lines: {shown}"
        )
    return out


def binarize(ratings: Iterable[RawRating], threshold: float = 4.0) -> list[tuple[str, str]]:
    """Keep (user, item) pairs rated at or above ``threshold``; duplicates collapse."""
    seen: dict[tuple[str, str], None] = {}
    for r in ratings:
        if r.value >= threshold:
            seen.setdefault((r.user_id, r.item_id), None)
    return list(seen)


def filter_min_interactions(
    pairs: Sequence[tuple[str, str]], min_count: int = 20
) -> list[tuple[str, str]]:
    counts: dict[str, int] = {}
    for u, _ in pairs:
        counts[u] = counts.get(u, 0) + 1
    kept = [(u, i) for u, i in pairs if counts[u] >= min_count]
    if not kept:
        raise DataError(f"no user has at least {min_count} interactions")
    return kept


def _split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    n_train = int(round(n * ratios[0]))
    n_valid = min(int(round(n * ratios[1])), n - n_train)
    return n_train, n_valid, n - n_train - n_valid


class InteractionMatrix:
    """Binary user x item interactions, each labelled train/valid/test."""

    def __init__(
        self,
        user_ids: Sequence[str],
        item_ids: Sequence[str],
        users: np.ndarray,
        items: np.ndarray,
        split: np.ndarray,
    ):
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.split = np.asarray(split, dtype=np.int8)
        if not (self.users.shape == self.items.shape == self.split.shape):
            raise DataError("users, items and split labels must have equal length")
        if self.users.size and (self.users.max() >= self.n_users or self.items.max() >= self.n_items):
            raise DataError("interaction index out of range")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return int(self.users.size)

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.item_ids)}

    def csr(self, *splits: str) -> sp.csr_matrix:
        """0/1 user x item matrix restricted to the given split labels."""
        codes = [SPLITS.index(s) for s in splits]
        mask = np.isin(self.split, codes)
        data = np.ones(int(mask.sum()), dtype=np.float64)
        return sp.csr_matrix(
            (data, (self.users[mask], self.items[mask])), shape=(self.n_users, self.n_items)
        )

    @cached_property
    def train(self) -> sp.csr_matrix:
        return self.csr("train")

    @cached_property
    def train_t(self) -> sp.csr_matrix:
        return self.train.T.tocsr()

    def counts(self, split: str) -> int:
        return int(np.sum(self.split == SPLITS.index(split)))

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        meta = {
            "format": DATASET_FORMAT,
            "user_ids": self.user_ids,
            "item_ids": self.item_ids,
            **(extra_meta or {}),
        }
        write_archive(path, meta, {"users": self.users, "items": self.items, "split": self.split})

    @classmethod
    def load(cls, path: str | Path) -> "InteractionMatrix":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"dataset file not found: {path}")
        meta, arrays = read_archive(path)
        if meta.get("format") != DATASET_FORMAT:
            raise DataError(f"{path}: unsupported dataset format {meta.get('format')!r}")
        return cls(meta["user_ids"], meta["item_ids"], arrays["users"], arrays["items"], arrays["split"])

    @classmethod
    def from_dense(cls, train: np.ndarray, valid: np.ndarray | None = None,
                   test: np.ndarray | None = None) -> "InteractionMatrix":
        """Build from 0/1 matrices, one per split (handy for tests and toys)."""
        n, m = train.shape
        parts = []
        for code, mat in enumerate((train, valid, test)):
            if mat is None:
                continue
            u, i = np.nonzero(mat)
            parts.append((u, i, np.full(u.size, code)))
        users = np.concatenate([p[0] for p in parts])
        items = np.concatenate([p[1] for p in parts])
        split = np.concatenate([p[2] for p in parts])
        return cls([str(k) for k in range(n)], [str(k) for k in range(m)], users, items, split)


def split(
    pairs: Sequence[tuple[str, str]],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    rng: np.random.Generator | None = None,
) -> InteractionMatrix:
    """Uniform random train/valid/test split over all interactions.

    Users and items are reindexed densely in order of first appearance.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    if rng is None:
        raise ValueError("split needs an explicit rng")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users = np.empty(len(pairs), dtype=np.int64)
    items = np.empty(len(pairs), dtype=np.int64)
    for k, (u, i) in enumerate(pairs):
        users[k] = user_index.setdefault(u, len(user_index))
        items[k] = item_index.setdefault(i, len(item_index))

    n_train, n_valid, _ = _split_counts(len(pairs), ratios)
    labels = np.full(len(pairs), 2, dtype=np.int8)
    order = rng.permutation(len(pairs))
    labels[order[:n_train]] = 0
    labels[order[n_train:n_train + n_valid]] = 1
    return InteractionMatrix(list(user_index), list(item_index), users, items, labels)


def stats(matrix: InteractionMatrix) -> dict:
    cells = matrix.n_users * matrix.n_items
    return {
        "users": matrix.n_users,
        "items": matrix.n_items,
        "interactions": matrix.n_interactions,
        "sparsity": 1.0 - matrix.n_interactions / cells if cells else 0.0,
        "train": matrix.counts("train"),
        "valid": matrix.counts("valid"),
        "test": matrix.counts("test"),
    }


def sparsity(users: int, items: int, interactions: int) -> float:
    """Fraction of empty cells for raw counts."""
    return 1.0 - interactions / (users * items)
