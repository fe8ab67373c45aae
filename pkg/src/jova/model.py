"""User/item VAE ensemble, its losses, and block mini-batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import ShapeError
from .nn import sigmoid
from .vae import VAE, VaeForward, elbo_terms

MODES = ("jova", "jova_hinge", "user_vae_only")


@dataclass
class JovaModel:
    """Two VAEs: one reads user rows (width = items), one reads item columns
    (width = users). ``margin`` is the hinge margin."""

    user_vae: VAE
    item_vae: VAE
    alpha: float = 0.01
    beta: float = 0.01
    margin: float = 0.15
    mode: str = "jova_hinge"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.alpha < 0 or self.beta < 0 or self.margin < 0:
            raise ValueError("alpha, beta and margin must be non-negative")

    @classmethod
    def build(
        cls,
        n_users: int,
        n_items: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (320, 320),
        latent_dim: int = 80,
        **hyper,
    ) -> "JovaModel":
        user_vae = VAE.build(n_items, hidden, latent_dim, rng)
        item_vae = VAE.build(n_users, hidden, latent_dim, rng)
        return cls(user_vae, item_vae, **hyper)

    @property
    def n_users(self) -> int:
        return self.item_vae.n_in

    @property
    def n_items(self) -> int:
        return self.user_vae.n_in

    def params(self) -> list[np.ndarray]:
        return self.user_vae.params() + self.item_vae.params()

    def copy(self) -> "JovaModel":
        return JovaModel(
            self.user_vae.copy(), self.item_vae.copy(), self.alpha, self.beta, self.margin, self.mode
        )

    def check_dims(self, train: sp.spmatrix) -> None:
        if train.shape != (self.n_users, self.n_items):
            raise ShapeError(
                f"model expects a {self.n_users} x {self.n_items} matrix, got {train.shape}"
            )


def predict(
    model: JovaModel,
    train: sp.spmatrix,
    users: Sequence[int] | np.ndarray | None = None,
    chunk: int = 2048,
) -> np.ndarray:
    """Noiseless predicted interaction probabilities for ``users`` x all items.

    The ensemble score is the plain average of the two VAEs' reconstructions.
    """
    model.check_dims(train)
    train = sp.csr_matrix(train)
    users = np.arange(model.n_users) if users is None else np.asarray(users, dtype=np.int64)
    out = np.empty((users.size, model.n_items))
    for s in range(0, users.size, chunk):
        idx = users[s:s + chunk]
        out[s:s + chunk] = model.user_vae.reconstruct(train[idx].toarray())
    if model.mode == "user_vae_only":
        return out
    item_t = sp.csr_matrix(train.T)
    for s in range(0, model.n_items, chunk):
        rec = model.item_vae.reconstruct(item_t[s:s + chunk].toarray())
        out[:, s:s + chunk] += rec[:, users].T
    out *= 0.5
    return out


def hinge_loss(
    predictions: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float,
) -> float:
    """Sum of max(0, r_uj - r_ui + margin) over paired (u, i) / (u, j) indices."""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1, 2)
    if positives.shape != negatives.shape:
        raise ShapeError(f"{len(positives)} positives but {len(negatives)} negatives")
    r_pos = predictions[positives[:, 0], positives[:, 1]]
    r_neg = predictions[negatives[:, 0], negatives[:, 1]]
    return float(np.sum(np.maximum(0.0, r_neg - r_pos + margin)))


def _hinge_grad(predictions, positives, negatives, margin) -> np.ndarray:
    """Subgradient of ``hinge_loss`` w.r.t. ``predictions`` (0 at the kink)."""
    r_pos = predictions[positives[:, 0], positives[:, 1]]
    r_neg = predictions[negatives[:, 0], negatives[:, 1]]
    active = (r_neg - r_pos + margin > 0).astype(np.float64)
    g = np.zeros_like(predictions)
    np.add.at(g, (negatives[:, 0], negatives[:, 1]), active)
    np.add.at(g, (positives[:, 0], positives[:, 1]), -active)
    return g


class BlockBatch:
    """One block of users x items, plus the hinge triples that fall in it.

    Slabs are densified on access from the sparse training matrix, so a list
    of blocks stays cheap to hold.
    """

    def __init__(
        self,
        train: sp.csr_matrix,
        train_t: sp.csr_matrix,
        users: np.ndarray,
        items: np.ndarray,
        pairs: np.ndarray | None = None,
    ):
        self.train = train
        self.train_t = train_t
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        # (u, i, j) triples with u in users, i in items, j sampled outside I_u+
        self.pairs = np.zeros((0, 3), dtype=np.int64) if pairs is None else np.asarray(pairs, dtype=np.int64)

    @property
    def user_rows(self) -> np.ndarray:
        return self.train[self.users].toarray()

    @property
    def item_cols(self) -> np.ndarray:
        return self.train_t[self.items].toarray()

    def columns(self, items: np.ndarray) -> np.ndarray:
        return self.train_t[items].toarray()


def sample_negatives(
    train: sp.spmatrix, user: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """``count`` uniform draws from the items ``user`` has not interacted with."""
    row = sp.csr_matrix(train[user])
    observed = np.zeros(train.shape[1], dtype=bool)
    observed[row.indices] = True
    candidates = np.flatnonzero(~observed)
    if candidates.size == 0:
        return np.zeros(0, dtype=np.int64)
    return rng.choice(candidates, size=count)


def sample_epoch_negatives(train: sp.csr_matrix, rng: np.random.Generator) -> np.ndarray:
    """One negative per stored training positive, as (u, i, j) rows.

    Rejection sampling keeps each draw uniform over the user's unobserved
    items. Users with no unobserved item contribute no triples.
    """
    train = sp.csr_matrix(train)
    train.sort_indices()
    n_items = train.shape[1]
    counts = np.diff(train.indptr)
    users = np.repeat(np.arange(train.shape[0]), counts)
    items = train.indices.astype(np.int64)
    keep = counts[users] < n_items
    users, items = users[keep], items[keep]
    neg = rng.integers(0, n_items, size=users.size)
    bad = np.flatnonzero(_is_observed(train, users, neg))
    while bad.size:
        neg[bad] = rng.integers(0, n_items, size=bad.size)
        bad = bad[_is_observed(train, users[bad], neg[bad])]
    return np.stack([users, items, neg], axis=1)


def _is_observed(train: sp.csr_matrix, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    return np.asarray(train[users, items]).ravel() > 0


def make_blocks(
    train: sp.spmatrix,
    block_users: int = 1500,
    block_items: int = 1500,
    rng: np.random.Generator | None = None,
    triples: np.ndarray | None = None,
) -> list[BlockBatch]:
    """Shuffle users and items, chunk each, and visit every chunk pair once.

    Each (user, item) cell lands in exactly one block. ``triples`` from
    :func:`sample_epoch_negatives` are routed to the block owning (u, i).
    """
    if block_users < 1 or block_items < 1:
        raise ValueError("block sizes must be >= 1")
    if rng is None:
        raise ValueError("make_blocks needs an explicit rng")
    train = sp.csr_matrix(train)
    train_t = sp.csr_matrix(train.T)
    n, m = train.shape
    user_perm = rng.permutation(n)
    item_perm = rng.permutation(m)
    user_chunks = [user_perm[s:s + block_users] for s in range(0, n, block_users)]
    item_chunks = [item_perm[s:s + block_items] for s in range(0, m, block_items)]
    order = rng.permutation(len(user_chunks) * len(item_chunks))

    grouped: dict[int, np.ndarray] = {}
    if triples is not None and len(triples):
        user_chunk = np.empty(n, dtype=np.int64)
        item_chunk = np.empty(m, dtype=np.int64)
        for k, c in enumerate(user_chunks):
            user_chunk[c] = k
        for k, c in enumerate(item_chunks):
            item_chunk[c] = k
        key = user_chunk[triples[:, 0]] * len(item_chunks) + item_chunk[triples[:, 1]]
        srt = np.argsort(key, kind="stable")
        keys, starts = np.unique(key[srt], return_index=True)
        bounds = np.append(starts, srt.size)
        for k, lo, hi in zip(keys, bounds[:-1], bounds[1:]):
            grouped[int(k)] = triples[srt[lo:hi]]

    blocks = []
    for b in order:
        uc, ic = divmod(int(b), len(item_chunks))
        blocks.append(BlockBatch(train, train_t, user_chunks[uc], item_chunks[ic], grouped.get(int(b))))
    return blocks


def draw_noise(model: JovaModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterization noise for every user row and every item column.

    Drawn at full size and indexed by global id, so the noise a row sees does
    not depend on which other rows share its block.
    """
    return (
        rng.standard_normal((model.n_users, model.user_vae.latent_dim)),
        rng.standard_normal((model.n_items, model.item_vae.latent_dim)),
    )


@dataclass
class BlockLoss:
    total: float
    grads: list[np.ndarray]
    user_vae: float = 0.0
    item_vae: float = 0.0
    hinge: float = 0.0
    n_pairs: int = 0


def _block_objective(
    model: JovaModel,
    batch: BlockBatch,
    noise: tuple[np.ndarray, np.ndarray],
    use_items: bool,
    hinge_weight: float,
) -> BlockLoss:
    eps_u, eps_i = noise
    alpha = model.alpha
    x_u = batch.user_rows
    fwd_u = model.user_vae.forward(x_u, eps_u[batch.users])
    loss_u = elbo_terms(x_u, fwd_u, alpha)
    p_u = sigmoid(fwd_u.logits)
    dlog_u = p_u - x_u

    pairs = batch.pairs
    with_hinge = hinge_weight > 0 and len(pairs) > 0
    cols = batch.items
    if with_hinge:
        extra = np.setdiff1d(np.unique(pairs[:, 2]), batch.items)
        cols = np.concatenate([batch.items, extra])

    loss_i = 0.0
    fwd_i: VaeForward | None = None
    n_own = batch.items.size
    if use_items and cols.size:
        x_i = batch.columns(cols)
        fwd_i = model.item_vae.forward(x_i, eps_i[cols])
        # extra negative columns feed the hinge only, not the ELBO
        loss_i = elbo_terms(x_i, fwd_i, alpha, rows=n_own)
        p_i = sigmoid(fwd_i.logits)
        dlog_i = p_i - x_i
        dlog_i[n_own:] = 0.0
        kl_w = np.full(cols.size, alpha)
        kl_w[n_own:] = 0.0

    hinge = 0.0
    if with_hinge:
        col_pos = np.full(model.n_items, -1, dtype=np.int64)
        col_pos[cols] = np.arange(cols.size)
        user_pos = np.full(model.n_users, -1, dtype=np.int64)
        user_pos[batch.users] = np.arange(batch.users.size)
        lu = user_pos[pairs[:, 0]]
        li, lj = col_pos[pairs[:, 1]], col_pos[pairs[:, 2]]
        pos = np.stack([lu, li], axis=1)
        neg = np.stack([lu, lj], axis=1)
        pu_cols = p_u[:, cols]
        if use_items:
            pi_users = p_i[:, batch.users].T
            preds = 0.5 * (pu_cols + pi_users)
            share = 0.5
        else:
            preds = pu_cols
            share = 1.0
        hinge = hinge_loss(preds, pos, neg, model.margin)
        g = hinge_weight * share * _hinge_grad(preds, pos, neg, model.margin)
        dlog_u[:, cols] += g * pu_cols * (1.0 - pu_cols)
        if use_items:
            dlog_i[:, batch.users] += (g * pi_users * (1.0 - pi_users)).T

    grads = model.user_vae.backward(fwd_u, dlog_u, alpha)
    if fwd_i is not None:
        grads += model.item_vae.backward(fwd_i, dlog_i, kl_w)
    else:
        grads += [np.zeros_like(p) for p in model.item_vae.params()]
    total = loss_u + loss_i + hinge_weight * hinge
    return BlockLoss(total, grads, loss_u, loss_i, hinge, len(pairs))


def jova_loss(model: JovaModel, batch: BlockBatch, rng: np.random.Generator) -> BlockLoss:
    """Summed user-row and item-column VAE losses over the block."""
    return _block_objective(model, batch, draw_noise(model, rng), use_items=True, hinge_weight=0.0)


def jova_hinge_loss(model: JovaModel, batch: BlockBatch, rng: np.random.Generator) -> BlockLoss:
    """Joint VAE loss plus beta times the hinge ranking loss on averaged scores."""
    if model.mode != "jova_hinge":
        raise ValueError(f"jova_hinge_loss needs mode 'jova_hinge', model is {model.mode!r}")
    return _block_objective(model, batch, draw_noise(model, rng), use_items=True, hinge_weight=model.beta)


def objective(model: JovaModel, batch: BlockBatch, rng: np.random.Generator) -> BlockLoss:
    """The training loss for the model's mode.

    ``user_vae_only`` trains the user VAE alone, with the beta-weighted hinge
    applied to its own scores (beta = 0 gives a plain VAE recommender).
    """
    if model.mode == "jova":
        return jova_loss(model, batch, rng)
    if model.mode == "jova_hinge":
        return jova_hinge_loss(model, batch, rng)
    return _block_objective(model, batch, draw_noise(model, rng), use_items=False, hinge_weight=model.beta)


MODEL_FORMAT = "jova-model/1"


def _net_arrays(prefix: str, vae: VAE, arrays: dict, acts: dict) -> None:
    for part, net in (("encoder", vae.encoder), ("decoder", vae.decoder)):
        acts[part] = [layer.activation for layer in net.layers]
        for k, layer in enumerate(net.layers):
            arrays[f"{prefix}.{part}.{k}.weight"] = layer.weight
            arrays[f"{prefix}.{part}.{k}.bias"] = layer.bias


def save_model(path, model: JovaModel, extra_meta: dict | None = None) -> None:
    """Write both VAEs, hyperparameters and caller metadata (seed, config)."""
    from .io import write_archive

    arrays: dict[str, np.ndarray] = {}
    layers: dict[str, dict] = {"user": {}, "item": {}}
    _net_arrays("user", model.user_vae, arrays, layers["user"])
    _net_arrays("item", model.item_vae, arrays, layers["item"])
    meta = {
        "format": MODEL_FORMAT,
        "n_users": model.n_users,
        "n_items": model.n_items,
        "latent_dim": model.user_vae.latent_dim,
        "alpha": model.alpha,
        "beta": model.beta,
        "margin": model.margin,
        "mode": model.mode,
        "activations": layers,
        **(extra_meta or {}),
    }
    write_archive(path, meta, arrays)


def load_model(path) -> tuple[JovaModel, dict]:
    from .io import read_archive
    from .nn import MLP, Layer

    meta, arrays = read_archive(path)
    if meta.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: unsupported model format {meta.get('format')!r}")

    def net(prefix: str, part: str) -> MLP:
        acts = meta["activations"][prefix][part]
        return MLP([
            Layer(arrays[f"{prefix}.{part}.{k}.weight"], arrays[f"{prefix}.{part}.{k}.bias"], a)
            for k, a in enumerate(acts)
        ])

    model = JovaModel(
        VAE(net("user", "encoder"), net("user", "decoder")),
        VAE(net("item", "encoder"), net("item", "decoder")),
        meta["alpha"], meta["beta"], meta["margin"], meta["mode"],
    )
    return model, meta
