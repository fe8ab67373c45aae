"""A single variational autoencoder over binary vectors.

Encoder: tanh hidden layers, then a linear layer emitting ``[mu | logvar]``.
Decoder: tanh hidden layers, then a sigmoid output layer. Losses are always
computed from the decoder's pre-sigmoid logits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import ShapeError
from .nn import MLP, Tape, sigmoid


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """KL(N(mu, exp(logvar)) || N(0, I)) for each row."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    # expm1(lv) - lv is exp(lv) - 1 - lv without cancellation near 0
    return 0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar, axis=-1)


def bce_with_logits(x: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Elementwise -[x log s(o) + (1-x) log(1-s(o))], never evaluating log(0)."""
    return np.maximum(logits, 0.0) - x * logits + np.log1p(np.exp(-np.abs(logits)))


def logistic_log_likelihood(x: np.ndarray, logits: np.ndarray) -> float:
    """Bernoulli log-likelihood of binary ``x`` under sigmoid(``logits``)."""
    x = np.asarray(x, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if x.shape != logits.shape:
        raise ShapeError(f"x {x.shape} and logits {logits.shape} differ")
    return -float(np.sum(bce_with_logits(x, logits)))


def reparameterize(mu: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    if not (mu.shape == logvar.shape == eps.shape):
        raise ShapeError(f"mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape} differ")
    return mu + np.exp(0.5 * logvar) * eps


@dataclass
class VaeForward:
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    logits: np.ndarray
    enc_tape: Tape
    dec_tape: Tape

    @property
    def reconstruction(self) -> np.ndarray:
        return sigmoid(self.logits)


class VAE:
    def __init__(self, encoder: MLP, decoder: MLP):
        if encoder.n_out % 2:
            raise ShapeError("encoder output width must be even (mu and logvar halves)")
        d = encoder.n_out // 2
        if decoder.n_in != d:
            raise ShapeError(f"decoder input width {decoder.n_in} != latent dim {d}")
        if decoder.n_out != encoder.n_in:
            raise ShapeError(
                f"decoder output width {decoder.n_out} != encoder input width {encoder.n_in}"
            )
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(
        cls, n_in: int, hidden: Sequence[int], latent_dim: int, rng: np.random.Generator
    ) -> "VAE":
        hidden = list(hidden)
        enc = MLP.glorot(
            [n_in, *hidden, 2 * latent_dim], ["tanh"] * len(hidden) + ["linear"], rng
        )
        dec = MLP.glorot(
            [latent_dim, *hidden[::-1], n_in], ["tanh"] * len(hidden) + ["sigmoid"], rng
        )
        return cls(enc, dec)

    @property
    def n_in(self) -> int:
        return self.encoder.n_in

    @property
    def latent_dim(self) -> int:
        return self.decoder.n_in

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.decoder.params()

    def copy(self) -> "VAE":
        return VAE(self.encoder.copy(), self.decoder.copy())

    def encode(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out, _ = self.encoder.forward(x)
        d = self.latent_dim
        return out[:, :d], out[:, d:]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Noiseless reconstruction probabilities (z = mu)."""
        mu, _ = self.encode(x)
        probs, _ = self.decoder.forward(mu)
        return probs

    def forward(self, x: np.ndarray, eps: np.ndarray) -> VaeForward:
        out, enc_tape = self.encoder.forward(x)
        d = self.latent_dim
        mu, logvar = out[:, :d], out[:, d:]
        z = reparameterize(mu, logvar, eps)
        _, dec_tape = self.decoder.forward(z)
        return VaeForward(mu, logvar, eps, z, dec_tape.logits, enc_tape, dec_tape)

    def backward(
        self, fwd: VaeForward, dlogits: np.ndarray, kl_weight: float | np.ndarray
    ) -> list[np.ndarray]:
        """Gradients of ``sum(dlogits * logits) + sum(kl_weight * KL)``.

        ``dlogits`` is the loss gradient w.r.t. decoder logits; the KL term's
        contribution is added here. ``kl_weight`` may be a scalar or one
        weight per row.
        """
        dec_grads, dz = self.decoder.backward(fwd.dec_tape, dlogits, wrt_logits=True)
        kl_weight = np.asarray(kl_weight, dtype=np.float64)
        if kl_weight.ndim == 1:
            kl_weight = kl_weight[:, None]
        std = np.exp(0.5 * fwd.logvar)
        dmu = dz + kl_weight * fwd.mu
        dlogvar = dz * 0.5 * std * fwd.eps + kl_weight * 0.5 * np.expm1(fwd.logvar)
        enc_grads, _ = self.encoder.backward(fwd.enc_tape, np.concatenate([dmu, dlogvar], axis=1))
        return enc_grads + dec_grads


def elbo_terms(x: np.ndarray, fwd: VaeForward, alpha: float, rows: int | None = None) -> float:
    """Negative log-likelihood plus alpha * KL, summed over the first ``rows`` rows."""
    r = slice(None) if rows is None else slice(0, rows)
    nll = np.sum(bce_with_logits(x[r], fwd.logits[r]))
    return float(nll + alpha * np.sum(kl_divergence(fwd.mu[r], fwd.logvar[r])))


def vae_loss(
    vae: VAE, x: np.ndarray, alpha: float, rng: np.random.Generator | None = None,
    eps: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Alpha-weighted negative ELBO over the rows of ``x`` and its gradients.

    One reparameterization sample per row; pass ``eps`` to fix the noise.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    if eps is None:
        if rng is None:
            raise ValueError("need either rng or eps")
        eps = rng.standard_normal((x.shape[0], vae.latent_dim))
    fwd = vae.forward(x, eps)
    loss = elbo_terms(x, fwd, alpha)
    grads = vae.backward(fwd, sigmoid(fwd.logits) - x, alpha)
    return loss, grads
