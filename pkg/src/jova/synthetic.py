"""Toy implicit-feedback data with planted community structure."""
from __future__ import annotations

import numpy as np

from .data import InteractionMatrix, split


def community_pairs(
    n_users: int = 300,
    n_items: int = 200,
    n_communities: int = 4,
    per_user: int = 30,
    rng: np.random.Generator | None = None,
) -> list[tuple[str, str]]:
    """Users and items are split into equal communities; each user picks
    ``per_user`` distinct items uniformly from their own community."""
    if rng is None:
        raise ValueError("community_pairs needs an explicit rng")
    item_groups = np.array_split(np.arange(n_items), n_communities)
    if per_user > min(len(g) for g in item_groups):
        raise ValueError("per_user exceeds community size")
    pairs = []
    for u in range(n_users):
        group = item_groups[u * n_communities // n_users]
        for i in np.sort(rng.choice(group, size=per_user, replace=False)):
            pairs.append((f"u{u}", f"i{int(i)}"))
    return pairs


def community_dataset(seed: int = 0, **kwargs) -> InteractionMatrix:
    rng = np.random.default_rng(seed)
    return split(community_pairs(rng=rng, **kwargs), (0.8, 0.1, 0.1), rng)
