"""Independent reference implementations used only by the tests.

Everything here is a direct, loop-based transcription of the metric and
baseline definitions. None of it imports from the code under test except
plain data containers.
"""
import math


def ranked_items(scores, exclude, k):
    cands = [i for i in range(len(scores)) if i not in exclude]
    cands.sort(key=lambda i: (-scores[i], i))
    return cands[:k]


def precision(ranked, relevant, k):
    return sum(1 for i in range(k) if i < len(ranked) and ranked[i] in relevant) / k


def recall(ranked, relevant, k):
    return sum(1 for i in range(k) if i < len(ranked) and ranked[i] in relevant) / len(relevant)


def f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def ndcg(ranked, relevant, k, truncated=False):
    dcg = 0.0
    for i in range(1, k + 1):
        hit = 1 if i <= len(ranked) and ranked[i - 1] in relevant else 0
        dcg += (2**hit - 1) / math.log2(i + 1)
    n = min(k, len(relevant)) if truncated else k
    idcg = sum(1 / math.log2(i + 1) for i in range(1, n + 1))
    return dcg / idcg


def user_sets(matrix):
    """train / valid / test item sets per dense user index."""
    sets = {s: [set() for _ in range(matrix.n_users)] for s in (0, 1, 2)}
    for u, i, s in zip(matrix.users.tolist(), matrix.items.tolist(), matrix.split.tolist()):
        sets[s][u].add(i)
    return sets[0], sets[1], sets[2]


def bruteforce_report(scores, matrix, k, split="test"):
    """Average P/R/F1/NDCG@k with loops; returns dict of averages."""
    train, valid, test = user_sets(matrix)
    held = test if split == "test" else valid
    totals = {"precision": 0.0, "recall": 0.0, "f1": 0.0, "ndcg": 0.0}
    n = 0
    for u in range(matrix.n_users):
        if not held[u]:
            continue
        exclude = train[u] | valid[u] if split == "test" else train[u]
        ranked = ranked_items(list(scores[u]), exclude, k)
        p, r = precision(ranked, held[u], k), recall(ranked, held[u], k)
        totals["precision"] += p
        totals["recall"] += r
        totals["f1"] += f1(p, r)
        totals["ndcg"] += ndcg(ranked, held[u], k)
        n += 1
    return {m: v / n for m, v in totals.items()}


def popularity_recall(matrix, k):
    """R@k of ranking items by training-positive count, computed by counting."""
    counts = [0] * matrix.n_items
    for i, s in zip(matrix.items.tolist(), matrix.split.tolist()):
        if s == 0:
            counts[i] += 1
    return bruteforce_report([counts] * matrix.n_users, matrix, k)["recall"]


def random_expectation(matrix, k, split="test"):
    """Exact expected averages under a uniformly random ranking.

    With c candidates, t of them relevant, the expected number of hits in the
    top k (c >= k) is k*t/c; P, R, F1 = 2h/(k+t) and full-k NDCG are
    all linear in the hit indicators, so their expectations follow directly.
    """
    train, valid, test = user_sets(matrix)
    held = test if split == "test" else valid
    acc = {"precision": 0.0, "recall": 0.0, "f1": 0.0, "ndcg": 0.0}
    n = 0
    for u in range(matrix.n_users):
        t = len(held[u])
        if not t:
            continue
        excluded = train[u] | valid[u] if split == "test" else train[u]
        c = matrix.n_items - len(excluded)
        assert c >= k
        acc["precision"] += t / c
        acc["recall"] += k / c
        acc["f1"] += 2 * k * t / (c * (k + t))
        acc["ndcg"] += t / c
        n += 1
    return {m: v / n for m, v in acc.items()}
