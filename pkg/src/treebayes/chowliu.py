"""Maximum-likelihood tree fitting from empirical mutual information.

The classical baseline: score every pair by empirical mutual information,
take a maximum-weight spanning tree (greedy edge selection with cycle
rejection, lexicographic tie-break), and parameterize it with the
empirical pair and node marginals. Among all spanning-tree distributions
this maximizes the training log-likelihood.
"""

from __future__ import annotations

import numpy as np

from .data import SufficientStats
from .errors import ValidationError
from .trees import TreeDistribution, TreeStructure


def mutual_information(stats: SufficientStats) -> np.ndarray:
    """Empirical mutual information per pair, in nats, with 0 log 0 = 0."""
    if stats.total < 1:
        raise ValidationError("mutual information needs at least one row")
    n = stats.schema.n
    total = float(stats.total)
    pair = stats.pair_counts.astype(np.float64)
    node = stats.node_counts.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (np.log(pair) + np.log(total)
                 - np.log(node)[:, None, :, None]
                 - np.log(node)[None, :, None, :])
        terms = np.where(pair > 0, pair / total * inner, 0.0)
    mi = terms.sum(axis=(2, 3))
    np.fill_diagonal(mi, 0.0)
    # rounding can leave tiny negatives on independent pairs
    return np.maximum(mi, 0.0)


def max_weight_spanning_tree(scores: np.ndarray) -> TreeStructure:
    """Greedy maximum spanning tree; equal scores break toward the
    lexicographically smaller edge."""
    n = scores.shape[0]
    edges = sorted((-scores[u, v], u, v)
                   for u in range(n) for v in range(u + 1, n)
                   if np.isfinite(scores[u, v]))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    chosen = []
    for _, u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            chosen.append((u, v))
            if len(chosen) == n - 1:
                break
    if len(chosen) != n - 1:
        raise ValidationError("score graph cannot span all variables")
    return TreeStructure(n=n, edges=tuple(chosen))


def chow_liu_tree(stats: SufficientStats) -> TreeDistribution:
    """The maximum-likelihood spanning-tree distribution for the data."""
    structure = max_weight_spanning_tree(mutual_information(stats))
    schema = stats.schema
    total = float(stats.total)
    pair = {
        (u, v): stats.pair_counts[u, v, :schema.cards[u], :schema.cards[v]] / total
        for (u, v) in structure.edges
    }
    node = tuple(stats.node_counts[v, :schema.cards[v]] / total
                 for v in range(schema.n))
    return TreeDistribution(schema, structure, pair, node)


def training_log_likelihood(t: TreeDistribution, stats: SufficientStats) -> float:
    """Total log-likelihood of counted data under a tree distribution,
    with zero-count cells contributing exactly zero."""
    if t.schema != stats.schema:
        raise ValidationError("tree and statistics schemas differ")
    deg = t.structure.degrees()
    total = 0.0
    for (u, v), table in t.pair_marginals.items():
        counts = stats.pair_counts[u, v, :table.shape[0], :table.shape[1]]
        live = counts > 0
        if np.any(table[live] <= 0):
            return float("-inf")
        total += float((counts[live] * np.log(table[live])).sum())
    for v in range(stats.schema.n):
        e = deg[v] - 1
        if e == 0:
            continue
        counts = stats.node_counts[v, :stats.schema.cards[v]]
        live = counts > 0
        marg = t.node_marginals[v]
        if np.any(marg[live] <= 0):
            return float("-inf")
        total -= e * float((counts[live] * np.log(marg[live])).sum())
    return total
