"""Datasets of complete discrete observations and their sufficient statistics.

Counts are exact 64-bit integers; they only become reals at the
gamma-function boundary in the posterior computations. Pair and node count
tables are stored padded to the maximum cardinality, with cells beyond a
variable's cardinality always zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .trees import DomainSchema


@dataclass(frozen=True)
class Dataset:
    """Complete observations: one row per sample, one column per variable."""

    schema: DomainSchema
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.size == 0:
            rows = rows.reshape(0, self.schema.n)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n:
            raise ValidationError(
                f"rows have shape {rows.shape}, expected (N, {self.schema.n})")
        if not np.issubdtype(rows.dtype, np.integer):
            if rows.size and not np.all(rows == np.floor(rows)):
                raise ValidationError("observations must be integer-valued")
        rows = rows.astype(np.int64)
        cards = np.asarray(self.schema.cards)
        if rows.size and (np.any(rows < 0) or np.any(rows >= cards[None, :])):
            bad = np.argwhere((rows < 0) | (rows >= cards[None, :]))[0]
            raise ValidationError(
                f"row {bad[0]}: value {rows[bad[0], bad[1]]} out of range "
                f"for variable {self.schema.names[bad[1]]}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise ValidationError("cannot concatenate datasets over different schemas")
        return Dataset(self.schema, np.concatenate([self.rows, other.rows], axis=0))


@dataclass(frozen=True)
class SufficientStats:
    """Pairwise and single-variable co-occurrence counts of a dataset.

    ``pair_counts[u, v, i, j]`` counts rows with u = i and v = j (zero on
    the diagonal blocks), ``node_counts[v, j]`` counts rows with v = j, and
    ``total`` is the number of rows.
    """

    schema: DomainSchema
    pair_counts: np.ndarray
    node_counts: np.ndarray
    total: int

    def __post_init__(self):
        n, r = self.schema.n, self.schema.r_max
        pair = np.ascontiguousarray(self.pair_counts, dtype=np.int64)
        node = np.ascontiguousarray(self.node_counts, dtype=np.int64)
        if pair.shape != (n, n, r, r) or node.shape != (n, r):
            raise ValidationError("count tables do not match the schema")
        pair.setflags(write=False)
        node.setflags(write=False)
        object.__setattr__(self, "pair_counts", pair)
        object.__setattr__(self, "node_counts", node)
        object.__setattr__(self, "total", int(self.total))

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        if other.schema != self.schema:
            raise ValidationError("cannot add statistics over different schemas")
        return SufficientStats(
            self.schema,
            self.pair_counts + other.pair_counts,
            self.node_counts + other.node_counts,
            self.total + other.total,
        )


def collect(dataset: Dataset) -> SufficientStats:
    """Exact sufficient statistics of a dataset.

    Row blocks may be counted independently and summed; integer addition
    makes the reduction order irrelevant.
    """
    schema = dataset.schema
    n, r = schema.n, schema.r_max
    rows = dataset.rows
    one_hot = np.zeros((rows.shape[0], n, r), dtype=np.float64)
    if rows.shape[0]:
        t_idx = np.repeat(np.arange(rows.shape[0]), n)
        v_idx = np.tile(np.arange(n), rows.shape[0])
        one_hot[t_idx, v_idx, rows.ravel()] = 1.0
    pair = np.einsum("tui,tvj->uvij", one_hot, one_hot)
    pair = np.rint(pair).astype(np.int64)
    for v in range(n):
        pair[v, v] = 0
    node = np.rint(one_hot.sum(axis=0)).astype(np.int64)
    return SufficientStats(schema, pair, node, rows.shape[0])
