"""Shared generators for randomized tests.

Consistent priors, tree distributions, and ensembles are all derived from
random strictly-positive joint tables, which makes every marginal-
consistency requirement hold by construction.
"""

import itertools
from pathlib import Path

import numpy as np
import pytest

from treebayes import (
    Dataset,
    EdgeWeightSet,
    EnsembleModel,
    TreeDistribution,
    prior_from_joint,
)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def random_weight_matrix(rng, n, lo=0.3, hi=2.0):
    m = rng.uniform(lo, hi, size=(n, n))
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 0.0)
    return m


def random_weights(rng, n, lo=0.3, hi=2.0) -> EdgeWeightSet:
    return EdgeWeightSet.from_weights(random_weight_matrix(rng, n, lo, hi))


def random_joint(rng, cards) -> np.ndarray:
    joint = rng.uniform(0.2, 1.0, size=tuple(cards))
    return joint / joint.sum()


def random_prior(rng, schema, ess=None, with_beta=True):
    ess = ess if ess is not None else rng.uniform(1.0, 8.0)
    beta = random_weights(rng, schema.n) if with_beta else None
    return prior_from_joint(schema, random_joint(rng, schema.cards), ess, beta)


def random_dataset(rng, schema, size) -> Dataset:
    rows = np.column_stack(
        [rng.integers(0, r, size=size) for r in schema.cards])
    return Dataset(schema, rows.reshape(size, schema.n))


def random_tree_distribution(rng, schema, structure) -> TreeDistribution:
    return TreeDistribution.from_joint(
        schema, structure, random_joint(rng, schema.cards))


def random_ensemble(rng, schema) -> EnsembleModel:
    joint = random_joint(rng, schema.cards)
    axes = tuple(range(schema.n))
    pairs = {
        (u, v): joint.sum(axis=tuple(a for a in axes if a not in (u, v)))
        for u in range(schema.n) for v in range(u + 1, schema.n)
    }
    nodes = tuple(joint.sum(axis=tuple(a for a in axes if a != v))
                  for v in axes)
    return EnsembleModel(
        schema=schema,
        beta=random_weights(rng, schema.n),
        pair_tables=pairs,
        node_tables=nodes,
    )


def all_assignments(schema):
    return itertools.product(*[range(r) for r in schema.cards])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
