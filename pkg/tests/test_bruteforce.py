"""Self-checks of the enumeration oracle."""

import math

import numpy as np
import pytest

from treebayes import (
    DomainSchema,
    ValidationError,
    enumerate_spanning_trees,
)
from treebayes.bruteforce import (
    exact_log_marginal_likelihood,
    exact_log_partition,
    exact_log_predictive,
)
from treebayes.matrix_tree import EdgeWeightSet

from conftest import all_assignments, random_dataset, random_prior


class TestEnumeration:
    @pytest.mark.parametrize("n,count", [(2, 1), (3, 3), (4, 16), (5, 125),
                                         (6, 1296), (7, 16807)])
    def test_cayley_count(self, n, count):
        enum = enumerate_spanning_trees(n)
        assert len(enum) == count

    def test_no_duplicates(self):
        enum = enumerate_spanning_trees(5)
        assert len({t.edges for t in enum.trees}) == len(enum)

    def test_every_entry_is_spanning(self):
        for tree in enumerate_spanning_trees(5).trees:
            assert len(tree.edges) == 4  # constructor validates the rest

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            enumerate_spanning_trees(8)
        with pytest.raises(ValidationError):
            enumerate_spanning_trees(1)


class TestExactQuantities:
    def test_uniform_partition(self):
        assert exact_log_partition(EdgeWeightSet.uniform(3)) == pytest.approx(
            math.log(3.0))

    def test_marginal_likelihood_of_nothing(self, rng):
        schema = DomainSchema.binary(3)
        prior = random_prior(rng, schema)
        empty = random_dataset(rng, schema, 0)
        assert exact_log_marginal_likelihood(prior, empty) == pytest.approx(
            0.0, abs=1e-12)

    def test_predictive_sums_to_one(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 9)
        total = sum(
            math.exp(exact_log_predictive(prior, data, np.array(x)))
            for x in all_assignments(schema))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_evidence_is_row_order_invariant(self, rng):
        schema = DomainSchema.binary(3)
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 8)
        from treebayes import Dataset
        reversed_data = Dataset(schema, data.rows[::-1])
        assert exact_log_marginal_likelihood(prior, data) == pytest.approx(
            exact_log_marginal_likelihood(prior, reversed_data), abs=1e-10)

    def test_single_tree_evidence_is_chain_rule(self, rng):
        # n=2 has one structure, so the evidence must equal the sequential
        # posterior-mean chain product, here written out by hand
        schema = DomainSchema.binary(2)
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 6)
        expected = 0.0
        pair = prior.pair_counts[0, 1, :2, :2].copy()
        total = prior.total
        for x in data.rows:
            expected += math.log(pair[x[0], x[1]] / total)
            pair[x[0], x[1]] += 1.0
            total += 1.0
        assert exact_log_marginal_likelihood(prior, data) == pytest.approx(
            expected, abs=1e-10)
