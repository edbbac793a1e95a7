"""Tests for dataset validation and sufficient-statistics collection."""

import numpy as np
import pytest

from treebayes import Dataset, DomainSchema, ValidationError, collect

from conftest import random_dataset


class TestDataset:
    def test_rejects_out_of_range(self):
        schema = DomainSchema.binary(2)
        with pytest.raises(ValidationError):
            Dataset(schema, np.array([[0, 2]]))
        with pytest.raises(ValidationError):
            Dataset(schema, np.array([[-1, 0]]))

    def test_rejects_wrong_width(self):
        schema = DomainSchema.binary(3)
        with pytest.raises(ValidationError):
            Dataset(schema, np.array([[0, 1]]))

    def test_empty_is_valid(self):
        schema = DomainSchema.binary(2)
        d = Dataset(schema, np.zeros((0, 2), dtype=np.int64))
        assert d.size == 0


class TestCollect:
    def test_empty_dataset_gives_zeros(self):
        schema = DomainSchema.of_cards([2, 3])
        stats = collect(Dataset(schema, np.zeros((0, 2), dtype=np.int64)))
        assert stats.total == 0
        assert not np.any(stats.pair_counts)
        assert not np.any(stats.node_counts)

    def test_single_row_indicators(self):
        schema = DomainSchema.binary(3)
        stats = collect(Dataset(schema, np.array([[0, 1, 0]])))
        assert stats.pair_counts[0, 1, 0, 1] == 1
        assert stats.pair_counts[0, 2, 0, 0] == 1
        assert stats.pair_counts[1, 2, 1, 0] == 1
        assert stats.pair_counts[0, 1].sum() == 1
        assert stats.node_counts[0, 0] == 1
        assert stats.node_counts[1, 1] == 1
        assert stats.total == 1

    def test_duplicated_dataset_doubles_counts(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        d = random_dataset(rng, schema, 17)
        doubled = Dataset(schema, np.vstack([d.rows, d.rows]))
        a, b = collect(d), collect(doubled)
        assert np.array_equal(2 * a.pair_counts, b.pair_counts)
        assert np.array_equal(2 * a.node_counts, b.node_counts)

    def test_additive_over_concatenation(self, rng):
        schema = DomainSchema.of_cards([3, 2, 2, 3])
        d1 = random_dataset(rng, schema, 11)
        d2 = random_dataset(rng, schema, 23)
        merged = collect(d1.concat(d2))
        summed = collect(d1) + collect(d2)
        assert np.array_equal(merged.pair_counts, summed.pair_counts)
        assert np.array_equal(merged.node_counts, summed.node_counts)
        assert merged.total == summed.total

    def test_marginal_consistency_is_exact(self, rng):
        schema = DomainSchema.of_cards([2, 3, 4])
        stats = collect(random_dataset(rng, schema, 40))
        for u in range(3):
            for v in range(3):
                if u == v:
                    continue
                table = stats.pair_counts[u, v, :schema.cards[u], :schema.cards[v]]
                assert np.array_equal(
                    table.sum(axis=0), stats.node_counts[v, :schema.cards[v]])
                assert table.sum() == stats.total

    def test_symmetry(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        stats = collect(random_dataset(rng, schema, 25))
        assert np.array_equal(stats.pair_counts[0, 1],
                              stats.pair_counts[1, 0].T)

    def test_schema_mismatch_on_add(self, rng):
        a = collect(random_dataset(rng, DomainSchema.binary(2), 3))
        b = collect(random_dataset(rng, DomainSchema.binary(3), 3))
        with pytest.raises(ValidationError):
            a + b
