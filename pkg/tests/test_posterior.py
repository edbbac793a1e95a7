"""Tests for the closed-form posterior: weights, evidence, structure
posteriors, densities, predictives, and MAP structures, all against the
enumeration oracle."""

import dataclasses
import math

import numpy as np
import pytest

from treebayes import (
    Dataset,
    DomainSchema,
    EdgeWeightSet,
    PosteriorModel,
    TreeDistribution,
    TreeStructure,
    ValidationError,
    collect,
    enumerate_spanning_trees,
    log_prior_of_tree,
    posterior_weights,
    uniform_prior,
)
from treebayes.bruteforce import (
    exact_log_marginal_likelihood,
    exact_log_predictive,
    exact_structure_log_posteriors,
    tree_log_weights,
)

from conftest import (
    all_assignments,
    random_dataset,
    random_prior,
    random_tree_distribution,
)


def empty_dataset(schema):
    return Dataset(schema, np.zeros((0, schema.n), dtype=np.int64))


def fit(prior, dataset):
    return PosteriorModel.fit(prior, collect(dataset))


class TestPosteriorWeights:
    def test_no_data_gives_unit_weights(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        prior = random_prior(rng, schema)
        log_w = posterior_weights(prior, collect(empty_dataset(schema)))
        assert np.all(log_w == 0.0)

    def test_hand_computed_two_binary(self):
        schema = DomainSchema.binary(2)
        prior = uniform_prior(schema, 4.0)
        stats = collect(Dataset(schema, np.array([[0, 0]])))
        log_w = posterior_weights(prior, stats)
        # pair cell ratio Gamma(2)/Gamma(1) = 1; node ratios Gamma(3)/Gamma(2) = 2
        assert math.exp(log_w[0, 1]) == pytest.approx(0.25, rel=1e-12)

    def test_weights_stay_positive(self, rng):
        schema = DomainSchema.of_cards([3, 2, 2])
        prior = random_prior(rng, schema)
        model = fit(prior, random_dataset(rng, schema, 60))
        assert np.all(np.isfinite(model.log_w))

    def test_missing_hyper_counts_rejected(self, rng):
        schema = DomainSchema.binary(2)
        prior = uniform_prior(schema, 4.0)
        broken = dataclasses.replace(
            prior, pair_counts=np.zeros_like(prior.pair_counts))
        with pytest.raises(ValidationError):
            posterior_weights(broken, collect(empty_dataset(schema)))


class TestMarginalLikelihood:
    def test_evidence_of_nothing_is_one(self, rng):
        schema = DomainSchema.of_cards([2, 2, 3])
        prior = random_prior(rng, schema)
        model = fit(prior, empty_dataset(schema))
        assert model.log_marginal_likelihood() == 0.0

    def test_two_binary_single_row(self):
        schema = DomainSchema.binary(2)
        prior = uniform_prior(schema, 4.0)
        model = fit(prior, Dataset(schema, np.array([[0, 0]])))
        assert model.log_marginal_likelihood() == pytest.approx(
            math.log(0.25), rel=1e-12)

    def test_matches_enumeration(self, rng):
        for cards in ([2, 2], [2, 3, 2], [3, 2, 2, 3], [2, 2, 2, 2, 2]):
            schema = DomainSchema.of_cards(cards)
            prior = random_prior(rng, schema)
            data = random_dataset(rng, schema, int(rng.integers(1, 51)))
            model = fit(prior, data)
            exact = exact_log_marginal_likelihood(prior, data)
            assert model.log_marginal_likelihood() == pytest.approx(
                exact, abs=1e-8)


class TestStructurePosterior:
    def test_no_data_reduces_to_prior(self, rng):
        schema = DomainSchema.binary(4)
        prior = random_prior(rng, schema)
        model = fit(prior, empty_dataset(schema))
        logs = tree_log_weights(prior.beta.logw)
        from treebayes.bruteforce import exact_log_partition
        norm = exact_log_partition(prior.beta)
        for k, tree in enumerate(enumerate_spanning_trees(4).trees):
            assert model.log_structure_posterior(tree) == pytest.approx(
                float(logs[k]) - norm, abs=1e-9)

    def test_symmetric_prior_uniform_over_trees(self):
        schema = DomainSchema.binary(3)
        model = fit(uniform_prior(schema, 4.0), empty_dataset(schema))
        for tree in enumerate_spanning_trees(3).trees:
            assert model.log_structure_posterior(tree) == pytest.approx(
                math.log(1.0 / 3.0), rel=1e-12)

    def test_normalizes_and_matches_oracle(self, rng):
        schema = DomainSchema.binary(5)
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 30)
        model = fit(prior, data)
        exact = exact_structure_log_posteriors(prior, data)
        mass = 0.0
        for k, tree in enumerate(enumerate_spanning_trees(5).trees):
            value = model.log_structure_posterior(tree)
            assert value == pytest.approx(float(exact[k]), abs=1e-8)
            mass += math.exp(value)
        assert mass == pytest.approx(1.0, abs=1e-9)

    def test_unsupported_edge_rejected(self, rng):
        schema = DomainSchema.binary(3)
        m = np.zeros((3, 3))
        m[0, 1] = m[1, 0] = 1.0
        m[1, 2] = m[2, 1] = 1.0
        from treebayes import prior_from_joint
        from conftest import random_joint
        prior = prior_from_joint(schema, random_joint(rng, schema.cards), 4.0,
                                 EdgeWeightSet.from_weights(m))
        model = fit(prior, empty_dataset(schema))
        with pytest.raises(ValidationError):
            model.log_structure_posterior(TreeStructure(3, ((0, 2), (1, 2))))


class TestTreePosteriorDensity:
    def test_no_data_equals_prior_density(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        prior = random_prior(rng, schema)
        model = fit(prior, empty_dataset(schema))
        tree = enumerate_spanning_trees(3).trees[1]
        t = random_tree_distribution(rng, schema, tree)
        assert model.log_tree_posterior_density(t, 1) == pytest.approx(
            log_prior_of_tree(prior, t, 1), rel=1e-12)

    def test_root_invariance(self, rng):
        schema = DomainSchema.of_cards([2, 2, 3, 2])
        prior = random_prior(rng, schema)
        model = fit(prior, random_dataset(rng, schema, 25))
        for tree in enumerate_spanning_trees(4).trees[::3]:
            t = random_tree_distribution(rng, schema, tree)
            values = [model.log_tree_posterior_density(t, root)
                      for root in range(4)]
            assert max(values) - min(values) <= 1e-9

    def test_density_integrates_to_structure_posterior(self, rng):
        # Monte Carlo over the 2x2 joint-table simplex: the parameter
        # density times the structure posterior must integrate back to the
        # structure posterior.
        schema = DomainSchema.binary(2)
        prior = uniform_prior(schema, 4.0)
        data = random_dataset(rng, schema, 12)
        model = fit(prior, data)
        tree = TreeStructure(2, ((0, 1),))
        target = math.exp(model.log_structure_posterior(tree))
        draws = 60_000
        thetas = rng.dirichlet(np.ones(4), size=draws)
        values = np.empty(draws)
        for k in range(draws):
            table = thetas[k].reshape(2, 2)
            t = TreeDistribution(
                schema, tree, {(0, 1): table},
                (table.sum(axis=1), table.sum(axis=0)))
            values[k] = math.exp(model.log_tree_posterior_density(t, 0))
        # uniform density on the 3-simplex is Gamma(4) = 6
        estimates = values / 6.0
        error = estimates.std(ddof=1) / math.sqrt(draws)
        assert abs(estimates.mean() - target) <= 3.0 * error


class TestPredictive:
    def test_uniform_prior_no_data(self):
        schema = DomainSchema.binary(2)
        model = fit(uniform_prior(schema, 4.0), empty_dataset(schema))
        for x in all_assignments(schema):
            assert model.predictive_log_prob(list(x)) == pytest.approx(
                math.log(0.25), rel=1e-12)

    def test_sums_to_one(self, rng):
        for cards in ([2, 3, 2], [3, 3, 2, 2], [2, 2, 2, 2, 2]):
            schema = DomainSchema.of_cards(cards)
            prior = random_prior(rng, schema)
            model = fit(prior, random_dataset(rng, schema, 35))
            total = sum(math.exp(model.predictive_log_prob(list(x)))
                        for x in all_assignments(schema))
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_matches_enumeration(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2, 2])
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 20)
        model = fit(prior, data)
        for _ in range(6):
            x = np.array([rng.integers(0, r) for r in schema.cards])
            assert model.predictive_log_prob(x) == pytest.approx(
                exact_log_predictive(prior, data, x), abs=1e-8)

    def test_sequential_consistency(self, rng):
        schema = DomainSchema.of_cards([2, 2, 3])
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 15)
        model = fit(prior, data)
        x = np.array([1, 0, 2])
        grown = Dataset(schema, np.vstack([data.rows, x]))
        delta = (fit(prior, grown).log_marginal_likelihood()
                 - model.log_marginal_likelihood())
        assert model.predictive_log_prob(x) == pytest.approx(delta, abs=1e-8)


class TestPredictiveSet:
    def test_empty_set(self, rng):
        schema = DomainSchema.binary(3)
        prior = random_prior(rng, schema)
        model = fit(prior, random_dataset(rng, schema, 10))
        assert model.predictive_set_log_prob(empty_dataset(schema)) == 0.0

    def test_singleton_equals_predictive(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2])
        prior = random_prior(rng, schema)
        model = fit(prior, random_dataset(rng, schema, 10))
        x = np.array([1, 2, 0])
        single = Dataset(schema, x.reshape(1, 3))
        assert model.predictive_set_log_prob(single) == pytest.approx(
            model.predictive_log_prob(x), abs=1e-10)

    def test_pair_chains(self, rng):
        schema = DomainSchema.binary(3)
        prior = random_prior(rng, schema)
        base = random_dataset(rng, schema, 8)
        model = fit(prior, base)
        x1, x2 = np.array([0, 1, 0]), np.array([1, 1, 1])
        both = Dataset(schema, np.vstack([x1, x2]))
        chained = (model.predictive_log_prob(x1)
                   + fit(prior, Dataset(schema, np.vstack([base.rows, x1]))
                         ).predictive_log_prob(x2))
        assert model.predictive_set_log_prob(both) == pytest.approx(
            chained, abs=1e-9)

    def test_schema_mismatch(self, rng):
        prior = random_prior(rng, DomainSchema.binary(3))
        model = fit(prior, random_dataset(rng, DomainSchema.binary(3), 5))
        with pytest.raises(ValidationError):
            model.predictive_set_log_prob(
                random_dataset(rng, DomainSchema.binary(4), 2))


class TestMapStructure:
    def test_dominant_edges_win(self):
        schema = DomainSchema.binary(4)
        m = np.full((4, 4), 0.01)
        np.fill_diagonal(m, 0.0)
        for (u, v) in ((0, 1), (1, 2), (2, 3)):
            m[u, v] = m[v, u] = 100.0
        prior = uniform_prior(schema, 4.0)
        prior = dataclasses.replace(prior, beta=EdgeWeightSet.from_weights(m))
        model = fit(prior, empty_dataset(schema))
        assert model.map_structure().edges == ((0, 1), (1, 2), (2, 3))

    def test_matches_enumerated_argmax(self, rng):
        schema = DomainSchema.binary(5)
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 25)
        model = fit(prior, data)
        exact = exact_structure_log_posteriors(prior, data)
        best = enumerate_spanning_trees(5).trees[int(np.argmax(exact))]
        assert model.map_structure().edges == best.edges

    def test_tie_breaks_lexicographically(self):
        schema = DomainSchema.binary(4)
        model = fit(uniform_prior(schema, 4.0), empty_dataset(schema))
        assert model.map_structure().edges == ((0, 1), (0, 2), (0, 3))


class TestPosteriorEdgeProbabilities:
    def test_no_data_reduces_to_prior(self, rng):
        schema = DomainSchema.binary(4)
        prior = random_prior(rng, schema)
        model = fit(prior, empty_dataset(schema))
        from treebayes import edge_probabilities
        np.testing.assert_allclose(
            model.posterior_edge_probabilities(),
            edge_probabilities(prior.beta), atol=1e-12)

    def test_matches_enumeration(self, rng):
        schema = DomainSchema.binary(6)
        prior = random_prior(rng, schema)
        data = random_dataset(rng, schema, 12)
        model = fit(prior, data)
        probs = model.posterior_edge_probabilities()
        logs = tree_log_weights(model.posterior_beta().logw)
        weights = np.exp(logs - logs.max())
        weights /= weights.sum()
        expected = np.zeros((6, 6))
        for k, tree in enumerate(enumerate_spanning_trees(6).trees):
            for (u, v) in tree.edges:
                expected[u, v] += weights[k]
                expected[v, u] += weights[k]
        np.testing.assert_allclose(probs, expected, atol=1e-9)

    def test_sum_is_n_minus_one(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2, 2])
        prior = random_prior(rng, schema)
        model = fit(prior, random_dataset(rng, schema, 18))
        p = model.posterior_edge_probabilities()
        assert p[np.triu_indices(4, 1)].sum() == pytest.approx(3.0, abs=1e-9)


class TestConjugacyChaining:
    def test_two_stage_update_matches_single(self, rng):
        schema = DomainSchema.of_cards([2, 3, 2, 2])
        for _ in range(5):
            prior = random_prior(rng, schema)
            data = random_dataset(rng, schema, 24)
            split = int(rng.integers(1, 23))
            first = Dataset(schema, data.rows[:split])
            second = Dataset(schema, data.rows[split:])
            direct = fit(prior, data)
            staged = fit(fit(prior, first).as_prior(), second)
            np.testing.assert_allclose(
                staged.prior.beta.logw + staged.log_w,
                direct.prior.beta.logw + direct.log_w, atol=1e-9)
            tree = enumerate_spanning_trees(4).trees[3]
            assert staged.log_structure_posterior(tree) == pytest.approx(
                direct.log_structure_posterior(tree), abs=1e-9)
            x = np.array([1, 1, 0, 1])
            assert staged.predictive_log_prob(x) == pytest.approx(
                direct.predictive_log_prob(x), abs=1e-9)
