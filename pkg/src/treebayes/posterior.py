"""Exact Bayesian posterior over tree structures and parameters.

With a decomposable prior and complete data the posterior is again
decomposable: per-pair weights W (gamma ratios of updated versus prior
hyper-counts, with both endpoint node ratios divided out so that the
per-structure product exactly equals the directed Dirichlet evidence for
any rooting), a structure-independent evidence prefactor, and the same
Laplacian-minor machinery applied to beta * W. Predictive probabilities
are determinant ratios with per-assignment edge factors folded in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import matrix_tree as mtt
from .data import Dataset, SufficientStats, collect
from .errors import DisconnectedSupportError, ValidationError
from .matrix_tree import EdgeWeightSet
from .prior import DecomposablePrior, log_parameter_density, validate
from .trees import DomainSchema, TreeDistribution, TreeStructure


def _node_log_gamma_ratios(prior: DecomposablePrior,
                           stats: SufficientStats) -> np.ndarray:
    """Per-variable sum of log Gamma(N' + N) - log Gamma(N') over values."""
    counts = prior.node_counts
    safe = np.where(counts > 0, counts, 1.0)
    add = np.where(counts > 0, stats.node_counts, 0)
    return (gammaln(safe + add) - gammaln(safe)).sum(axis=1)


def posterior_weights(prior: DecomposablePrior,
                      stats: SufficientStats) -> np.ndarray:
    """Log posterior edge weights W, in the root-invariant form.

    log W_uv sums the pair-cell log-gamma ratios and subtracts both
    endpoints' node ratios, so that the evidence of any structure is the
    shared prefactor times the product of W over its edges.
    """
    if prior.schema != stats.schema:
        raise ValidationError("prior and statistics schemas differ")
    support = np.isfinite(prior.beta.logw)
    pc = prior.pair_counts
    covered = np.all(
        (pc > 0) | ~_pair_valid_mask(prior.schema), axis=(2, 3))
    missing = support & ~covered
    if np.any(missing):
        u, v = np.argwhere(missing)[0]
        raise ValidationError(
            f"pair ({u},{v}) has positive weight but missing hyper-counts")
    safe = np.where(pc > 0, pc, 1.0)
    add = np.where(pc > 0, stats.pair_counts, 0)
    pair_term = (gammaln(safe + add) - gammaln(safe)).sum(axis=(2, 3))
    # summation order differs between a table and its transpose; mirror the
    # upper triangle so the weights are symmetric to the last bit
    pair_term = np.triu(pair_term, k=1)
    pair_term = pair_term + pair_term.T
    node_term = _node_log_gamma_ratios(prior, stats)
    log_w = pair_term - (node_term[:, None] + node_term[None, :])
    np.fill_diagonal(log_w, 0.0)
    log_w.setflags(write=False)
    return log_w


def _pair_valid_mask(schema: DomainSchema) -> np.ndarray:
    r = schema.r_max
    mask = np.arange(r)[None, :] < np.asarray(schema.cards)[:, None]
    mask4 = mask[:, None, :, None] & mask[None, :, None, :]
    diag_off = ~np.eye(schema.n, dtype=bool)
    return mask4 & diag_off[:, :, None, None]


@dataclass(frozen=True)
class PosteriorModel:
    """The posterior in closed form: prior, statistics, and derived tables.

    ``log_w`` are the corrected per-pair weights, ``log_phi`` the
    structure-independent evidence prefactor, ``log_norm`` the log
    normalizer |Q(beta W)| and ``log_prior_norm`` the prior's |Q(beta)|.
    """

    prior: DecomposablePrior
    stats: SufficientStats
    log_w: np.ndarray
    log_phi: float
    log_norm: float
    log_prior_norm: float

    @classmethod
    def fit(cls, prior: DecomposablePrior,
            stats: SufficientStats) -> "PosteriorModel":
        log_w = posterior_weights(prior, stats)
        node_term = _node_log_gamma_ratios(prior, stats)
        log_phi = float(
            gammaln(prior.total) - gammaln(prior.total + stats.total)
            + node_term.sum())
        log_prior_norm = mtt.log_partition(prior.beta)
        log_norm = mtt.log_partition(prior.beta.weighted(log_w))
        return cls(prior, stats, log_w, log_phi, log_norm, log_prior_norm)

    @property
    def schema(self) -> DomainSchema:
        return self.prior.schema

    def posterior_beta(self) -> EdgeWeightSet:
        return self.prior.beta.weighted(self.log_w)

    def log_marginal_likelihood(self) -> float:
        """Log model evidence P(data)."""
        return self.log_phi + self.log_norm - self.log_prior_norm

    def log_structure_posterior(self, structure: TreeStructure) -> float:
        """Log posterior probability of one spanning tree."""
        if structure.n != self.schema.n:
            raise ValidationError("structure size does not match the model")
        total = 0.0
        for (u, v) in structure.edges:
            w = self.prior.beta.logw[u, v]
            if not np.isfinite(w):
                raise ValidationError(
                    f"structure uses edge ({u},{v}) outside the support")
            total += w + self.log_w[u, v]
        return total - self.log_norm

    def log_tree_posterior_density(self, t: TreeDistribution,
                                   root: int) -> float:
        """Log posterior density of a full tree distribution; the Dirichlet
        blocks carry the updated counts N' + N. Root-invariant."""
        if t.schema != self.schema:
            raise ValidationError("tree and model schemas differ")
        pair = self.prior.pair_counts + self.stats.pair_counts
        node = self.prior.node_counts + self.stats.node_counts
        return (self.log_structure_posterior(t.structure)
                + log_parameter_density(self.schema, pair, node, t, root))

    def _assignment_log_factors(self, x) -> tuple[float, np.ndarray]:
        x = self.schema.check_assignment(x)
        n = self.schema.n
        node = self.prior.node_counts + self.stats.node_counts
        pair = self.prior.pair_counts + self.stats.pair_counts
        node_at = node[np.arange(n), x]
        log_node_at = np.log(node_at)
        log_w0 = float(log_node_at.sum()
                       - math.log(self.prior.total + self.stats.total))
        uu, vv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        with np.errstate(divide="ignore"):
            log_wx = (np.log(pair[uu, vv, x[uu], x[vv]])
                      - (log_node_at[:, None] + log_node_at[None, :]))
        np.fill_diagonal(log_wx, 0.0)
        return log_w0, log_wx

    def predictive_log_prob(self, x) -> float:
        """Log Bayesian predictive probability of one new assignment."""
        log_w0, log_wx = self._assignment_log_factors(x)
        numerator = mtt.log_partition(
            self.prior.beta.weighted(self.log_w + log_wx))
        return log_w0 + numerator - self.log_norm

    def predictive_set_log_prob(self, new_data: Dataset) -> float:
        """Log predictive probability of a whole new dataset, as the
        evidence ratio of the augmented and current models."""
        if new_data.schema != self.schema:
            raise ValidationError("new data schema does not match the model")
        combined = PosteriorModel.fit(self.prior, self.stats + collect(new_data))
        return combined.log_marginal_likelihood() - self.log_marginal_likelihood()

    def map_structure(self) -> TreeStructure:
        """Maximum-posterior spanning tree under edge scores
        log beta + log W; ties break lexicographically on the edge pair."""
        n = self.schema.n
        scores = self.prior.beta.logw + self.log_w
        candidates = sorted(
            ((-scores[u, v], u, v)
             for u in range(n) for v in range(u + 1, n)
             if np.isfinite(scores[u, v])))
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        chosen = []
        for _, u, v in candidates:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                chosen.append((u, v))
                if len(chosen) == n - 1:
                    break
        if len(chosen) != n - 1:
            raise DisconnectedSupportError(
                "support graph cannot span all variables")
        return TreeStructure(n=n, edges=tuple(chosen))

    def posterior_edge_probabilities(self) -> np.ndarray:
        """P(edge in tree | data) for every pair; sums to n - 1."""
        return mtt.edge_probabilities(self.posterior_beta())

    def as_prior(self) -> DecomposablePrior:
        """The posterior repackaged as a decomposable prior (conjugacy)."""
        chained = DecomposablePrior(
            schema=self.schema,
            beta=self.posterior_beta(),
            pair_counts=self.prior.pair_counts + self.stats.pair_counts,
            node_counts=self.prior.node_counts + self.stats.node_counts,
            total=self.prior.total + self.stats.total,
        )
        problems = validate(chained)
        if problems:
            raise ValidationError(
                f"posterior counts violate prior invariants: {problems[:3]}")
        return chained


def log_marginal_likelihood(prior: DecomposablePrior,
                            stats: SufficientStats) -> float:
    """Log model evidence without keeping the fitted model around."""
    return PosteriorModel.fit(prior, stats).log_marginal_likelihood()
