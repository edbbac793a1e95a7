"""Decomposable priors: edge weights over structures plus Dirichlet
hyper-counts over parameters.

The hyper-counts form one global system: a single table per variable pair
whose marginals reproduce shared per-variable counts, which in turn sum to
one equivalent sample size. ``validate`` reports every violation of that
system; the shipped constructors (uniform, from a full joint) only ever
produce valid instances, because pairwise count tables cannot be chosen
independently per edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import matrix_tree as mtt
from .errors import ValidationError
from .matrix_tree import EdgeWeightSet
from .trees import DomainSchema, TreeDistribution

RELATIVE_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    """One failed prior invariant: what, where, and by how much."""

    kind: str
    location: tuple
    residual: float

    def __str__(self) -> str:
        return f"{self.kind} at {self.location}: residual {self.residual:g}"


@dataclass(frozen=True)
class DecomposablePrior:
    """Structure weights plus marginal-consistent Dirichlet hyper-counts.

    ``pair_counts[u, v, i, j]`` holds the hyper-count for (u=i, v=j), padded
    to the maximum cardinality; ``node_counts[v, j]`` the per-variable
    counts; ``total`` the equivalent sample size. Instances built directly
    are not checked: run ``validate`` (the constructors below do).
    """

    schema: DomainSchema
    beta: EdgeWeightSet
    pair_counts: np.ndarray
    node_counts: np.ndarray
    total: float

    def __post_init__(self):
        n, r = self.schema.n, self.schema.r_max
        if self.beta.n != n:
            raise ValidationError("edge weights do not match the schema")
        pair = np.ascontiguousarray(self.pair_counts, dtype=np.float64)
        node = np.ascontiguousarray(self.node_counts, dtype=np.float64)
        if pair.shape != (n, n, r, r) or node.shape != (n, r):
            raise ValidationError("count tables do not match the schema")
        pair.setflags(write=False)
        node.setflags(write=False)
        object.__setattr__(self, "pair_counts", pair)
        object.__setattr__(self, "node_counts", node)
        object.__setattr__(self, "total", float(self.total))


def _valid_mask(schema: DomainSchema) -> np.ndarray:
    r = schema.r_max
    return np.arange(r)[None, :] < np.asarray(schema.cards)[:, None]


def validate(prior: DecomposablePrior) -> list[Violation]:
    """All invariant violations of a candidate prior; empty means valid.

    Checks, with tolerance 1e-9 * total: pair-table symmetry, pair
    marginals against node counts, node counts against the total,
    positivity on the support, and connectivity of the support graph.
    """
    schema = prior.schema
    n = schema.n
    tol = RELATIVE_TOL * max(prior.total, 1.0)
    out: list[Violation] = []
    if prior.total <= 0:
        out.append(Violation("nonpositive-total", (), prior.total))
    support = np.isfinite(prior.beta.logw)

    for v in range(n):
        r_v = schema.cards[v]
        resid = prior.node_counts[v, :r_v].sum() - prior.total
        if abs(resid) > tol:
            out.append(Violation("node-total", (v,), float(resid)))
        extra = np.abs(prior.node_counts[v, r_v:]).max() if r_v < schema.r_max else 0.0
        if extra > 0:
            out.append(Violation("padding", (v,), float(extra)))

    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            r_u, r_v = schema.cards[u], schema.cards[v]
            table = prior.pair_counts[u, v, :r_u, :r_v]
            if u < v:
                sym = np.abs(table - prior.pair_counts[v, u, :r_v, :r_u].T).max()
                if sym > tol:
                    out.append(Violation("pair-symmetry", (u, v), float(sym)))
            if support[u, v] and not np.all(table > 0):
                out.append(Violation("positivity", (u, v),
                                     float(table.min(initial=0.0))))
                continue
            if not np.any(table != 0):
                continue
            col = table.sum(axis=0)
            for j in range(r_v):
                resid = col[j] - prior.node_counts[v, j]
                if abs(resid) > tol:
                    out.append(Violation("edge-marginal", (u, v, j), float(resid)))

    components = prior.beta.support_components()
    if len(components) != 1:
        out.append(Violation(
            "connectivity", tuple(tuple(c) for c in components),
            float(len(components))))
    return out


def _checked(prior: DecomposablePrior) -> DecomposablePrior:
    violations = validate(prior)
    if violations:
        listing = "; ".join(str(v) for v in violations[:5])
        raise ValidationError(
            f"prior violates {len(violations)} invariant(s): {listing}")
    return prior


def uniform_prior(schema: DomainSchema, equivalent_sample_size: float,
                  beta0: float = 1.0) -> DecomposablePrior:
    """The canonical valid prior: uniform hyper-counts, constant edge weight.

    Pair counts are total / (r_u * r_v), node counts total / r_v, so every
    marginal-consistency relation holds by construction.
    """
    if equivalent_sample_size <= 0:
        raise ValidationError("equivalent sample size must be positive")
    if beta0 <= 0:
        raise ValidationError("edge weight must be positive")
    n, r = schema.n, schema.r_max
    cards = np.asarray(schema.cards, dtype=np.float64)
    mask = _valid_mask(schema)
    node = np.where(mask, equivalent_sample_size / cards[:, None], 0.0)
    cell = equivalent_sample_size / (cards[:, None] * cards[None, :])
    mask4 = mask[:, None, :, None] & mask[None, :, None, :]
    pair = np.where(mask4, cell[:, :, None, None], 0.0)
    for v in range(n):
        pair[v, v] = 0.0
    beta = EdgeWeightSet(np.full((n, n), math.log(beta0)))
    return _checked(DecomposablePrior(schema, beta, pair, node,
                                      float(equivalent_sample_size)))


def prior_from_joint(schema: DomainSchema, joint: np.ndarray,
                     equivalent_sample_size: float,
                     beta: EdgeWeightSet | None = None) -> DecomposablePrior:
    """Hyper-counts proportional to the marginals of a full joint table.

    This is the general way to specify a decomposable prior: the joint
    guarantees the counts are globally consistent. The joint must be
    strictly positive so that every pair on the support carries positive
    counts.
    """
    if equivalent_sample_size <= 0:
        raise ValidationError("equivalent sample size must be positive")
    joint = np.asarray(joint, dtype=np.float64)
    if joint.shape != tuple(schema.cards):
        raise ValidationError("joint table shape does not match schema")
    if np.any(joint <= 0):
        raise ValidationError("joint table must be strictly positive")
    joint = joint / joint.sum()
    n, r = schema.n, schema.r_max
    axes = tuple(range(n))
    pair = np.zeros((n, n, r, r))
    node = np.zeros((n, r))
    for v in range(n):
        marg = joint.sum(axis=tuple(a for a in axes if a != v))
        node[v, :schema.cards[v]] = equivalent_sample_size * marg
    for u in range(n):
        for v in range(u + 1, n):
            marg = joint.sum(axis=tuple(a for a in axes if a not in (u, v)))
            pair[u, v, :schema.cards[u], :schema.cards[v]] = (
                equivalent_sample_size * marg)
            pair[v, u, :schema.cards[v], :schema.cards[u]] = (
                equivalent_sample_size * marg.T)
    if beta is None:
        beta = EdgeWeightSet.uniform(n)
    return _checked(DecomposablePrior(schema, beta, pair, node,
                                      float(equivalent_sample_size)))


def log_dirichlet_density(theta, counts) -> float:
    """Log Dirichlet density at a point of the open simplex.

    The normalizer is the product of gammas of the counts over the gamma
    of their sum; all gamma arithmetic goes through log-gamma.
    """
    theta = np.asarray(theta, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if theta.shape != counts.shape or theta.ndim != 1:
        raise ValidationError("theta and counts must be vectors of equal length")
    if np.any(counts <= 0):
        raise ValidationError("Dirichlet counts must be positive")
    if np.any(theta <= 0):
        raise ValidationError("theta must lie in the open simplex")
    if abs(theta.sum() - 1.0) > 1e-12:
        raise ValidationError("theta must sum to 1 within 1e-12")
    log_norm = gammaln(counts).sum() - gammaln(counts.sum())
    return float(np.dot(counts - 1.0, np.log(theta)) - log_norm)


def log_parameter_density(schema: DomainSchema, pair_counts: np.ndarray,
                          node_counts: np.ndarray,
                          t: TreeDistribution, root: int) -> float:
    """Log density of a tree's parameter tables under per-edge Dirichlets.

    Computed through the directed parameterization at ``root`` and then
    transported back to the undirected (pairwise-table) coordinates via
    the change-of-variables factor, which is what makes the value
    root-invariant: all rootings describe the same density on the same
    parameter space.
    """
    directed = t.to_directed(root)
    root_counts = node_counts[root, :schema.cards[root]]
    total = log_dirichlet_density(directed.root_marginal, root_counts)
    for (p, c), table in directed.conditionals.items():
        counts = pair_counts[p, c, :schema.cards[p], :schema.cards[c]]
        parent_marginal = t.node_marginals[p]
        for i in range(schema.cards[p]):
            total += log_dirichlet_density(table[i], counts[i])
        # directed -> undirected Jacobian for this edge
        total -= (schema.cards[c] - 1) * float(np.log(parent_marginal).sum())
    return total


def log_prior_of_tree(prior: DecomposablePrior, t: TreeDistribution,
                      root: int) -> float:
    """Log prior density of a full tree distribution (structure and
    parameters); invariant to the choice of root."""
    if t.schema != prior.schema:
        raise ValidationError("tree and prior schemas differ")
    log_structure = 0.0
    for (u, v) in t.structure.edges:
        w = prior.beta.logw[u, v]
        if not np.isfinite(w):
            raise ValidationError(
                f"structure uses edge ({u},{v}) outside the prior support")
        log_structure += w
    log_structure -= mtt.log_partition(prior.beta)
    return log_structure + log_parameter_density(
        prior.schema, prior.pair_counts, prior.node_counts, t, root)
