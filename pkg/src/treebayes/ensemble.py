"""Ensembles of trees: one shared parameter set mixed over all spanning
tree structures.

The mixture likelihood of an assignment is a ratio of Laplacian-minor
determinants: a structure-independent factor times |Q(beta w(x))| over
|Q(beta)|, where w(x) are per-pair likelihood ratios built from the shared
tables. Training is projected gradient ascent: steps in log-parameter
space, node tables renormalized, pair tables refit to the node marginals
by iterative proportional fitting, with step halving to keep the trace
nondecreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrix_tree as mtt
from .data import Dataset, SufficientStats, collect
from .errors import NumericalError, ValidationError
from .matrix_tree import EdgeWeightSet
from .trees import DomainSchema

CONSISTENCY_TOL = 1e-9
IPF_TOL = 1e-10
IPF_MAX_SWEEPS = 200
MAX_HALVINGS = 30


@dataclass(frozen=True)
class EnsembleModel:
    """Shared pair/node tables plus structure weights over spanning trees.

    Every pair carries a table whose row and column marginals equal the
    endpoint node tables (so each spanning tree extracts a coherent tree
    distribution), node tables sum to one, and all entries are strictly
    positive.
    """

    schema: DomainSchema
    beta: EdgeWeightSet
    pair_tables: dict[tuple[int, int], np.ndarray]
    node_tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        n = self.schema.n
        if self.beta.n != n:
            raise ValidationError("edge weights do not match the schema")
        nodes = tuple(np.asarray(t, dtype=np.float64) for t in self.node_tables)
        if len(nodes) != n:
            raise ValidationError("need one node table per variable")
        for v, t in enumerate(nodes):
            if t.shape != (self.schema.cards[v],):
                raise ValidationError(f"node table {v} has wrong shape")
            if np.any(t <= 0):
                raise ValidationError(f"node table {v} has a nonpositive entry")
            if abs(t.sum() - 1.0) > CONSISTENCY_TOL:
                raise ValidationError(f"node table {v} does not sum to 1")
            t.setflags(write=False)
        pairs = {}
        expected = {(u, v) for u in range(n) for v in range(u + 1, n)}
        if set(self.pair_tables) != expected:
            raise ValidationError("need a table for every unordered pair")
        for (u, v) in sorted(expected):
            t = np.asarray(self.pair_tables[(u, v)], dtype=np.float64)
            if t.shape != (self.schema.cards[u], self.schema.cards[v]):
                raise ValidationError(f"pair table ({u},{v}) has wrong shape")
            if np.any(t <= 0):
                raise ValidationError(
                    f"pair table ({u},{v}) has a nonpositive entry")
            if (np.max(np.abs(t.sum(axis=1) - nodes[u])) > CONSISTENCY_TOL
                    or np.max(np.abs(t.sum(axis=0) - nodes[v])) > CONSISTENCY_TOL):
                raise ValidationError(
                    f"pair table ({u},{v}) disagrees with its node marginals")
            t.setflags(write=False)
            pairs[(u, v)] = t
        object.__setattr__(self, "pair_tables", pairs)
        object.__setattr__(self, "node_tables", nodes)


def edge_factors(model: EnsembleModel, x) -> tuple[float, np.ndarray]:
    """Structure-independent factor and per-pair factors of one assignment.

    Returns (log w0, log w) with w0 the product of node-table entries and
    w_uv the pair entry over the product of its node entries.
    """
    x = model.schema.check_assignment(x)
    n = model.schema.n
    log_at = np.array([math.log(model.node_tables[v][x[v]]) for v in range(n)])
    log_w0 = float(log_at.sum())
    log_wx = np.zeros((n, n))
    for (u, v), table in model.pair_tables.items():
        value = math.log(table[x[u], x[v]]) - log_at[u] - log_at[v]
        log_wx[u, v] = log_wx[v, u] = value
    return log_w0, log_wx


def log_likelihood(model: EnsembleModel, x) -> float:
    """Log mixture likelihood of one assignment, in determinant form."""
    log_w0, log_wx = edge_factors(model, x)
    return (log_w0
            + mtt.log_partition(model.beta.weighted(log_wx))
            - mtt.log_partition(model.beta))


def log_likelihood_dataset(model: EnsembleModel, dataset: Dataset) -> float:
    """Total log likelihood of a dataset (duplicate rows share one
    determinant evaluation)."""
    if dataset.schema != model.schema:
        raise ValidationError("dataset schema does not match the model")
    rows, counts = _unique_rows(dataset)
    return _dataset_ll(model, rows, counts)


def _unique_rows(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if dataset.size == 0:
        return (np.zeros((0, dataset.schema.n), dtype=np.int64),
                np.zeros(0, dtype=np.int64))
    return np.unique(dataset.rows, axis=0, return_counts=True)


def _dataset_ll(model: EnsembleModel, rows: np.ndarray,
                counts: np.ndarray) -> float:
    if rows.shape[0] == 0:
        return 0.0
    log_z = mtt.log_partition(model.beta)
    total = 0.0
    for x, c in zip(rows, counts):
        log_w0, log_wx = edge_factors(model, x)
        value = log_w0 + mtt.log_partition(model.beta.weighted(log_wx)) - log_z
        total += float(c) * value
    return total


@dataclass(frozen=True)
class GradientBlocks:
    """Unconstrained partial derivatives of the total log likelihood."""

    beta: np.ndarray
    pair: dict[tuple[int, int], np.ndarray]
    node: tuple[np.ndarray, ...]


def gradients(model: EnsembleModel, dataset: Dataset) -> GradientBlocks:
    """Partial derivatives with respect to the structure weights, pair
    table cells, and node table cells.

    The derivative of each log determinant follows the coactivity
    identity; per observation the structure-weight term is w_uv * M_uv on
    the reweighted minor, the pair-cell term rescales that by
    beta / (theta_u theta_v) at the observed cell, and the node-cell term
    collects one minus the incident edge-appearance probabilities.
    """
    if dataset.schema != model.schema:
        raise ValidationError("dataset schema does not match the model")
    rows, counts = _unique_rows(dataset)
    return _gradients(model, rows, counts)


def _gradients(model: EnsembleModel, rows: np.ndarray,
               counts: np.ndarray) -> GradientBlocks:
    schema = model.schema
    n = schema.n
    beta_grad = np.zeros((n, n))
    pair_grad = {(u, v): np.zeros((schema.cards[u], schema.cards[v]))
                 for u in range(n) for v in range(u + 1, n)}
    node_grad = [np.zeros(schema.cards[v]) for v in range(n)]
    total = int(counts.sum()) if counts.size else 0
    if total:
        for x, c in zip(rows, counts):
            c = float(c)
            _, log_wx = edge_factors(model, x)
            co = mtt.coactivity(model.beta.weighted(log_wx))
            w_m = np.exp(log_wx - co.scale) * co.m
            beta_grad += c * w_m
            appear = np.exp(model.beta.logw + log_wx - co.scale) * co.m
            incident = appear.sum(axis=1)
            beta_scaled = np.exp(model.beta.logw - co.scale) * co.m
            for v in range(n):
                node_grad[v][x[v]] += (c * (1.0 - incident[v])
                                       / model.node_tables[v][x[v]])
            for (u, v) in pair_grad:
                denom = (model.node_tables[u][x[u]]
                         * model.node_tables[v][x[v]])
                pair_grad[(u, v)][x[u], x[v]] += c * beta_scaled[u, v] / denom
        co0 = mtt.coactivity(model.beta)
        beta_grad -= total * np.exp(-co0.scale) * co0.m
    np.fill_diagonal(beta_grad, 0.0)
    return GradientBlocks(
        beta=beta_grad,
        pair=pair_grad,
        node=tuple(node_grad),
    )


def fit_pair_to_marginals(table: np.ndarray, row_target: np.ndarray,
                          col_target: np.ndarray) -> np.ndarray:
    """Iterative proportional fitting of a positive table to prescribed
    row and column marginals.

    Sweeps until the marginal residual stops improving (well below the
    1e-10 contract): leftover projection noise would otherwise mask the
    small likelihood gains of late training steps.
    """
    t = np.array(table, dtype=np.float64)
    best = np.inf
    for _ in range(IPF_MAX_SWEEPS):
        t *= (row_target / t.sum(axis=1))[:, None]
        t *= (col_target / t.sum(axis=0))[None, :]
        residual = max(np.max(np.abs(t.sum(axis=1) - row_target)),
                       np.max(np.abs(t.sum(axis=0) - col_target)))
        if residual < IPF_TOL and residual >= 0.5 * best:
            break
        best = min(best, residual)
    return t


@dataclass(frozen=True)
class TrainConfig:
    """Projected-gradient-ascent settings.

    ``step_size`` scales the mean (per-observation) gradient in
    log-parameter space; ``tol`` is the relative trace improvement below
    which training stops; ``jitter`` optionally perturbs the initial
    tables by up to that fraction (seed-controlled) to break symmetry.
    """

    step_size: float = 0.5
    max_iters: int = 200
    tol: float = 1e-9
    seed: int = 0
    jitter: float = 0.0


def initial_model(stats: SufficientStats, jitter: float = 0.0,
                  seed: int = 0) -> EnsembleModel:
    """Starting point for training: empirical marginals smoothed by one
    pseudo-count, projected onto the marginal-consistency set; uniform
    structure weights."""
    schema = stats.schema
    n = schema.n
    total = float(stats.total)
    rng = np.random.default_rng(seed)
    node = []
    for v in range(n):
        t = (stats.node_counts[v, :schema.cards[v]] + 1.0) / (total + schema.cards[v])
        if jitter:
            t = t * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=t.shape))
        node.append(t / t.sum())
    pairs = {}
    for u in range(n):
        for v in range(u + 1, n):
            cells = schema.cards[u] * schema.cards[v]
            t = (stats.pair_counts[u, v, :schema.cards[u], :schema.cards[v]]
                 + 1.0) / (total + cells)
            if jitter:
                t = t * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=t.shape))
            pairs[(u, v)] = fit_pair_to_marginals(t, node[u], node[v])
    return EnsembleModel(
        schema=schema,
        beta=EdgeWeightSet.uniform(n),
        pair_tables=pairs,
        node_tables=tuple(node),
    )


def _apply_step(model: EnsembleModel, blocks: GradientBlocks,
                step: float) -> EnsembleModel:
    """One log-space ascent step followed by projection back onto the
    constraint set.

    Table steps exponentiate the raw gradient (mirror ascent in the KL
    geometry); renormalization and proportional fitting are then the
    matching Bregman projections, so small enough steps always ascend.
    The structure weights are unconstrained and take their plain
    log-domain gradient.
    """
    schema = model.schema
    support = np.isfinite(model.beta.logw)
    dlog_beta = np.where(
        support, np.exp(model.beta.logw) * blocks.beta * step, 0.0)
    new_log_beta = model.beta.logw + dlog_beta
    finite = new_log_beta[support]
    if finite.size:
        new_log_beta = new_log_beta - finite.max()
    node = []
    for v in range(schema.n):
        # reduced gradient: moving a node marginal drags the incident pair
        # tables along (the fitting step rescales their rows/columns), so
        # those tables' gradients contribute through the transport
        direction = np.array(blocks.node[v], dtype=np.float64)
        for (a, b), table in model.pair_tables.items():
            if a == v:
                direction += ((blocks.pair[(a, b)] * table).sum(axis=1)
                              / model.node_tables[v])
            elif b == v:
                direction += ((blocks.pair[(a, b)] * table).sum(axis=0)
                              / model.node_tables[v])
        log_t = np.log(model.node_tables[v]) + step * direction
        t_new = np.exp(log_t - log_t.max())
        node.append(t_new / t_new.sum())
    pairs = {}
    for (u, v), table in model.pair_tables.items():
        log_t = np.log(table) + step * blocks.pair[(u, v)]
        t_new = np.exp(log_t - log_t.max())
        pairs[(u, v)] = fit_pair_to_marginals(t_new, node[u], node[v])
    return EnsembleModel(
        schema=schema,
        beta=EdgeWeightSet(new_log_beta),
        pair_tables=pairs,
        node_tables=tuple(node),
    )


def train(dataset: Dataset,
          config: TrainConfig = TrainConfig()) -> tuple[EnsembleModel, list[float]]:
    """Fit an ensemble by projected gradient ascent.

    Returns the trained model and the trace of total log likelihood, one
    entry per accepted iteration (the first entry is the initial model's).
    The trace is nondecreasing: a step that does not improve is halved up
    to 30 times and training stops if no improvement remains. Converges to
    a local optimum only.
    """
    if dataset.size < 1:
        raise ValidationError("training needs at least one observation")
    rows, counts = _unique_rows(dataset)
    model = initial_model(collect(dataset), jitter=config.jitter,
                          seed=config.seed)
    ll = _dataset_ll(model, rows, counts)
    if not math.isfinite(ll):
        raise NumericalError("non-finite likelihood at initialization")
    trace = [ll]
    mean_step = config.step_size / dataset.size
    for iteration in range(config.max_iters):
        blocks = _gradients(model, rows, counts)
        accepted = None
        step = mean_step
        for _ in range(MAX_HALVINGS + 1):
            try:
                candidate = _apply_step(model, blocks, step)
            except ValidationError:
                # proposal too extreme for the projection; shorten the step
                step *= 0.5
                continue
            ll_new = _dataset_ll(candidate, rows, counts)
            if not math.isfinite(ll_new):
                raise NumericalError(
                    f"non-finite likelihood at iteration {iteration}")
            if ll_new >= ll:
                accepted = (candidate, ll_new)
                break
            step *= 0.5
        if accepted is None:
            break
        model, ll_next = accepted
        improvement = ll_next - ll
        ll = ll_next
        trace.append(ll)
        if improvement <= config.tol * abs(ll):
            break
    return model, trace
