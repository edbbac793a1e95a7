"""Weighted spanning-tree sums via Laplacian minors.

The partition function of a factored distribution over spanning trees,
Z = sum over trees of the product of edge weights, equals the determinant
of the weighted-Laplacian minor obtained by deleting the last row and
column. This module builds that minor, evaluates log Z, and computes the
coactivity matrix M whose entries give dZ/dw_uv = M_uv * Z, from which
edge-appearance probabilities and averages of additive and multiplicative
edge functions follow.

Weights live in the log domain (-inf marks an excluded pair) and every
computation rescales by the maximum weight first; Z is homogeneous of
degree n-1 in the weights, so the rescaling is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedSupportError, NumericalError, ValidationError
from .trees import connected_components

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class EdgeWeightSet:
    """Symmetric nonnegative weights per unordered vertex pair, in log domain.

    ``logw[u, v]`` is the log weight of pair (u, v); ``-inf`` marks a pair
    with zero weight (absent from the support graph). The diagonal is
    always ``-inf``: self-pairs carry no weight.
    """

    logw: np.ndarray

    def __post_init__(self):
        logw = np.array(self.logw, dtype=np.float64)
        if logw.ndim != 2 or logw.shape[0] != logw.shape[1]:
            raise ValidationError("log-weight table must be square")
        if logw.shape[0] < 2:
            raise ValidationError("need at least two vertices")
        if np.any(np.isnan(logw)) or np.any(logw == np.inf):
            raise ValidationError("log-weights must be < +inf and not NaN")
        np.fill_diagonal(logw, -np.inf)
        if not np.array_equal(logw, logw.T):
            raise ValidationError("log-weight table must be symmetric")
        logw.setflags(write=False)
        object.__setattr__(self, "logw", logw)

    @property
    def n(self) -> int:
        return self.logw.shape[0]

    @classmethod
    def from_weights(cls, weights) -> "EdgeWeightSet":
        """Build from linear-domain weights; zeros become -inf logs."""
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(w))

    @classmethod
    def uniform(cls, n: int, weight: float = 1.0) -> "EdgeWeightSet":
        if weight <= 0:
            raise ValidationError("uniform weight must be positive")
        return cls(np.full((n, n), math.log(weight)))

    def weighted(self, log_factors) -> "EdgeWeightSet":
        """Elementwise product with another per-pair table, in log domain."""
        f = np.asarray(log_factors, dtype=np.float64)
        if f.shape != self.logw.shape:
            raise ValidationError("factor table has wrong shape")
        with np.errstate(invalid="ignore"):
            combined = self.logw + f
        # -inf + -inf is fine; silence the 0*inf-style warnings only
        combined[np.isnan(combined)] = -np.inf
        return EdgeWeightSet(combined)

    def support_edges(self) -> list[tuple[int, int]]:
        upper = np.arange(self.n)[:, None] < np.arange(self.n)[None, :]
        us, vs = np.nonzero(np.isfinite(self.logw) & upper)
        return [(int(u), int(v)) for u, v in zip(us, vs)]

    def support_components(self) -> list[list[int]]:
        return connected_components(self.n, self.support_edges())

    def has_connected_support(self) -> bool:
        return len(self.support_components()) == 1


@dataclass(frozen=True)
class LaplacianMinor:
    """First (n-1) rows and columns of the weighted Laplacian, rescaled.

    ``q`` is built from weights divided by exp(scale); the determinant of
    the unscaled minor is exp((n-1) * scale) * det(q).
    """

    q: np.ndarray
    scale: float

    @property
    def n(self) -> int:
        return self.q.shape[0] + 1


@dataclass(frozen=True)
class CoactivityMatrix:
    """Symmetric matrix M with dZ/dw_uv = M_uv * Z, zero diagonal.

    ``m`` holds the coactivity of the max-rescaled weights; the coactivity
    of the original weights is ``m * exp(-scale)`` (available as
    ``dense()``). Products of the form w_uv * M_uv are computed stably as
    exp(logw - scale) * m and lie in [0, 1].
    """

    m: np.ndarray
    scale: float

    def dense(self) -> np.ndarray:
        return self.m * math.exp(-self.scale)


def _rescaled_weights(w: EdgeWeightSet) -> tuple[np.ndarray, float]:
    finite = w.logw[np.isfinite(w.logw)]
    if finite.size == 0:
        raise DisconnectedSupportError("all pair weights are zero")
    scale = float(finite.max())
    return np.exp(w.logw - scale), scale


def laplacian_minor_of(weights: np.ndarray) -> np.ndarray:
    """Minor (last row/column deleted) of the Laplacian of a dense
    symmetric weight matrix; entries may be negative (used by the trace
    form of additive averages)."""
    col_sums = weights.sum(axis=0)
    q = -weights + np.diag(col_sums)
    return q[:-1, :-1]


def build_laplacian_minor(w: EdgeWeightSet) -> LaplacianMinor:
    """Rescaled Laplacian minor of the weight set, with the extracted
    log-scale recorded."""
    if w.n < 2:
        raise ValidationError("need at least two vertices")
    weights, scale = _rescaled_weights(w)
    q = laplacian_minor_of(weights)
    q.setflags(write=False)
    return LaplacianMinor(q=q, scale=scale)


def _lu_factor(a: list[list[float]]) -> tuple[list[int], float, float]:
    """Pivoted triangular factorization, in place.

    Returns (row permutation, log |det|, sign). Rows below the diagonal
    end up holding the elimination multipliers so the factorization can be
    reused for solves. A pivot below n * ulp * max|entry| signals a
    rank-deficient minor, i.e. a disconnected support graph.
    """
    n = len(a)
    maxentry = max(max(abs(x) for x in row) for row in a)
    tol = n * _EPS * maxentry
    perm = list(range(n))
    sign = 1.0
    logabsdet = 0.0
    for k in range(n):
        p = k
        best = abs(a[k][k])
        for i in range(k + 1, n):
            cand = abs(a[i][k])
            if cand > best:
                best = cand
                p = i
        if best <= tol:
            raise DisconnectedSupportError(
                "Laplacian minor is numerically singular "
                "(support graph disconnected?)")
        if p != k:
            a[k], a[p] = a[p], a[k]
            perm[k], perm[p] = perm[p], perm[k]
            sign = -sign
        row_k = a[k]
        pivot = row_k[k]
        if pivot < 0.0:
            sign = -sign
        logabsdet += math.log(abs(pivot))
        inv_pivot = 1.0 / pivot
        tail = row_k[k + 1:]
        for i in range(k + 1, n):
            row_i = a[i]
            f = row_i[k] * inv_pivot
            row_i[k] = f
            if f != 0.0:
                row_i[k + 1:] = [x - f * y for x, y in zip(row_i[k + 1:], tail)]
    return perm, logabsdet, sign


def _lu_solve(a: list[list[float]], perm: list[int], b: list[float]) -> list[float]:
    n = len(a)
    y = [b[perm[k]] for k in range(n)]
    for k in range(1, n):
        row = a[k]
        s = y[k]
        for j in range(k):
            s -= row[j] * y[j]
        y[k] = s
    for k in range(n - 1, -1, -1):
        row = a[k]
        s = y[k]
        for j in range(k + 1, n):
            s -= row[j] * y[j]
        y[k] = s / row[k]
    return y


def _logdet_posdef(q: np.ndarray) -> float:
    rows = q.tolist()
    _, logabsdet, sign = _lu_factor(rows)
    if sign <= 0.0:
        raise NumericalError(
            "negative determinant for a minor that should be positive "
            "definite; treating as numerical failure")
    return logabsdet


def _inverse(q: np.ndarray) -> np.ndarray:
    rows = q.tolist()
    perm, _, sign = _lu_factor(rows)
    if sign <= 0.0:
        raise NumericalError("sign loss while inverting the Laplacian minor")
    n = len(rows)
    inv = np.empty((n, n), dtype=np.float64)
    e = [0.0] * n
    for j in range(n):
        e[j] = 1.0
        inv[:, j] = _lu_solve(rows, perm, e)
        e[j] = 0.0
    return inv


def log_partition(w: EdgeWeightSet) -> float:
    """Log of the weighted count of spanning trees, log |Q|.

    Raises DisconnectedSupportError when the support graph cannot span.
    """
    minor = build_laplacian_minor(w)
    return (w.n - 1) * minor.scale + _logdet_posdef(minor.q)


def coactivity(w: EdgeWeightSet) -> CoactivityMatrix:
    """Coactivity matrix of the weight set (see class docstring for the
    scale convention)."""
    minor = build_laplacian_minor(w)
    inv = _inverse(minor.q)
    inv = 0.5 * (inv + inv.T)  # keep the symmetry exact to the last bit
    n = w.n
    m = np.zeros((n, n), dtype=np.float64)
    d = np.diag(inv)
    # pairs not involving the deleted vertex
    m[:n - 1, :n - 1] = d[:, None] + d[None, :] - 2.0 * inv
    # pairs (v, n-1): the minor removed the last vertex
    m[n - 1, :n - 1] = d
    m[:n - 1, n - 1] = d
    np.fill_diagonal(m, 0.0)
    m.setflags(write=False)
    return CoactivityMatrix(m=m, scale=minor.scale)


def edge_probabilities(w: EdgeWeightSet) -> np.ndarray:
    """Probability that each pair appears as a tree edge: w_uv * M_uv.

    Entries lie in [0, 1] and sum (over unordered pairs) to n - 1.
    """
    co = coactivity(w)
    probs = np.exp(w.logw - co.scale) * co.m
    if np.any(probs < -1e-9) or np.any(probs > 1.0 + 1e-9):
        raise NumericalError("edge probability escaped [0, 1]")
    probs = np.clip(probs, 0.0, 1.0)
    np.fill_diagonal(probs, 0.0)
    probs.setflags(write=False)
    return probs


def _check_pair_table(w: EdgeWeightSet, f: np.ndarray, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != w.logw.shape:
        raise ValidationError(f"{name} table has wrong shape")
    if not np.allclose(f, f.T, equal_nan=True):
        raise ValidationError(f"{name} table must be symmetric")
    return f


def additive_average(w: EdgeWeightSet, f) -> float:
    """Average of an edge-additive function: sum over pairs of
    f_uv * w_uv * M_uv."""
    f = _check_pair_table(w, f, "additive function")
    if not np.all(np.isfinite(f)):
        raise ValidationError("additive function must be finite")
    co = coactivity(w)
    terms = f * np.exp(w.logw - co.scale) * co.m
    iu = np.triu_indices(w.n, k=1)
    return float(terms[iu].sum())


def additive_average_trace(w: EdgeWeightSet, f) -> float:
    """Same average in the trace form, trace(Q(f w) Q(w)^-1); agrees with
    the pairwise sum to round-off and serves as its cross-check."""
    f = _check_pair_table(w, f, "additive function")
    if not np.all(np.isfinite(f)):
        raise ValidationError("additive function must be finite")
    weights, _ = _rescaled_weights(w)
    q_f = laplacian_minor_of(f * weights)
    inv = _inverse(laplacian_minor_of(weights))
    return float(np.sum(q_f * inv.T))


def multiplicative_average(w: EdgeWeightSet, logg) -> float:
    """Log average of an edge-multiplicative function g, as the log ratio
    of two partition functions.

    Requires the support of w * g to stay connected; a g that disconnects
    the support raises DisconnectedSupportError rather than silently
    dropping trees.
    """
    logg = _check_pair_table(w, logg, "multiplicative function")
    if np.any(logg == np.inf) or np.any(np.isnan(logg)):
        raise ValidationError("log factors must be < +inf and not NaN")
    return log_partition(w.weighted(logg)) - log_partition(w)
