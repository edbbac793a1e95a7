"""Tree-structured distributions over discrete variables.

A tree distribution is given by a spanning-tree edge set together with a
consistent system of pairwise and single-variable marginal tables. The
joint factors as the product of edge marginals divided by node marginals
raised to (degree - 1). An equivalent directed parameterization (root
marginal plus per-edge conditional tables) is available through
``to_directed`` and supports ancestral sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class DomainSchema:
    """Named discrete variables with their cardinalities."""

    names: tuple[str, ...]
    cards: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.cards):
            raise ValidationError("names and cardinalities differ in length")
        if len(self.names) < 2:
            raise ValidationError("a domain needs at least two variables")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("variable names must be unique")
        if any(r < 2 for r in self.cards):
            raise ValidationError("every variable needs cardinality >= 2")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def r_max(self) -> int:
        return max(self.cards)

    @classmethod
    def binary(cls, n: int) -> "DomainSchema":
        return cls(tuple(f"x{v}" for v in range(n)), (2,) * n)

    @classmethod
    def of_cards(cls, cards) -> "DomainSchema":
        cards = tuple(int(r) for r in cards)
        return cls(tuple(f"x{v}" for v in range(len(cards))), cards)

    def check_assignment(self, x) -> np.ndarray:
        """Validate a full assignment and return it as an int array."""
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise ValidationError(
                f"assignment has shape {x.shape}, expected ({self.n},)")
        if not np.issubdtype(x.dtype, np.integer):
            if not np.all(x == np.floor(x)):
                raise ValidationError("assignment values must be integers")
            x = x.astype(np.int64)
        for v, (val, r) in enumerate(zip(x, self.cards)):
            if not 0 <= val < r:
                raise ValidationError(
                    f"value {val} out of range for variable "
                    f"{self.names[v]} (cardinality {r})")
        return x.astype(np.int64)


def _as_edge(u: int, v: int) -> tuple[int, int]:
    if u == v:
        raise ValidationError(f"self-loop at vertex {u}")
    return (u, v) if u < v else (v, u)


def connected_components(n: int, edges) -> list[list[int]]:
    """Connected components of an undirected graph, as sorted vertex lists."""
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


@dataclass(frozen=True)
class TreeStructure:
    """A spanning tree over vertices 0..n-1, stored as sorted undirected edges."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("a spanning tree needs at least two vertices")
        edges = tuple(sorted(_as_edge(u, v) for u, v in self.edges))
        object.__setattr__(self, "edges", edges)
        if len(set(edges)) != len(edges):
            raise ValidationError("duplicate edges in tree structure")
        if len(edges) != self.n - 1:
            raise ValidationError(
                f"{len(edges)} edges cannot span {self.n} vertices")
        for u, v in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValidationError(f"edge ({u},{v}) out of vertex range")
        if len(connected_components(self.n, edges)) != 1:
            raise ValidationError("edge set is not connected")

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


@dataclass(frozen=True)
class DirectedTree:
    """A rooting of a spanning tree: parent map with a single root."""

    root: int
    parent: tuple[int | None, ...]

    @property
    def n(self) -> int:
        return len(self.parent)

    @classmethod
    def from_structure(cls, structure: TreeStructure, root: int) -> "DirectedTree":
        if not 0 <= root < structure.n:
            raise ValidationError(f"root {root} out of range")
        parent: list[int | None] = [None] * structure.n
        adj = structure.neighbors()
        order = [root]
        seen = {root}
        for u in order:
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    parent[w] = u
                    order.append(w)
        return cls(root=root, parent=tuple(parent))

    def topological_order(self) -> list[int]:
        """Vertices ordered root first, every parent before its children."""
        children = [[] for _ in range(self.n)]
        for v, p in enumerate(self.parent):
            if p is not None:
                children[p].append(v)
        order = [self.root]
        for u in order:
            order.extend(children[u])
        return order


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TreeDistribution:
    """Spanning tree plus consistent pairwise and node marginal tables.

    ``pair_marginals`` maps each sorted edge (u, v) to an (r_u, r_v) table;
    ``node_marginals[v]`` is the length-r_v marginal of variable v. Tables
    must be nonnegative, sum to one, and agree on shared marginals.
    """

    schema: DomainSchema
    structure: TreeStructure
    pair_marginals: dict[tuple[int, int], np.ndarray]
    node_marginals: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        if self.structure.n != self.schema.n:
            raise ValidationError("structure and schema sizes differ")
        pairs = {}
        for (u, v), t in self.pair_marginals.items():
            t = np.asarray(t, dtype=np.float64)
            if (u, v) != _as_edge(u, v):
                raise ValidationError(f"pair table key ({u},{v}) is not sorted")
            if t.shape != (self.schema.cards[u], self.schema.cards[v]):
                raise ValidationError(f"pair table ({u},{v}) has wrong shape")
            pairs[(u, v)] = _freeze(t)
        if set(pairs) != set(self.structure.edges):
            raise ValidationError("pair tables do not match the edge set")
        nodes = tuple(
            _freeze(np.asarray(t, dtype=np.float64)) for t in self.node_marginals)
        if len(nodes) != self.schema.n:
            raise ValidationError("need one node marginal per variable")
        for v, t in enumerate(nodes):
            if t.shape != (self.schema.cards[v],):
                raise ValidationError(f"node marginal {v} has wrong shape")
        object.__setattr__(self, "pair_marginals", pairs)
        object.__setattr__(self, "node_marginals", nodes)
        self._check_consistency()

    def _check_consistency(self):
        for v, t in enumerate(self.node_marginals):
            if np.any(t < -CONSISTENCY_TOL):
                raise ValidationError(f"negative entry in node marginal {v}")
            if abs(t.sum() - 1.0) > CONSISTENCY_TOL:
                raise ValidationError(f"node marginal {v} does not sum to 1")
        for (u, v), t in self.pair_marginals.items():
            if np.any(t < -CONSISTENCY_TOL):
                raise ValidationError(f"negative entry in pair table ({u},{v})")
            if abs(t.sum() - 1.0) > CONSISTENCY_TOL:
                raise ValidationError(f"pair table ({u},{v}) does not sum to 1")
            if np.max(np.abs(t.sum(axis=1) - self.node_marginals[u])) > CONSISTENCY_TOL:
                raise ValidationError(
                    f"pair table ({u},{v}) disagrees with node marginal {u}")
            if np.max(np.abs(t.sum(axis=0) - self.node_marginals[v])) > CONSISTENCY_TOL:
                raise ValidationError(
                    f"pair table ({u},{v}) disagrees with node marginal {v}")

    @classmethod
    def from_joint(cls, schema: DomainSchema, structure: TreeStructure,
                   joint: np.ndarray) -> "TreeDistribution":
        """Build a tree distribution from the marginals of a full joint table.

        Any normalized joint over the domain yields a consistent marginal
        system; the result is the tree-factored projection of that joint.
        """
        joint = np.asarray(joint, dtype=np.float64)
        if joint.shape != tuple(schema.cards):
            raise ValidationError("joint table shape does not match schema")
        total = joint.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValidationError("joint table must sum to 1")
        axes = tuple(range(schema.n))
        pair = {}
        for (u, v) in structure.edges:
            keep = tuple(a for a in axes if a not in (u, v))
            pair[(u, v)] = joint.sum(axis=keep)
        nodes = tuple(
            joint.sum(axis=tuple(a for a in axes if a != v)) for v in axes)
        return cls(schema, structure, pair, nodes)

    def log_prob(self, x) -> float:
        """Log probability of a full assignment under the tree factorization."""
        x = self.schema.check_assignment(x)
        deg = self.structure.degrees()
        total = 0.0
        for (u, v), t in self.pair_marginals.items():
            p = t[x[u], x[v]]
            if p <= 0.0:
                return float("-inf")
            total += np.log(p)
        for v in range(self.schema.n):
            e = deg[v] - 1
            if e == 0:
                continue
            p = self.node_marginals[v][x[v]]
            if p <= 0.0:
                # consistency forces a zero pair entry first; guard anyway
                return float("-inf")
            total -= e * np.log(p)
        return float(total)

    def parameter_count(self) -> int:
        """Number of free parameters in either representation."""
        deg = self.structure.degrees()
        edge_term = sum(self.schema.cards[u] * self.schema.cards[v]
                        for u, v in self.structure.edges)
        node_term = sum((deg[v] - 1) * self.schema.cards[v]
                        for v in range(self.schema.n))
        return int(edge_term - node_term)

    def to_directed(self, root: int) -> "DirectedTreeDistribution":
        """Reparameterize as a root marginal plus conditional tables.

        Requires strictly positive marginals at every parent value that is
        conditioned on.
        """
        directed = DirectedTree.from_structure(self.structure, root)
        cond = {}
        for child, p in enumerate(directed.parent):
            if p is None:
                continue
            if p < child:
                table = self.pair_marginals[(p, child)]
            else:
                table = self.pair_marginals[(child, p)].T
            marg = self.node_marginals[p]
            if np.any(marg <= 0.0):
                bad = int(np.argmin(marg))
                raise ValidationError(
                    f"cannot condition on zero-probability value {bad} "
                    f"of variable {self.schema.names[p]}")
            cond[(p, child)] = _freeze(table / marg[:, None])
        return DirectedTreeDistribution(
            schema=self.schema,
            directed=directed,
            root_marginal=self.node_marginals[root],
            conditionals=cond,
        )

    def sample(self, seed) -> np.ndarray:
        """Draw one assignment by ancestral sampling. Deterministic per seed."""
        return self.sample_many(1, seed)[0]

    def sample_many(self, count: int, seed) -> np.ndarray:
        """Draw ``count`` assignments from one seeded generator.

        Conditionals are formed only at sampled parent values, so
        zero-probability rows (including point masses) never require a
        division by zero.
        """
        directed = DirectedTree.from_structure(self.structure, root=0)
        order = directed.topological_order()
        rng = np.random.default_rng(seed)
        out = np.zeros((count, self.schema.n), dtype=np.int64)
        for t in range(count):
            for v in order:
                p = directed.parent[v]
                if p is None:
                    probs = self.node_marginals[v]
                elif p < v:
                    probs = self.pair_marginals[(p, v)][out[t, p], :]
                else:
                    probs = self.pair_marginals[(v, p)][:, out[t, p]]
                out[t, v] = _sample_index(probs, rng)
        return out


def _sample_index(probs: np.ndarray, rng) -> int:
    u = rng.random()
    c = np.cumsum(probs)
    return int(np.searchsorted(c, u * c[-1], side="right").clip(0, len(probs) - 1))


@dataclass(frozen=True)
class DirectedTreeDistribution:
    """Directed parameterization: root marginal and per-edge conditionals.

    ``conditionals[(p, c)][i, j]`` is P(child c = j | parent p = i).
    """

    schema: DomainSchema
    directed: DirectedTree
    root_marginal: np.ndarray
    conditionals: dict[tuple[int, int], np.ndarray]

    def log_prob(self, x) -> float:
        x = self.schema.check_assignment(x)
        p0 = self.root_marginal[x[self.directed.root]]
        if p0 <= 0.0:
            return float("-inf")
        total = float(np.log(p0))
        for (p, c), table in self.conditionals.items():
            q = table[x[p], x[c]]
            if q <= 0.0:
                return float("-inf")
            total += float(np.log(q))
        return total
