"""Dataset ingestion and model persistence.

Datasets are plain text: a header line of ``name:cardinality`` fields,
comma separated, then one row of integer values per line. Models are JSON
documents (one object per file) whose floats use Python's shortest
round-trip representation, so deserialize(serialize(v)) reproduces every
value bit for bit; IEEE infinities appear as the JSON tokens
``Infinity``/``-Infinity``.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .data import Dataset, SufficientStats
from .ensemble import EnsembleModel
from .errors import ValidationError
from .matrix_tree import EdgeWeightSet
from .posterior import PosteriorModel
from .prior import DecomposablePrior, validate
from .trees import DomainSchema, TreeDistribution, TreeStructure

FORMAT_NAME = "treebayes-model"
FORMAT_VERSION = 1


def read_dataset(path) -> Dataset:
    """Parse a dataset file, reporting the line and column of the first
    violation."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: missing header line")
    names, cards = [], []
    for field in lines[0].split(","):
        field = field.strip()
        name, sep, card = field.partition(":")
        if not sep or not name:
            raise ValidationError(
                f"{path}: line 1: header field {field!r} is not name:cardinality")
        try:
            cards.append(int(card))
        except ValueError:
            raise ValidationError(
                f"{path}: line 1: cardinality {card!r} of column "
                f"{name!r} is not an integer") from None
        names.append(name)
    schema = DomainSchema(tuple(names), tuple(cards))
    rows = np.zeros((len(lines) - 1, schema.n), dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != schema.n:
            raise ValidationError(
                f"{path}: line {lineno}: {len(fields)} values, "
                f"expected {schema.n}")
        for col, token in enumerate(fields):
            try:
                value = int(token.strip())
            except ValueError:
                raise ValidationError(
                    f"{path}: line {lineno}, column {names[col]}: "
                    f"{token.strip()!r} is not an integer") from None
            if not 0 <= value < cards[col]:
                raise ValidationError(
                    f"{path}: line {lineno}, column {names[col]}: value "
                    f"{value} out of range [0, {cards[col]})")
            rows[lineno - 2, col] = value
    return Dataset(schema, rows)


def format_dataset(dataset: Dataset) -> str:
    """Render a dataset in the same text format ``read_dataset`` accepts."""
    header = ",".join(f"{name}:{card}" for name, card
                      in zip(dataset.schema.names, dataset.schema.cards))
    body = "\n".join(",".join(str(v) for v in row) for row in dataset.rows)
    return header + ("\n" + body if body else "") + "\n"


def write_dataset(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_dataset(dataset))


def _schema_doc(schema: DomainSchema) -> dict:
    return {"names": list(schema.names), "cards": list(schema.cards)}


def _schema_from(doc: dict) -> DomainSchema:
    return DomainSchema(tuple(doc["names"]), tuple(int(c) for c in doc["cards"]))


def _edge_tables(tables: dict[tuple[int, int], np.ndarray]) -> list:
    return [[u, v, tables[(u, v)].tolist()] for (u, v) in sorted(tables)]


def _edge_tables_from(items) -> dict[tuple[int, int], np.ndarray]:
    return {(int(u), int(v)): np.array(t, dtype=np.float64)
            for u, v, t in items}


def _prior_doc(p: DecomposablePrior) -> dict:
    return {
        "log_beta": p.beta.logw.tolist(),
        "pair_counts": p.pair_counts.tolist(),
        "node_counts": p.node_counts.tolist(),
        "total": p.total,
    }


def _prior_from(schema: DomainSchema, doc: dict) -> DecomposablePrior:
    prior = DecomposablePrior(
        schema=schema,
        beta=EdgeWeightSet(np.array(doc["log_beta"], dtype=np.float64)),
        pair_counts=np.array(doc["pair_counts"], dtype=np.float64),
        node_counts=np.array(doc["node_counts"], dtype=np.float64),
        total=float(doc["total"]),
    )
    problems = validate(prior)
    if problems:
        raise ValidationError(
            f"prior file violates {len(problems)} invariant(s): "
            + "; ".join(str(v) for v in problems[:5]))
    return prior


def _stats_doc(s: SufficientStats) -> dict:
    return {
        "pair_counts": s.pair_counts.tolist(),
        "node_counts": s.node_counts.tolist(),
        "total": s.total,
    }


def _stats_from(schema: DomainSchema, doc: dict) -> SufficientStats:
    return SufficientStats(
        schema=schema,
        pair_counts=np.array(doc["pair_counts"], dtype=np.int64),
        node_counts=np.array(doc["node_counts"], dtype=np.int64),
        total=int(doc["total"]),
    )


def _payload(value: Any) -> tuple[str, dict]:
    if isinstance(value, DecomposablePrior):
        return "prior", _prior_doc(value)
    if isinstance(value, TreeDistribution):
        return "tree", {
            "edges": [list(e) for e in value.structure.edges],
            "pair_marginals": _edge_tables(value.pair_marginals),
            "node_marginals": [t.tolist() for t in value.node_marginals],
        }
    if isinstance(value, EnsembleModel):
        return "ensemble", {
            "log_beta": value.beta.logw.tolist(),
            "pair_tables": _edge_tables(value.pair_tables),
            "node_tables": [t.tolist() for t in value.node_tables],
        }
    if isinstance(value, PosteriorModel):
        return "posterior", {
            "prior": _prior_doc(value.prior),
            "stats": _stats_doc(value.stats),
            "log_w": value.log_w.tolist(),
            "log_phi": value.log_phi,
            "log_norm": value.log_norm,
            "log_prior_norm": value.log_prior_norm,
        }
    raise ValidationError(f"cannot serialize a {type(value).__name__}")


def _restore(kind: str, schema: DomainSchema, doc: dict) -> Any:
    if kind == "prior":
        return _prior_from(schema, doc)
    if kind == "tree":
        structure = TreeStructure(
            n=schema.n, edges=tuple((int(u), int(v)) for u, v in doc["edges"]))
        return TreeDistribution(
            schema=schema,
            structure=structure,
            pair_marginals=_edge_tables_from(doc["pair_marginals"]),
            node_marginals=tuple(np.array(t, dtype=np.float64)
                                 for t in doc["node_marginals"]),
        )
    if kind == "ensemble":
        return EnsembleModel(
            schema=schema,
            beta=EdgeWeightSet(np.array(doc["log_beta"], dtype=np.float64)),
            pair_tables=_edge_tables_from(doc["pair_tables"]),
            node_tables=tuple(np.array(t, dtype=np.float64)
                              for t in doc["node_tables"]),
        )
    if kind == "posterior":
        prior = _prior_from(schema, doc["prior"])
        log_w = np.array(doc["log_w"], dtype=np.float64)
        log_w.setflags(write=False)
        return PosteriorModel(
            prior=prior,
            stats=_stats_from(schema, doc["stats"]),
            log_w=log_w,
            log_phi=float(doc["log_phi"]),
            log_norm=float(doc["log_norm"]),
            log_prior_norm=float(doc["log_prior_norm"]),
        )
    raise ValidationError(f"unknown model kind {kind!r}")


def write_model(path, value) -> None:
    """Serialize a prior, tree distribution, ensemble, or posterior."""
    kind, payload = _payload(value)
    document = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "schema": _schema_doc(value.schema),
        "payload": payload,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=1)
        handle.write("\n")


def read_model(path):
    """Load a model file written by ``write_model``."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed model file: {exc}") from None
    if not isinstance(document, dict) or document.get("format") != FORMAT_NAME:
        raise ValidationError(f"{path}: not a {FORMAT_NAME} file")
    version = document.get("version")
    if version != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported model file version {version!r} "
            f"(this build reads version {FORMAT_VERSION})")
    try:
        schema = _schema_from(document["schema"])
        return _restore(document["kind"], schema, document["payload"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed model file: {exc}") from None
