"""Command-line surface for batch use.

Every subcommand is deterministic given its flags and seeds; numeric
output uses fixed scientific notation with 12 significant digits. Exit
codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import bruteforce, chowliu, ensemble, io
from .data import Dataset, collect
from .errors import NumericalError, ValidationError
from .posterior import PosteriorModel
from .prior import DecomposablePrior, uniform_prior
from .trees import TreeDistribution


def sci(x: float) -> str:
    """Fixed scientific notation, 12 significant digits, bare exponent."""
    if x != x or x in (float("inf"), float("-inf")):
        return str(x)
    if x == 0.0:
        x = 0.0
    mantissa, exponent = f"{x:.12e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def _load_data(path) -> Dataset:
    return io.read_dataset(path)


def _load_prior(args, dataset: Dataset, out) -> DecomposablePrior:
    if getattr(args, "prior", None):
        value = io.read_model(args.prior)
        if not isinstance(value, DecomposablePrior):
            raise ValidationError(f"{args.prior} does not contain a prior")
        if value.schema != dataset.schema:
            raise ValidationError("prior schema does not match the dataset")
        return value
    ess = sum(dataset.schema.cards) / dataset.schema.n
    print(f"prior: uniform, equivalent sample size {sci(ess)}, "
          f"edge weight {sci(1.0)}", file=out)
    return uniform_prior(dataset.schema, ess, 1.0)


def _edge_name(schema, u, v) -> str:
    return f"{schema.names[u]}--{schema.names[v]}"


def cmd_fit_chowliu(args, out) -> int:
    dataset = _load_data(args.data)
    if dataset.size < 1:
        raise ValidationError("fit-chowliu needs at least one observation")
    stats = collect(dataset)
    tree = chowliu.chow_liu_tree(stats)
    for (u, v) in tree.structure.edges:
        print(f"edge {_edge_name(dataset.schema, u, v)}", file=out)
    ll = chowliu.training_log_likelihood(tree, stats)
    print(f"training log-likelihood: {sci(ll)}", file=out)
    if args.out:
        io.write_model(args.out, tree)
        print(f"model written to {args.out}", file=out)
    return 0


def cmd_posterior(args, out) -> int:
    dataset = _load_data(args.data)
    prior = _load_prior(args, dataset, out)
    model = PosteriorModel.fit(prior, collect(dataset))
    schema = dataset.schema
    print(f"log evidence: {sci(model.log_marginal_likelihood())}", file=out)
    print("log posterior edge weights:", file=out)
    for u in range(schema.n):
        for v in range(u + 1, schema.n):
            print(f"  {_edge_name(schema, u, v)}: {sci(model.log_w[u, v])}",
                  file=out)
    probs = model.posterior_edge_probabilities()
    print("posterior edge probabilities:", file=out)
    for u in range(schema.n):
        for v in range(u + 1, schema.n):
            print(f"  {_edge_name(schema, u, v)}: {sci(probs[u, v])}",
                  file=out)
    io.write_model(args.out, model)
    print(f"model written to {args.out}", file=out)
    return 0


def cmd_evidence(args, out) -> int:
    dataset = _load_data(args.data)
    prior = _load_prior(args, dataset, out)
    model = PosteriorModel.fit(prior, collect(dataset))
    print(sci(model.log_marginal_likelihood()), file=out)
    return 0


def cmd_map_tree(args, out) -> int:
    dataset = _load_data(args.data)
    prior = _load_prior(args, dataset, out)
    model = PosteriorModel.fit(prior, collect(dataset))
    structure = model.map_structure()
    for (u, v) in structure.edges:
        print(f"edge {_edge_name(dataset.schema, u, v)}", file=out)
    print(f"log posterior probability: "
          f"{sci(model.log_structure_posterior(structure))}", file=out)
    return 0


def cmd_predict(args, out) -> int:
    model = io.read_model(args.model)
    if not isinstance(model, PosteriorModel):
        raise ValidationError(f"{args.model} does not contain a posterior model")
    dataset = _load_data(args.data)
    if dataset.schema != model.schema:
        raise ValidationError("dataset schema does not match the model")
    total = 0.0
    for row in dataset.rows:
        value = model.predictive_log_prob(row)
        total += value
        print(sci(value), file=out)
    print(f"sum: {sci(total)}", file=out)
    return 0


def cmd_train_ensemble(args, out) -> int:
    dataset = _load_data(args.data)
    config = ensemble.TrainConfig(
        step_size=args.lr, max_iters=args.steps, tol=args.tol,
        seed=args.seed, jitter=args.jitter)
    model, trace = ensemble.train(dataset, config)
    for k, value in enumerate(trace):
        print(f"iteration {k}: log-likelihood {sci(value)}", file=out)
    io.write_model(args.out, model)
    print(f"model written to {args.out}", file=out)
    return 0


def cmd_sample(args, out) -> int:
    model = io.read_model(args.model)
    if not isinstance(model, TreeDistribution):
        raise ValidationError(
            f"{args.model} does not contain a tree distribution")
    rows = model.sample_many(args.count, args.seed)
    print(io.format_dataset(Dataset(model.schema, rows)), end="", file=out)
    return 0


def cmd_oracle_check(args, out) -> int:
    dataset = _load_data(args.data)
    n = dataset.schema.n
    if n > args.max_n:
        raise ValidationError(
            f"oracle check supports up to {args.max_n} variables, got {n}")
    prior = _load_prior(args, dataset, out)
    model = PosteriorModel.fit(prior, collect(dataset))
    deviations: list[tuple[str, float]] = []

    exact_prior = bruteforce.exact_log_partition(prior.beta)
    deviations.append(
        ("prior partition", abs(model.log_prior_norm - exact_prior)))
    exact_post = bruteforce.exact_log_partition(model.posterior_beta())
    deviations.append(("posterior partition", abs(model.log_norm - exact_post)))

    exact_ml = bruteforce.exact_log_marginal_likelihood(prior, dataset)
    deviations.append(
        ("evidence", abs(model.log_marginal_likelihood() - exact_ml)))

    enum = bruteforce.enumerate_spanning_trees(n)
    exact_struct = bruteforce.exact_structure_log_posteriors(prior, dataset)
    worst = 0.0
    mass = 0.0
    for k, tree in enumerate(enum.trees):
        value = model.log_structure_posterior(tree)
        worst = max(worst, abs(value - float(exact_struct[k])))
        mass += np.exp(value)
    deviations.append(("structure posterior", worst))
    deviations.append(("structure posterior mass", abs(mass - 1.0)))

    worst = 0.0
    for row in dataset.rows[:5]:
        direct = model.predictive_log_prob(row)
        exact = bruteforce.exact_log_predictive(prior, dataset, row)
        worst = max(worst, abs(direct - exact))
    deviations.append(("predictive", worst))

    exact_edges = _exact_edge_probabilities(model)
    direct_edges = model.posterior_edge_probabilities()
    deviations.append(
        ("edge probabilities", float(np.max(np.abs(direct_edges - exact_edges)))))

    overall = 0.0
    for name, value in deviations:
        print(f"suite {name}: max deviation {sci(value)}", file=out)
        overall = max(overall, value)
    print(f"overall max deviation: {sci(overall)}", file=out)
    if overall >= 1e-8:
        raise NumericalError(
            f"oracle deviation {overall:.3e} exceeds tolerance 1e-8")
    return 0


def _exact_edge_probabilities(model: PosteriorModel) -> np.ndarray:
    n = model.schema.n
    enum = bruteforce.enumerate_spanning_trees(n)
    log_post = bruteforce.tree_log_weights(model.posterior_beta().logw)
    weights = np.exp(log_post - log_post.max())
    weights /= weights.sum()
    probs = np.zeros((n, n))
    for k, tree in enumerate(enum.trees):
        for (u, v) in tree.edges:
            probs[u, v] += weights[k]
            probs[v, u] += weights[k]
    return probs


def cmd_gradcheck(args, out) -> int:
    model = io.read_model(args.model)
    if not isinstance(model, ensemble.EnsembleModel):
        raise ValidationError(f"{args.model} does not contain an ensemble model")
    if args.tol <= 0:
        raise ValidationError("gradcheck tolerance must be positive")
    dataset = _load_data(args.data)
    worst = _finite_difference_report(model, dataset, out, tol=args.tol)
    print(f"max relative error: {sci(worst)}", file=out)
    if worst > args.tol:
        raise NumericalError(
            f"gradient mismatch {worst:.3e} exceeds tolerance {args.tol:g}")
    return 0


def _finite_difference_report(model, dataset, out, h: float = 1e-6,
                              tol: float = 1e-5) -> float:
    """Compare analytic gradients against centered differences.

    Structure weights are perturbed in the log domain so the check stays
    conditioned whatever their magnitude. Entries whose gradients sit at
    the rounding noise of the difference quotient (about eps * |L| / h)
    are measured against that floor rather than against zero.
    """
    blocks = ensemble.gradients(model, dataset)
    schema = model.schema
    n = schema.n

    def ll_of(m):
        return ensemble.log_likelihood_dataset(m, dataset)

    base = abs(ll_of(model)) + 1.0
    floor = 16.0 * np.finfo(np.float64).eps * base / h / tol

    def rel(analytic, numeric):
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)

    worst_beta = 0.0
    for u in range(n):
        for v in range(u + 1, n):
            analytic = (math.exp(model.beta.logw[u, v]) * blocks.beta[u, v])
            numeric = _central_difference(
                lambda d, u=u, v=v: ll_of(_with_log_beta(model, u, v, d)),
                0.0, h)
            worst_beta = max(worst_beta, rel(analytic, numeric))
    print(f"structure-weight gradients (log domain): max relative error "
          f"{sci(worst_beta)}", file=out)

    worst_pair = 0.0
    for (u, v), table in model.pair_tables.items():
        for i in range(table.shape[0]):
            for j in range(table.shape[1]):
                numeric = _central_difference(
                    lambda value, u=u, v=v, i=i, j=j: ll_of(
                        _with_pair_cell(model, u, v, i, j, value)),
                    float(table[i, j]), h)
                worst_pair = max(worst_pair, rel(blocks.pair[(u, v)][i, j],
                                                 numeric))
    print(f"pair-table gradients: max relative error {sci(worst_pair)}",
          file=out)

    worst_node = 0.0
    for v in range(n):
        for j in range(schema.cards[v]):
            numeric = _central_difference(
                lambda value, v=v, j=j: ll_of(_with_node_cell(model, v, j, value)),
                float(model.node_tables[v][j]), h)
            worst_node = max(worst_node, rel(blocks.node[v][j], numeric))
    print(f"node-table gradients: max relative error {sci(worst_node)}",
          file=out)
    return max(worst_beta, worst_pair, worst_node)


def _central_difference(f, x0: float, h: float) -> float:
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def _unchecked_ensemble(schema, beta, pair_tables, node_tables):
    model = object.__new__(ensemble.EnsembleModel)
    object.__setattr__(model, "schema", schema)
    object.__setattr__(model, "beta", beta)
    object.__setattr__(model, "pair_tables", pair_tables)
    object.__setattr__(model, "node_tables", node_tables)
    return model


def _with_beta(model, u, v, value):
    logw = np.array(model.beta.logw)
    logw[u, v] = logw[v, u] = np.log(value)
    from .matrix_tree import EdgeWeightSet
    return _unchecked_ensemble(model.schema, EdgeWeightSet(logw),
                               model.pair_tables, model.node_tables)


def _with_log_beta(model, u, v, delta):
    logw = np.array(model.beta.logw)
    logw[u, v] += delta
    logw[v, u] += delta
    from .matrix_tree import EdgeWeightSet
    return _unchecked_ensemble(model.schema, EdgeWeightSet(logw),
                               model.pair_tables, model.node_tables)


def _with_pair_cell(model, u, v, i, j, value):
    tables = dict(model.pair_tables)
    t = np.array(tables[(u, v)])
    t[i, j] = value
    tables[(u, v)] = t
    return _unchecked_ensemble(model.schema, model.beta, tables,
                               model.node_tables)


def _with_node_cell(model, v, j, value):
    nodes = list(model.node_tables)
    t = np.array(nodes[v])
    t[j] = value
    nodes[v] = t
    return _unchecked_ensemble(model.schema, model.beta, model.pair_tables,
                               tuple(nodes))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treebayes",
        description="Exact Bayesian learning of tree belief networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-chowliu", help="maximum-likelihood tree")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_chowliu)

    p = sub.add_parser("posterior", help="fit and store the posterior model")
    p.add_argument("--data", required=True)
    p.add_argument("--prior")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("evidence", help="log marginal likelihood of the data")
    p.add_argument("--data", required=True)
    p.add_argument("--prior")
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("map-tree", help="maximum-posterior tree structure")
    p.add_argument("--data", required=True)
    p.add_argument("--prior")
    p.set_defaults(func=cmd_map_tree)

    p = sub.add_parser("predict", help="Bayesian predictive probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("train-ensemble", help="fit an ensemble of trees")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ensemble)

    p = sub.add_parser("sample", help="draw rows from a tree model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("oracle-check",
                       help="compare closed forms against enumeration")
    p.add_argument("--data", required=True)
    p.add_argument("--prior")
    p.add_argument("--max-n", type=int, default=6)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of ensemble gradients")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv, out=None) -> int:
    """Parse and execute one command; returns the process exit code."""
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
