"""Exact Bayesian learning of tree belief networks over discrete variables."""

from .bruteforce import (
    enumerate_spanning_trees,
    exact_ensemble_log_likelihood,
    exact_log_marginal_likelihood,
    exact_log_partition,
    exact_log_predictive,
    exact_structure_log_posteriors,
)
from .chowliu import chow_liu_tree, mutual_information, training_log_likelihood
from .data import Dataset, SufficientStats, collect
from .ensemble import (
    EnsembleModel,
    TrainConfig,
    edge_factors,
    gradients,
    log_likelihood,
    log_likelihood_dataset,
    train,
)
from .errors import (
    DisconnectedSupportError,
    NumericalError,
    TreebayesError,
    ValidationError,
)
from .io import read_dataset, read_model, write_dataset, write_model
from .matrix_tree import (
    CoactivityMatrix,
    EdgeWeightSet,
    LaplacianMinor,
    additive_average,
    additive_average_trace,
    build_laplacian_minor,
    coactivity,
    edge_probabilities,
    log_partition,
    multiplicative_average,
)
from .posterior import PosteriorModel, log_marginal_likelihood, posterior_weights
from .prior import (
    DecomposablePrior,
    Violation,
    log_dirichlet_density,
    log_prior_of_tree,
    prior_from_joint,
    uniform_prior,
    validate,
)
from .trees import (
    DirectedTree,
    DirectedTreeDistribution,
    DomainSchema,
    TreeDistribution,
    TreeStructure,
)

__version__ = "0.1.0"
