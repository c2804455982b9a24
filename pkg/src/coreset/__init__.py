"""Bayesian coresets by greedy sparse variational inference."""
from .baselines import ProjectedVectors, giga, make_weighting, random_projection, uniform_subsample
from .errors import (
    CapabilityError,
    ConvergenceError,
    CoresetError,
    IndefiniteHessianError,
    InputError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .models import (
    GaussianDist,
    GaussianMeanModel,
    LogisticModel,
    PoissonModel,
    RbfRegressionModel,
    exact_potential_covariance,
    gaussian_kl,
    weighted_posterior,
)
from .posterior import PosteriorSampler, laplace_approximation
from .sparsevi import L1SearchConfig, SparseViConfig, Weights, l1_binary_search, sparsevi

__version__ = "0.1.0"
