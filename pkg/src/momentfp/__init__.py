"""Stochastic multi-cell MIMO precoding from channel moments.

Precoders are chosen to maximize a lower bound on the expected weighted sum
rate using only the first and second moments of the channels.  Two solvers are
provided: :func:`run_algorithm1` solves an ``Mt x Mt`` system per cell and
iteration, :func:`run_algorithm2` replaces it by an inverse-free step.
"""
from .channels import (ChannelMoments, GaussianFadingModel, NakagamiFadingModel, analytic_moments,
                       deterministic_moments, empirical_moments, jakes_rho, models_from_topology,
                       sample_gaussian, sample_nakagami)
from .errors import ConfigurationError, InputError, NumericalError, PrecodingError
from .fastfp import run_algorithm2
from .fp import MomentModel, SolveTrace, fhat_at, run_algorithm1
from .network import (NetworkConfig, Topology, dbm_to_watt, generate_topology,
                      instantaneous_rate, monte_carlo_weighted_sum_rate, watt_to_dbm,
                      weighted_sum_rate)

__version__ = "0.1.0"

__all__ = [
    "ChannelMoments", "GaussianFadingModel", "NakagamiFadingModel", "analytic_moments",
    "deterministic_moments", "empirical_moments", "jakes_rho", "models_from_topology",
    "sample_gaussian", "sample_nakagami", "ConfigurationError", "InputError", "NumericalError",
    "PrecodingError", "run_algorithm2", "MomentModel", "SolveTrace", "fhat_at", "run_algorithm1",
    "NetworkConfig", "Topology", "dbm_to_watt", "generate_topology", "instantaneous_rate",
    "monte_carlo_weighted_sum_rate", "watt_to_dbm", "weighted_sum_rate", "__version__",
]
