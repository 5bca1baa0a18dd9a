"""Probabilistic robustness for small feed-forward classifiers."""

from probrobust._kernels import BACKEND
from probrobust.errors import (ConfigError, InvalidInputError, NumericFaultError, ProbRobustError,
                               RareEventError)
from probrobust.estimators import (AmlsConfig, PrEstimate, SeqDecision, amls_estimate,
                                   last_particle_estimate, mc_estimate, seq_estimate)
from probrobust.model import Layer, Network, forward, init_network, load_model, predict, save_model
from probrobust.perturb import PerturbSpec
from probrobust.rng import RngKey

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "InvalidInputError", "NumericFaultError", "ProbRobustError",
    "RareEventError", "AmlsConfig", "PrEstimate", "SeqDecision", "amls_estimate",
    "last_particle_estimate", "mc_estimate", "seq_estimate", "Layer", "Network", "forward",
    "init_network", "load_model", "predict", "save_model", "PerturbSpec", "RngKey",
]
