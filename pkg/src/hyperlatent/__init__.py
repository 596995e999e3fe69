"""Order-adjusted latent embedding model for non-uniform hypergraphs with multiplicity."""

from .estimator import FitConfig, FitResult, fit, fit_f1
from .hypergraph import Hypergraph, audit, incidence, parse_hyperlinks
from .model import ModelParams, UncenteredParams

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "FitResult",
    "Hypergraph",
    "ModelParams",
    "UncenteredParams",
    "audit",
    "fit",
    "fit_f1",
    "incidence",
    "parse_hyperlinks",
]
