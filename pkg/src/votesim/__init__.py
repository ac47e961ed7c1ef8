"""votesim: deterministic simulation and comparison of online-voting
protocols, plus an automatic classifier for their degree of distribution."""

__version__ = "0.1.0"

from .simnet import FaultModel, Simulator, Trace
from .ballot import DpolParams
from .dpol import run_dpol
from .spp import SppParams, run_spp
from .chainvote import ChainParams, run_chainvote
from .baselines import HeliosParams, run_helios_like, run_mesh_share
from .analysis import TaxonomyRow, classify, fit_complexity, privacy_probe

__all__ = [
    "ChainParams",
    "DpolParams",
    "FaultModel",
    "HeliosParams",
    "Simulator",
    "SppParams",
    "TaxonomyRow",
    "Trace",
    "classify",
    "fit_complexity",
    "privacy_probe",
    "run_chainvote",
    "run_dpol",
    "run_helios_like",
    "run_mesh_share",
    "run_spp",
    "__version__",
]
