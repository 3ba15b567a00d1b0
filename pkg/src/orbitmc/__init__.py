"""Orbital MCMC: samplers built from iterated deterministic maps.

Transition kernels accept whole orbits of an invertible map at once, each
point weighted by its target density times the accumulated Jacobian, instead
of filtering single proposals.  The package ships the kernels, the map
families they run on, a benchmark target zoo, adaptation and diagnostics
utilities, a brute-force discrete verifier for the underlying invariance and
reversibility claims, and a CLI driving all of it.
"""

from .backend import HAVE_COMPILED, backend_name, set_backend
from .dynamics import (
    PhaseState,
    conformal_leapfrog,
    exact_rotation,
    iterate,
    leapfrog,
    periodic_wrap,
    phase,
    weyl_map,
)
from .targets import (
    ItemResponseDataset,
    LogisticDataset,
    TargetModel,
    generate_item_response,
    load_logistic_csv,
    make_banana,
    make_ill_conditioned_gaussian,
    make_logistic_regression,
    make_synthetic_logistic,
    make_target,
)

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED",
    "ItemResponseDataset",
    "LogisticDataset",
    "PhaseState",
    "TargetModel",
    "backend_name",
    "conformal_leapfrog",
    "exact_rotation",
    "generate_item_response",
    "iterate",
    "leapfrog",
    "load_logistic_csv",
    "make_banana",
    "make_ill_conditioned_gaussian",
    "make_logistic_regression",
    "make_synthetic_logistic",
    "make_target",
    "periodic_wrap",
    "phase",
    "set_backend",
    "weyl_map",
]
