"""Bayesian tomography of single-mode optical states from quadrature data.

Submodules: ``fock`` (state algebra), ``measurement`` (outcome densities and
likelihoods), ``bures`` (prior construction), ``sampler`` (pCN posterior
sampling), ``simulate`` (synthetic datasets), ``calibrate`` (raw-trace
ingest), ``analyze`` (reports), ``plots`` (figure rendering), ``cli``.
"""

__version__ = "0.1.0"

from .bures import BuresParams, build_density, haar_unitary, sample_prior
from .fock import (
    Cat,
    Coherent,
    Fock,
    SqueezedVacuum,
    Thermal,
    WignerGrid,
    apply_loss,
    fidelity,
    make_state,
    mean_photon,
    truncation_error,
    wigner,
)
from .measurement import (
    MeasurementConfig,
    QuadratureDataset,
    heterodyne_pdf,
    homodyne_pdf,
    log_likelihood,
)
from .sampler import (
    PosteriorEnsemble,
    SamplerConfig,
    bayesian_mean,
    convergence_report,
    estimate_functional,
    run_chain,
)
from .simulate import SimConfig, scaling_experiment, simulate_dataset

__all__ = [
    "BuresParams",
    "build_density",
    "haar_unitary",
    "sample_prior",
    "Cat",
    "Coherent",
    "Fock",
    "SqueezedVacuum",
    "Thermal",
    "WignerGrid",
    "apply_loss",
    "fidelity",
    "make_state",
    "mean_photon",
    "truncation_error",
    "wigner",
    "MeasurementConfig",
    "QuadratureDataset",
    "heterodyne_pdf",
    "homodyne_pdf",
    "log_likelihood",
    "PosteriorEnsemble",
    "SamplerConfig",
    "bayesian_mean",
    "convergence_report",
    "estimate_functional",
    "run_chain",
    "SimConfig",
    "scaling_experiment",
    "simulate_dataset",
]
