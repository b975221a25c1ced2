import numpy as np
import pytest

from cvtomo.bures import build_density, sample_prior
from cvtomo.fock import Coherent
from cvtomo.simulate import SimConfig, simulate_dataset


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def bures_states_nc10():
    """20 random density matrices at photon cutoff 10."""
    r = np.random.default_rng(77)
    return [build_density(sample_prior(r, 11)) for _ in range(20)]


@pytest.fixture(scope="session")
def coherent_het_sim():
    """Shared heterodyne dataset from a displaced state, 30k records.

    Ground truth amplitude 1.14 - 0.45i; cutoff 8; explicit halfwidth keeps
    the grid small while the runtime mass check guards coverage.
    """
    cfg = SimConfig(
        spec=Coherent(1.14 - 0.45j),
        scheme="heterodyne",
        records=30_000,
        n_c=8,
        grid_halfwidth=7.5,
        seed=424242,
    )
    return simulate_dataset(cfg), cfg
