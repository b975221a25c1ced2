import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_hermite, factorial

from cvtomo.bures import build_density, sample_prior
from cvtomo.fock import Coherent, Fock, apply_loss, make_state, phase_rotate
from cvtomo.measurement import (
    MeasurementConfig,
    QuadratureDataset,
    hermite_weighted,
    heterodyne_pdf,
    homodyne_pdf,
    log_likelihood,
    loss_pack_matrix,
    pack_hermitian,
    packed_projectors,
    unpack_hermitian,
    dataset_amplitudes,
)

GL_NODES, GL_WEIGHTS = leggauss(1500)


def quad(vals, halfwidth):
    """Gauss-Legendre integral over [-halfwidth, halfwidth]."""
    return float((vals * GL_WEIGHTS).sum() * halfwidth)


def test_hermite_weighted_values():
    assert hermite_weighted(0, 0.0) == pytest.approx(np.pi**-0.25, abs=1e-12)
    assert hermite_weighted(1, 0.0) == 0.0


@pytest.mark.parametrize("n", [0, 5, 20])
def test_hermite_weighted_orthonormal(n):
    xs = GL_NODES * 12.0
    vals = hermite_weighted(n, xs)
    assert quad(vals * vals, 12.0) == pytest.approx(1.0, abs=1e-6)


def test_hermite_weighted_finite_far_out():
    vals = [hermite_weighted(n, 40.0) for n in (0, 32, 64)]
    assert np.isfinite(vals).all()


def brute_homodyne(x, theta, rho):
    """Literal double sum with raw Hermite polynomials and factorials."""
    nc = rho.shape[0] - 1
    tot = 0j
    for m in range(nc + 1):
        for n in range(nc + 1):
            tot += (
                rho[m, n]
                * np.exp(1j * (n - m) * theta)
                / np.sqrt(np.pi * factorial(m) * factorial(n) * 2.0 ** (m + n))
                * np.exp(-(x**2))
                * eval_hermite(m, x)
                * eval_hermite(n, x)
            )
    return tot.real


def brute_heterodyne(x, p, theta, rho):
    nc = rho.shape[0] - 1
    tot = 0j
    for m in range(nc + 1):
        for n in range(nc + 1):
            tot += (
                rho[m, n]
                * np.exp(1j * (n - m) * theta)
                / (np.pi * np.sqrt(factorial(m) * factorial(n)))
                * np.exp(-(x**2 + p**2))
                * (x - 1j * p) ** m
                * (x + 1j * p) ** n
            )
    return tot.real


def test_pdfs_match_brute_force(rng):
    rho = build_density(sample_prior(rng, 6))
    for x in (-1.3, 0.0, 2.1):
        assert homodyne_pdf(x, 0.7, rho) == pytest.approx(brute_homodyne(x, 0.7, rho), abs=1e-12)
        assert heterodyne_pdf(x, 0.4, 1.2, rho) == pytest.approx(
            brute_heterodyne(x, 0.4, 1.2, rho), abs=1e-12
        )


def test_homodyne_known_values():
    vac = make_state(Coherent(0), 8)
    assert homodyne_pdf(0.0, 0.3, vac) == pytest.approx(1.0 / np.sqrt(np.pi), abs=1e-12)
    assert homodyne_pdf(0.0, 0.0, make_state(Fock(1), 8)) == pytest.approx(0.0, abs=1e-15)


def test_homodyne_coherent_mean():
    rho = make_state(Coherent(1.0), 24)
    xs = GL_NODES * 8.0
    mean = quad(xs * homodyne_pdf(xs, 0.0, rho), 8.0)
    assert mean == pytest.approx(np.sqrt(2.0), abs=1e-3)


def test_heterodyne_known_values():
    vac = make_state(Coherent(0), 8)
    assert heterodyne_pdf(0.0, 0.0, 0.9, vac) == pytest.approx(1.0 / np.pi, abs=1e-12)


def test_heterodyne_coherent_closed_form():
    alpha = 0.7 + 0.2j
    rho = make_state(Coherent(alpha), 25)
    for x in (-1.0, 0.0, 1.0):
        for p in (-1.0, 0.2, 1.0):
            expect = np.exp(-((x - alpha.real) ** 2) - (p - alpha.imag) ** 2) / np.pi
            assert heterodyne_pdf(x, p, 0.0, rho) == pytest.approx(expect, abs=1e-8)


def test_homodyne_normalization(bures_states_nc10):
    xs = GL_NODES * 10.0
    for rho in bures_states_nc10[:6]:
        for theta in (0.0, 1.1, np.pi):
            assert quad(homodyne_pdf(xs, theta, rho), 10.0) == pytest.approx(1.0, abs=1e-6)


def test_heterodyne_normalization(bures_states_nc10):
    g = np.linspace(-7, 7, 281)
    X, P = np.meshgrid(g, g, indexing="ij")
    for rho in bures_states_nc10[:3]:
        total = heterodyne_pdf(X, P, 0.4, rho).sum() * (g[1] - g[0]) ** 2
        assert total == pytest.approx(1.0, abs=1e-3)


def test_phase_covariance(bures_states_nc10):
    rho = bures_states_nc10[0]
    xs = np.linspace(-4, 4, 41)
    delta = 0.83
    lhs = homodyne_pdf(xs, 0.6 + delta, rho)
    rhs = homodyne_pdf(xs, 0.6, phase_rotate(rho, delta))
    assert np.abs(lhs - rhs).max() < 1e-10


def test_diagonal_state_phase_independent():
    rho = make_state(Fock(2), 8)
    xs = np.linspace(-3, 3, 21)
    base = homodyne_pdf(xs, 0.0, rho)
    for theta in (0.9, 2.4):
        assert np.abs(homodyne_pdf(xs, theta, rho) - base).max() < 1e-12
    f2a = heterodyne_pdf(xs, xs[::-1], 0.0, rho)
    f2b = heterodyne_pdf(xs, xs[::-1], 1.7, rho)
    assert np.abs(f2a - f2b).max() < 1e-12


def test_pdf_rejects_non_hermitian():
    rho = make_state(Coherent(0.3), 6).astype(complex)
    rho[0, 2] += 0.1j  # anti-Hermitian defect leaves an imaginary residue
    with pytest.raises(ValueError, match="invalid density"):
        homodyne_pdf(0.5, 0.0, rho)


def test_log_likelihood_basics():
    vac = make_state(Coherent(0), 8)
    cfg = MeasurementConfig(eta=1.0, n_c=8)
    empty = QuadratureDataset("homodyne", np.array([]), np.array([]))
    assert log_likelihood(empty, vac, cfg) == 0.0
    one = QuadratureDataset("homodyne", np.array([0.0]), np.array([0.0]))
    assert log_likelihood(one, vac, cfg) == pytest.approx(np.log(1.0 / np.sqrt(np.pi)), abs=1e-12)


def test_log_likelihood_concatenation(rng):
    rho = build_density(sample_prior(rng, 9))
    cfg = MeasurementConfig(eta=1.0, n_c=8)
    d1 = QuadratureDataset("homodyne", rng.random(7), rng.standard_normal(7))
    d2 = QuadratureDataset("homodyne", rng.random(5), rng.standard_normal(5))
    lhs = log_likelihood(d1.concat(d2), rho, cfg)
    rhs = log_likelihood(d1, rho, cfg) + log_likelihood(d2, rho, cfg)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_log_likelihood_zero_sentinel():
    # a single-photon state has exactly zero density at x = 0
    data = QuadratureDataset("homodyne", np.array([0.0]), np.array([0.0]))
    ll = log_likelihood(data, make_state(Fock(1), 6), MeasurementConfig(eta=1.0, n_c=6))
    assert ll == float("-inf")


def test_log_likelihood_loss_absorption(rng, bures_states_nc10):
    # applying loss to the state then evaluating at eta=1 is the same model
    rho = bures_states_nc10[4]
    data = QuadratureDataset(
        "heterodyne", rng.random(40) * 6, rng.standard_normal(40), rng.standard_normal(40)
    )
    lhs = log_likelihood(data, rho, MeasurementConfig(eta=0.6, n_c=10))
    rhs = log_likelihood(data, apply_loss(rho, 0.6), MeasurementConfig(eta=1.0, n_c=10))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_log_likelihood_cutoff_mismatch():
    data = QuadratureDataset("homodyne", np.array([0.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        log_likelihood(data, make_state(Fock(0), 5), MeasurementConfig(eta=1.0, n_c=8))


def test_dataset_validation():
    with pytest.raises(ValueError):
        QuadratureDataset("homodyne", np.array([0.0]), np.array([0.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        QuadratureDataset("heterodyne", np.array([0.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        QuadratureDataset("homodyne", np.array([np.nan]), np.array([0.0]))
    with pytest.raises(ValueError):
        QuadratureDataset("sideways", np.array([0.0]), np.array([0.0]))


def test_dataset_csv_roundtrip(tmp_path, rng):
    data = QuadratureDataset(
        "heterodyne",
        rng.random(9) * 2 * np.pi,
        rng.standard_normal(9),
        rng.standard_normal(9),
        {"source_id": "unit-test", "lo_power_mw": 12.0},
    )
    path = tmp_path / "ds.csv"
    data.save(path)
    assert path.read_text().splitlines()[0] == "theta,x,p"
    back = QuadratureDataset.load(path)
    assert back.scheme == "heterodyne"
    assert np.array_equal(back.theta, data.theta)
    assert np.array_equal(back.x, data.x)
    assert np.array_equal(back.p, data.p)
    assert back.metadata["lo_power_mw"] == 12.0


def test_dataset_drop_p(rng):
    data = QuadratureDataset("heterodyne", rng.random(5), rng.random(5), rng.random(5))
    hom = data.drop_p()
    assert hom.scheme == "homodyne"
    assert hom.p is None
    assert np.array_equal(hom.x, data.x)


def test_packed_projectors_match_quadratic_form(rng):
    rho = build_density(sample_prior(rng, 8))
    data = QuadratureDataset(
        "heterodyne", rng.random(50) * 6, rng.standard_normal(50), rng.standard_normal(50)
    )
    A = dataset_amplitudes(data, 7)
    q_direct = np.einsum("kn,kn->k", A.conj() @ rho, A).real
    q_packed = packed_projectors(A) @ pack_hermitian(rho)
    assert np.abs(q_direct - q_packed).max() < 1e-14
    assert np.abs(unpack_hermitian(pack_hermitian(rho), 8) - rho).max() == 0.0


def test_loss_pack_matrix_matches_channel(rng):
    rho = build_density(sample_prior(rng, 6))
    L = loss_pack_matrix(6, 0.853)
    lhs = L @ pack_hermitian(rho)
    rhs = pack_hermitian(apply_loss(rho, 0.853))
    assert np.abs(lhs - rhs).max() < 1e-14
