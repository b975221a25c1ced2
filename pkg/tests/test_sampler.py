import numpy as np
import pytest

from cvtomo.bures import BuresParams, build_density, sample_prior
from cvtomo.fock import Coherent, fidelity, make_state, validate_density
from cvtomo.measurement import MeasurementConfig, QuadratureDataset
from cvtomo.sampler import (
    PosteriorEnsemble,
    SamplerConfig,
    bayesian_mean,
    convergence_report,
    estimate_functional,
    pcn_step,
    pool_ensembles,
    run_chain,
    run_pcn,
    write_diagnostics_csv,
)
from cvtomo.simulate import SimConfig, simulate_dataset


@pytest.fixture(scope="module")
def small_het_data():
    cfg = SimConfig(
        spec=Coherent(1.2),
        scheme="heterodyne",
        records=400,
        n_c=5,
        grid_halfwidth=7.0,
        seed=5150,
    )
    return simulate_dataset(cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(samples=0, thin=1)
    with pytest.raises(ValueError):
        SamplerConfig(samples=1, thin=1, beta=1.5)
    with pytest.raises(ValueError):
        SamplerConfig(samples=1, thin=1, beta="wild")
    cfg = SamplerConfig(samples=16, thin=4)
    assert cfg.resolved_burn_in == 8
    assert cfg.total_steps == 72


def test_pcn_step_beta_to_zero():
    rng = np.random.default_rng(0)
    cur = sample_prior(rng, 3)
    new, ll, accepted = pcn_step(cur, 0.0, 1e-9, rng, lambda p: 0.0)
    assert np.abs(new.z - cur.z).max() < 1e-12 * np.abs(cur.z).max() * 10 + 1e-8
    assert accepted


def test_pcn_step_constant_likelihood_always_accepts():
    rng = np.random.default_rng(1)
    cur = sample_prior(rng, 3)
    ll = 0.0
    n_acc = 0
    for _ in range(300):
        cur, ll, acc = pcn_step(cur, ll, 0.4, rng, lambda p: 0.0)
        n_acc += acc
    assert n_acc == 300


def test_pcn_step_nan_raises():
    rng = np.random.default_rng(2)
    cur = sample_prior(rng, 2)
    with pytest.raises(ValueError, match="NaN"):
        pcn_step(cur, 0.0, 0.3, rng, lambda p: float("nan"))


def test_constant_likelihood_chain_reproduces_prior_d2():
    # 1e5 steps, no data: the retained states must sample the prior
    cfg = SamplerConfig(samples=90_000, thin=1, burn_in=10_000, beta="adaptive", seed=31)
    ens = run_pcn(2, cfg)
    mean = ens.rhos.mean(axis=0)
    assert np.abs(mean - np.eye(2) / 2).max() < 0.02


def test_chain_bookkeeping_matches_reference_replay():
    """Retention arithmetic checked against a pure-numpy replay of the
    chunked RNG consumption (constant likelihood, so every step accepts)."""
    dim = 3
    dsq = dim * dim
    cfg = SamplerConfig(samples=4, thin=2, burn_in=0, beta=0.3, seed=99)
    ens = run_pcn(dim, cfg)
    assert len(ens) == 4
    assert ens.acceptance_rate == 1.0

    rng = np.random.default_rng(99)
    z = sample_prior(rng, dim).z.copy()
    normals = rng.standard_normal((8, 4 * dsq))
    rng.random(8)
    c1 = np.sqrt(1.0 - 0.3**2)
    kept = []
    for t in range(8):
        xi = normals[t, 0::2] + 1j * normals[t, 1::2]
        z = c1 * z + 0.3 * xi
        if (t + 1) % 2 == 0:
            kept.append(z.copy())
    assert np.allclose(ens.params, np.array(kept), atol=1e-14, rtol=0)


def test_determinism_bitwise(small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    sc = SamplerConfig(samples=64, thin=4, burn_in=256, seed=12)
    a = run_chain(small_het_data, mc, sc)
    b = run_chain(small_het_data, mc, sc)
    assert np.array_equal(a.params, b.params)
    assert np.array_equal(a.log_likelihoods, b.log_likelihoods)
    assert a.acceptance_rate == b.acceptance_rate


def test_checkpoint_resume_identical(tmp_path, small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    sc = SamplerConfig(samples=64, thin=16, burn_in=512, seed=5, checkpoint_every=1024)
    plain = run_chain(small_het_data, mc, sc)
    cp = tmp_path / "cp.json"
    first = run_chain(small_het_data, mc, sc, checkpoint_path=cp)
    assert cp.exists()
    resumed = run_chain(small_het_data, mc, sc, checkpoint_path=cp)
    for ens in (first, resumed):
        assert np.array_equal(plain.params, ens.params)
        assert np.array_equal(plain.log_likelihoods, ens.log_likelihoods)


def test_checkpoint_config_mismatch_is_ignored(tmp_path, small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    sc = SamplerConfig(samples=16, thin=4, burn_in=128, seed=5, checkpoint_every=64)
    cp = tmp_path / "cp.json"
    run_chain(small_het_data, mc, sc, checkpoint_path=cp)
    other = SamplerConfig(samples=16, thin=4, burn_in=128, seed=6, checkpoint_every=64)
    fresh = run_chain(small_het_data, mc, other, checkpoint_path=cp)
    ref = run_chain(small_het_data, mc, other)
    assert np.array_equal(fresh.params, ref.params)


def test_accept_rate_monotone_in_beta(small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    rates = []
    for beta in (0.01, 0.1, 0.3, 0.9):
        acc = []
        for seed in (1, 2, 3):
            sc = SamplerConfig(samples=500, thin=1, burn_in=500, beta=beta, seed=seed)
            acc.append(run_chain(small_het_data, mc, sc).acceptance_rate)
        rates.append(np.mean(acc))
    assert all(rates[i] >= rates[i + 1] for i in range(len(rates) - 1))


def test_prior_recovery_against_direct_sampling():
    dim = 3
    cfg = SamplerConfig(samples=4096, thin=4, burn_in=4096, beta="adaptive", seed=21)
    ens = run_pcn(dim, cfg)
    chain_mean = ens.rhos.mean(axis=0)
    rng = np.random.default_rng(210)
    direct = np.zeros((dim, dim), dtype=complex)
    n = 4096
    for _ in range(n):
        direct += build_density(sample_prior(rng, dim))
    direct /= n
    # 3x the Monte Carlo standard error of the direct estimate, per element
    draws = np.array([np.abs(build_density(sample_prior(rng, dim)))[0, 0] for _ in range(500)])
    se = draws.std() / np.sqrt(n)
    assert np.abs(chain_mean - direct).max() < max(9.0 * se, 0.02)


def test_bayesian_mean_small_cases():
    rng = np.random.default_rng(4)
    p1, p2 = sample_prior(rng, 4), sample_prior(rng, 4)
    ens = PosteriorEnsemble(
        dim=4,
        params=np.array([p1.z, p2.z]),
        log_likelihoods=np.zeros(2),
        accept_counts=np.array([1, 2]),
        acceptance_rate=1.0,
        beta_final=0.1,
    )
    mean = bayesian_mean(ens)
    expect = 0.5 * (build_density(p1) + build_density(p2))
    assert np.abs(mean - expect).max() < 1e-15
    validate_density(mean)
    solo = PosteriorEnsemble(
        dim=4,
        params=np.array([p1.z]),
        log_likelihoods=np.zeros(1),
        accept_counts=np.array([0]),
        acceptance_rate=0.0,
        beta_final=0.1,
    )
    assert np.abs(bayesian_mean(solo) - build_density(p1)).max() == 0.0


def test_estimate_functional():
    rng = np.random.default_rng(5)
    params = np.array([sample_prior(rng, 3).z for _ in range(64)])
    ens = PosteriorEnsemble(
        dim=3,
        params=params,
        log_likelihoods=np.zeros(64),
        accept_counts=np.arange(64),
        acceptance_rate=0.5,
        beta_final=0.2,
    )
    const = estimate_functional(ens, lambda r: 2.5)
    assert const.mean == 2.5 and const.std == 0.0 and const.p16 == const.p84 == 2.5
    tr = estimate_functional(ens, lambda r: float(np.trace(r).real))
    assert tr.mean == pytest.approx(1.0, abs=1e-12)
    assert tr.std <= 1e-12
    purity = estimate_functional(ens, lambda r: float(np.trace(r @ r).real))
    vals = np.array([np.trace(r @ r).real for r in ens.rhos])
    assert purity.p16 == pytest.approx(np.percentile(vals, 16.0))
    assert purity.p84 == pytest.approx(np.percentile(vals, 84.0))


def test_convergence_report_pass_and_fail(small_het_data):
    rng = np.random.default_rng(6)
    params = np.array([sample_prior(rng, 3).z for _ in range(16)])
    ens = PosteriorEnsemble(
        dim=3,
        params=params,
        log_likelihoods=np.zeros(16),
        accept_counts=np.arange(16),
        acceptance_rate=0.5,
        beta_final=0.2,
        config={"burn_in": 0, "thin": 1},
    )
    rep = convergence_report(ens, functional=lambda r: 1.0)
    assert rep.passed and rep.half_means == (1.0, 1.0)
    # deliberately short chain on real data: halves disagree
    mc = MeasurementConfig(eta=1.0, n_c=5)
    short = run_chain(small_het_data, mc, SamplerConfig(samples=8, thin=1, burn_in=0, seed=3))
    truth = make_state(Coherent(1.2), 5)
    rep2 = convergence_report(short, reference=truth)
    assert not rep2.passed


def test_diagnostics_csv(tmp_path):
    rng = np.random.default_rng(7)
    params = np.array([sample_prior(rng, 2).z for _ in range(8)])
    ens = PosteriorEnsemble(
        dim=2,
        params=params,
        log_likelihoods=np.linspace(-5, -1, 8),
        accept_counts=np.arange(1, 9),
        acceptance_rate=0.5,
        beta_final=0.2,
        config={"burn_in": 16, "thin": 4},
    )
    rep = convergence_report(ens)
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(ens, rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,acceptance,ll,running_mean,running_std"
    assert len(lines) == 9
    first = lines[1].split(",")
    assert int(first[0]) == 20  # burn_in + thin


def test_ensemble_jsonl_roundtrip(tmp_path, small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    ens = run_chain(small_het_data, mc, SamplerConfig(samples=16, thin=2, burn_in=64, seed=8))
    path = tmp_path / "ens.jsonl"
    ens.save_jsonl(path)
    back = PosteriorEnsemble.load_jsonl(path)
    assert np.array_equal(back.params, ens.params)
    assert np.array_equal(back.log_likelihoods, ens.log_likelihoods)
    assert back.config == ens.config
    assert back.acceptance_rate == ens.acceptance_rate


def test_pool_ensembles_ordered(small_het_data):
    mc = MeasurementConfig(eta=1.0, n_c=5)
    a = run_chain(small_het_data, mc, SamplerConfig(samples=8, thin=2, burn_in=32, seed=1))
    b = run_chain(small_het_data, mc, SamplerConfig(samples=8, thin=2, burn_in=32, seed=2))
    pooled = pool_ensembles([a, b])
    assert len(pooled) == 16
    assert np.array_equal(pooled.params[:8], a.params)
    assert np.array_equal(pooled.params[8:], b.params)


def test_single_record_posterior_is_nearly_prior():
    # one heterodyne record in a 21-dimensional space: the Bayesian mean
    # stays within Monte Carlo error of the maximally mixed prior mean
    data = QuadratureDataset(
        "heterodyne", np.array([0.4]), np.array([0.3]), np.array([-0.2])
    )
    sc = SamplerConfig(samples=1024, thin=16, burn_in=2048, seed=77)
    ens = run_chain(data, MeasurementConfig(eta=1.0, n_c=20), sc)
    rho_b = bayesian_mean(ens)
    assert np.abs(rho_b - np.eye(21) / 21.0).max() < 0.01
