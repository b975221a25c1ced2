"""Preconditioned Crank-Nicolson sampling of the density-matrix posterior.

The proposal is the prior-reversible Gaussian autoregression
z' = sqrt(1 - beta^2) z + beta xi with xi drawn from the prior, so the
acceptance probability min(1, exp(LL' - LL)) depends on the likelihood only.
Retention: after ``burn_in`` steps, every ``thin``-th state is kept until
``samples`` states have been collected, so a chain has
burn_in + samples * thin steps in total.

beta can be a fixed number or "adaptive": adapted during burn-in toward a
20-30% acceptance rate in windows of 2048 steps, then frozen, which keeps
detailed balance exact for every retained sample.

Chains are bitwise reproducible: all randomness comes from one PCG64 stream
per chain, consumed in a fixed chunked order, and the compiled kernel is
single-threaded. Checkpoints written every ``checkpoint_every`` steps carry
the full chain state (including the RNG), so a resumed run finishes with an
ensemble identical to an uninterrupted one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _pcn_kernel as _kernel
from .bures import BuresParams, build_density, sample_prior
from .fock import fidelity
from .measurement import (
    MeasurementConfig,
    QuadratureDataset,
    dataset_amplitudes,
    loss_pack_matrix,
    packed_projectors,
)

__all__ = [
    "SamplerConfig",
    "PosteriorEnsemble",
    "pcn_step",
    "run_pcn",
    "run_chain",
    "bayesian_mean",
    "estimate_functional",
    "FunctionalEstimate",
    "convergence_report",
    "ConvergenceReport",
    "write_diagnostics_csv",
]

BURN_CHUNK = 2048
ADAPT_LOW, ADAPT_HIGH = 0.20, 0.30
BETA_MIN, BETA_MAX = 1e-4, 1.0


@dataclass(frozen=True)
class SamplerConfig:
    """Chain geometry and proposal step size."""

    samples: int
    thin: int
    burn_in: int | None = None
    beta: float | str = "adaptive"
    seed: int = 0
    checkpoint_every: int = 2**16

    def __post_init__(self):
        if self.samples < 1 or self.thin < 1:
            raise ValueError("samples and thin must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if isinstance(self.beta, str):
            if self.beta != "adaptive":
                raise ValueError("beta must be a number in (0, 1] or 'adaptive'")
        elif not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")

    @property
    def resolved_burn_in(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return self.samples * self.thin // 8

    @property
    def total_steps(self) -> int:
        return self.resolved_burn_in + self.samples * self.thin

    def echo(self) -> dict:
        # checkpoint_every is part of the reproducibility envelope: it sets
        # the RNG chunk plan, so two runs must agree on it to be comparable
        return {
            "samples": self.samples,
            "thin": self.thin,
            "burn_in": self.resolved_burn_in,
            "beta": self.beta,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
        }


@dataclass
class PosteriorEnsemble:
    """Thinned chain states with their log-likelihoods and diagnostics."""

    dim: int
    params: np.ndarray  # (R, 2 dim^2) complex
    log_likelihoods: np.ndarray  # (R,)
    accept_counts: np.ndarray  # (R,) accepted post-burn-in proposals at retention
    acceptance_rate: float
    beta_final: float
    config: dict = field(default_factory=dict)
    _rhos: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.params.shape[0]

    @property
    def rhos(self) -> np.ndarray:
        """Density matrices of the retained states, built on first use."""
        if self._rhos is None:
            out = np.empty((len(self), self.dim, self.dim), dtype=complex)
            for r in range(len(self)):
                out[r] = build_density(BuresParams(self.params[r], self.dim))
            self._rhos = out
        return self._rhos

    def sample_params(self, r: int) -> BuresParams:
        return BuresParams(self.params[r], self.dim)

    def save_jsonl(self, path) -> None:
        """One meta line, then one record per sample (parameters + ll)."""
        with open(path, "w") as fh:
            meta = {
                "kind": "cvtomo-ensemble",
                "dim": self.dim,
                "samples": len(self),
                "acceptance_rate": self.acceptance_rate,
                "beta_final": self.beta_final,
                "config": self.config,
            }
            fh.write(json.dumps(meta) + "\n")
            for r in range(len(self)):
                rec = {
                    "z_re": [float(v) for v in self.params[r].real],
                    "z_im": [float(v) for v in self.params[r].imag],
                    "ll": float(self.log_likelihoods[r]),
                    "accepts": int(self.accept_counts[r]),
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "PosteriorEnsemble":
        with open(path) as fh:
            meta = json.loads(fh.readline())
            if meta.get("kind") != "cvtomo-ensemble":
                raise ValueError(f"{path} is not an ensemble file")
            recs = [json.loads(line) for line in fh if line.strip()]
        dim = int(meta["dim"])
        params = np.array(
            [np.asarray(r["z_re"]) + 1j * np.asarray(r["z_im"]) for r in recs], dtype=complex
        )
        return cls(
            dim=dim,
            params=params,
            log_likelihoods=np.array([r["ll"] for r in recs]),
            accept_counts=np.array([r["accepts"] for r in recs], dtype=np.int64),
            acceptance_rate=float(meta["acceptance_rate"]),
            beta_final=float(meta["beta_final"]),
            config=meta.get("config", {}),
        )


def pcn_step(
    current: BuresParams,
    current_ll: float,
    beta: float,
    rng: np.random.Generator,
    ll_fn: Callable[[BuresParams], float],
) -> tuple[BuresParams, float, bool]:
    """One reference pCN update; returns (state, ll, accepted).

    Consumes one prior draw and one uniform from ``rng`` regardless of the
    outcome, so parallel bookkeeping against the compiled kernel stays
    stream-aligned.
    """
    xi = sample_prior(rng, current.dim)
    prop = BuresParams(np.sqrt(1.0 - beta**2) * current.z + beta * xi.z, current.dim)
    ll_prop = float(ll_fn(prop))
    if np.isnan(ll_prop):
        raise ValueError("log-likelihood returned NaN")
    u = rng.random()
    if np.log(u) < ll_prop - current_ll:
        return prop, ll_prop, True
    return current, current_ll, False


def _chunk_target(done: int, burn_in: int, total: int, chunk_main: int, cp_every: int) -> int:
    """Next chunk boundary; a pure function of progress so resumed runs
    replay the identical chunk plan."""
    if done < burn_in:
        target = min(burn_in, (done // BURN_CHUNK + 1) * BURN_CHUNK)
    else:
        rel = done - burn_in
        target = min(total, burn_in + (rel // chunk_main + 1) * chunk_main)
    return min(target, (done // cp_every + 1) * cp_every)


def _dataset_fingerprint(data: QuadratureDataset | None) -> str:
    h = hashlib.sha256()
    if data is not None:
        h.update(data.scheme.encode())
        h.update(np.ascontiguousarray(data.theta).tobytes())
        h.update(np.ascontiguousarray(data.x).tobytes())
        if data.p is not None:
            h.update(np.ascontiguousarray(data.p).tobytes())
    return h.hexdigest()


def run_pcn(
    dim: int,
    s_cfg: SamplerConfig,
    P32: np.ndarray | None = None,
    L64: np.ndarray | None = None,
    config_echo: dict | None = None,
    checkpoint_path=None,
) -> PosteriorEnsemble:
    """Run one chain against packed likelihood data (empty data = prior sampling)."""
    dsq = dim * dim
    if P32 is None:
        P32 = np.zeros((0, dsq), dtype=np.float32)
    use_loss = L64 is not None
    if L64 is None:
        L64 = np.zeros((1, 1), dtype=np.float64)
    burn_in = s_cfg.resolved_burn_in
    total = s_cfg.total_steps
    n_keep = s_cfg.samples
    thin = s_cfg.thin
    chunk_main = int(min(16384, max(1024, 4_000_000 // dsq)))
    echo = dict(config_echo or {})
    echo.update(s_cfg.echo())
    echo["dim"] = dim
    echo["thinning_convention"] = "post-burn-in"

    out_z = np.empty((n_keep, 2 * dsq), dtype=np.complex128)
    out_ll = np.empty(n_keep, dtype=np.float64)
    out_acc = np.empty(n_keep, dtype=np.int64)

    state = None
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        state = _load_checkpoint(checkpoint_path, echo)
    if state is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = state["rng_state"]
        z = state["z"]
        ll = state["ll"]
        beta = state["beta"]
        done = state["steps_done"]
        kept = state["kept"]
        acc_post = state["acc_post"]
        out_z[:kept] = state["retained_z"]
        out_ll[:kept] = state["retained_ll"]
        out_acc[:kept] = state["retained_acc"]
    else:
        rng = np.random.default_rng(s_cfg.seed)
        z = sample_prior(rng, dim).z.copy()
        ll = float(_kernel.initial_ll(z, dim, P32, L64, use_loss))
        beta = 0.1 if s_cfg.beta == "adaptive" else float(s_cfg.beta)
        done = 0
        kept = 0
        acc_post = 0

    while done < total:
        target = _chunk_target(done, burn_in, total, chunk_main, s_cfg.checkpoint_every)
        n = target - done
        normals = rng.standard_normal((n, 4 * dsq))
        unifs = rng.random(n)
        ll, kept, acc_post, acc_chunk = _kernel.run_chunk(
            z, ll, beta, normals, unifs, P32, L64, use_loss, dim,
            done, burn_in, thin, out_z, out_ll, out_acc, kept, acc_post,
        )
        done = target
        if s_cfg.beta == "adaptive" and done <= burn_in:
            rate = acc_chunk / n
            if rate < ADAPT_LOW:
                beta = max(BETA_MIN, beta * 0.8)
            elif rate > ADAPT_HIGH:
                beta = min(BETA_MAX, beta * 1.25)
        if checkpoint_path is not None and done % s_cfg.checkpoint_every == 0 and done < total:
            _write_checkpoint(
                checkpoint_path, echo, rng, z, ll, beta, done, kept, acc_post,
                out_z, out_ll, out_acc,
            )

    post_steps = total - burn_in
    return PosteriorEnsemble(
        dim=dim,
        params=out_z,
        log_likelihoods=out_ll,
        accept_counts=out_acc,
        acceptance_rate=acc_post / post_steps if post_steps else 0.0,
        beta_final=beta,
        config=echo,
    )


def _write_checkpoint(path, echo, rng, z, ll, beta, done, kept, acc_post, out_z, out_ll, out_acc):
    obj = {
        "kind": "cvtomo-checkpoint",
        "config": echo,
        "steps_done": int(done),
        "z_re": [float(v) for v in z.real],
        "z_im": [float(v) for v in z.imag],
        "ll": float(ll),
        "beta": float(beta),
        "kept": int(kept),
        "acc_post": int(acc_post),
        "rng_state": rng.bit_generator.state,
        "retained_z_re": [[float(v) for v in row.real] for row in out_z[:kept]],
        "retained_z_im": [[float(v) for v in row.imag] for row in out_z[:kept]],
        "retained_ll": [float(v) for v in out_ll[:kept]],
        "retained_acc": [int(v) for v in out_acc[:kept]],
    }
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh)
    tmp.replace(path)


def _load_checkpoint(path, echo) -> dict | None:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("kind") != "cvtomo-checkpoint" or obj.get("config") != echo:
        return None
    kept = int(obj["kept"])
    npar = len(obj["z_re"])
    retained = np.asarray(obj["retained_z_re"], dtype=float).reshape(kept, npar) + 1j * np.asarray(
        obj["retained_z_im"], dtype=float
    ).reshape(kept, npar)
    return {
        "rng_state": obj["rng_state"],
        "z": np.asarray(obj["z_re"], dtype=float) + 1j * np.asarray(obj["z_im"], dtype=float),
        "ll": float(obj["ll"]),
        "beta": float(obj["beta"]),
        "steps_done": int(obj["steps_done"]),
        "kept": kept,
        "acc_post": int(obj["acc_post"]),
        "retained_z": retained,
        "retained_ll": np.asarray(obj["retained_ll"], dtype=float),
        "retained_acc": np.asarray(obj["retained_acc"], dtype=np.int64),
    }


def run_chain(
    data: QuadratureDataset,
    cfg: MeasurementConfig,
    s_cfg: SamplerConfig,
    checkpoint_path=None,
) -> PosteriorEnsemble:
    """Sample the posterior for ``data`` under the measurement model ``cfg``."""
    dim = cfg.n_c + 1
    if len(data):
        A = dataset_amplitudes(data, cfg.n_c)
        P32 = np.ascontiguousarray(packed_projectors(A), dtype=np.float32)
    else:
        P32 = None
    L64 = None
    if cfg.eta < 1.0:
        L64 = np.ascontiguousarray(loss_pack_matrix(dim, cfg.eta))
    echo = {
        "eta": cfg.eta,
        "n_c": cfg.n_c,
        "scheme": data.scheme,
        "records": len(data),
        "data_sha256": _dataset_fingerprint(data),
    }
    return run_pcn(dim, s_cfg, P32, L64, config_echo=echo, checkpoint_path=checkpoint_path)


def bayesian_mean(ens: PosteriorEnsemble) -> np.ndarray:
    """Elementwise average of the sample density matrices."""
    if len(ens) < 1:
        raise ValueError("empty ensemble")
    return ens.rhos.mean(axis=0)


@dataclass(frozen=True)
class FunctionalEstimate:
    mean: float
    std: float
    p16: float
    p84: float


def estimate_functional(
    ens: PosteriorEnsemble, f: Callable[[np.ndarray], float]
) -> FunctionalEstimate:
    """Posterior-sample statistics of a scalar functional of the state."""
    vals = np.array([f(rho) for rho in ens.rhos], dtype=float)
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    p16, p84 = np.percentile(vals, [16.0, 84.0])
    return FunctionalEstimate(float(vals.mean()), std, float(p16), float(p84))


@dataclass
class ConvergenceReport:
    values: np.ndarray
    running_mean: np.ndarray
    running_std: np.ndarray
    half_means: tuple[float, float]
    passed: bool


def convergence_report(
    ens: PosteriorEnsemble,
    reference: np.ndarray | None = None,
    functional: Callable[[np.ndarray], float] | None = None,
    tol: float = 0.01,
) -> ConvergenceReport:
    """Running statistics of a functional over the retained samples.

    The functional defaults to fidelity against ``reference`` when a state is
    supplied, otherwise to the stored log-likelihood trace. Convergence
    passes when the two half-chain means differ by less than ``tol``.
    """
    if functional is not None:
        vals = np.array([functional(rho) for rho in ens.rhos], dtype=float)
    elif reference is not None:
        vals = np.array([fidelity(reference, rho) for rho in ens.rhos], dtype=float)
    else:
        vals = np.asarray(ens.log_likelihoods, dtype=float)
    n = vals.size
    idx = np.arange(1, n + 1)
    csum = np.cumsum(vals)
    running_mean = csum / idx
    csq = np.cumsum(vals**2)
    var = np.maximum(csq / idx - running_mean**2, 0.0)
    running_std = np.sqrt(var * idx / np.maximum(idx - 1, 1))
    running_std[0] = 0.0
    half = n // 2
    m1 = float(vals[:half].mean()) if half else float("nan")
    m2 = float(vals[half:].mean()) if n - half else float("nan")
    passed = bool(n >= 2 and abs(m1 - m2) < tol)
    return ConvergenceReport(vals, running_mean, running_std, (m1, m2), passed)


def write_diagnostics_csv(ens: PosteriorEnsemble, report: ConvergenceReport, path) -> None:
    """Per-retained-sample rows: step,acceptance,ll,running_mean,running_std."""
    burn_in = int(ens.config.get("burn_in", 0))
    thin = int(ens.config.get("thin", 1))
    with open(path, "w") as fh:
        fh.write("step,acceptance,ll,running_mean,running_std\n")
        for r in range(len(ens)):
            step = burn_in + (r + 1) * thin
            acc = ens.accept_counts[r] / ((r + 1) * thin)
            fh.write(
                f"{step},{float(acc)!r},{float(ens.log_likelihoods[r])!r},"
                f"{float(report.running_mean[r])!r},{float(report.running_std[r])!r}\n"
            )


def pool_ensembles(chains: Sequence[PosteriorEnsemble]) -> PosteriorEnsemble:
    """Ordered merge of independent chains (by chain index, then sample index)."""
    if not chains:
        raise ValueError("no chains to pool")
    dim = chains[0].dim
    if any(c.dim != dim for c in chains):
        raise ValueError("chains disagree on dimension")
    return PosteriorEnsemble(
        dim=dim,
        params=np.concatenate([c.params for c in chains], axis=0),
        log_likelihoods=np.concatenate([c.log_likelihoods for c in chains]),
        accept_counts=np.concatenate([c.accept_counts for c in chains]),
        acceptance_rate=float(np.mean([c.acceptance_rate for c in chains])),
        beta_final=chains[-1].beta_final,
        config=dict(chains[0].config, pooled_chains=len(chains)),
    )
