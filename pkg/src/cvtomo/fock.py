"""Fock-basis state algebra for a single optical mode.

Conventions used throughout the package: hbar = 1, so the vacuum quadrature
variance is <dx^2> = 1/2. A density matrix is a plain complex ndarray of
shape (D, D) on the truncated space spanned by |0>..|n_c>, D = n_c + 1,
Hermitian, unit trace, positive semidefinite up to roundoff. States built
from an ideal (infinite-dimensional) description are renormalized to unit
trace after truncation; the probability mass lost to the cutoff is reported
separately by :func:`truncation_error`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Coherent",
    "Thermal",
    "SqueezedVacuum",
    "Fock",
    "Cat",
    "StateSpec",
    "WignerGrid",
    "make_state",
    "apply_loss",
    "fidelity",
    "wigner",
    "truncation_error",
    "mean_photon",
    "phase_rotate",
    "validate_density",
    "density_to_json",
    "density_from_json",
]

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIGENVALUE_ATOL = 1e-10


@dataclass(frozen=True)
class Coherent:
    """Displaced vacuum with complex amplitude ``alpha``; <n> = |alpha|^2."""

    alpha: complex


@dataclass(frozen=True)
class Thermal:
    """Thermal state with mean photon number ``mu`` >= 0."""

    mu: float


@dataclass(frozen=True)
class SqueezedVacuum:
    """Squeezed vacuum with real squeezing parameter ``r``; <n> = sinh(r)^2."""

    r: float


@dataclass(frozen=True)
class Fock:
    """Photon-number eigenstate |n0>."""

    n0: int


@dataclass(frozen=True)
class Cat:
    """Superposition of |alpha> and |-alpha> with even (+) or odd (-) parity."""

    alpha: complex
    parity: str = "even"


StateSpec = Union[Coherent, Thermal, SqueezedVacuum, Fock, Cat]


@dataclass
class WignerGrid:
    """Wigner function sampled on a uniform rectangular phase-space grid."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    n_x: int
    n_p: int
    values: np.ndarray  # shape (n_x, n_p), real

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def ps(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p)

    def to_csv(self, path) -> None:
        """Write rows ``x,p,w`` with an ``x,p,w`` header."""
        xs, ps = self.xs, self.ps
        with open(path, "w") as fh:
            fh.write("x,p,w\n")
            for i, x in enumerate(xs):
                for j, p in enumerate(ps):
                    fh.write(f"{float(x)!r},{float(p)!r},{float(self.values[i, j])!r}\n")


def _log_factorials(n: int) -> np.ndarray:
    """log(k!) for k = 0..n."""
    return gammaln(np.arange(n + 1) + 1.0)


def _coherent_ket(alpha: complex, n_c: int) -> np.ndarray:
    """Unnormalized truncation of exp(-|a|^2/2) sum_n a^n/sqrt(n!) |n>."""
    n = np.arange(n_c + 1)
    if alpha == 0:
        ket = np.zeros(n_c + 1, dtype=complex)
        ket[0] = 1.0
        return ket
    mag = np.exp(n * np.log(abs(alpha)) - 0.5 * _log_factorials(n_c) - 0.5 * abs(alpha) ** 2)
    phase = np.exp(1j * n * np.angle(alpha))
    return mag * phase


def _pure_density(ket: np.ndarray) -> np.ndarray:
    norm2 = float(np.vdot(ket, ket).real)
    if norm2 <= 0.0 or not np.isfinite(norm2):
        raise ValueError("degenerate state: zero norm after truncation")
    ket = ket / np.sqrt(norm2)
    return np.outer(ket, ket.conj())


def make_state(spec: StateSpec, n_c: int) -> np.ndarray:
    """Construct the density matrix of ``spec`` truncated at photon cutoff ``n_c``.

    Pure specs give |psi><psi| of the truncated, renormalized ket; mixed specs
    are truncated and renormalized to unit trace.
    """
    if n_c < 0:
        raise ValueError("photon cutoff must be >= 0")
    if isinstance(spec, Coherent):
        return _pure_density(_coherent_ket(spec.alpha, n_c))
    if isinstance(spec, Thermal):
        if spec.mu < 0:
            raise ValueError("thermal mean photon number must be >= 0")
        n = np.arange(n_c + 1)
        if spec.mu == 0:
            diag = np.zeros(n_c + 1)
            diag[0] = 1.0
        else:
            # mu^n / (1+mu)^(n+1), renormalized over the retained levels
            diag = np.exp(n * np.log(spec.mu) - (n + 1) * np.log(1.0 + spec.mu))
            diag = diag / diag.sum()
        return np.diag(diag).astype(complex)
    if isinstance(spec, SqueezedVacuum):
        ket = np.zeros(n_c + 1, dtype=complex)
        lf = _log_factorials(2 * n_c + 1)
        t = np.tanh(spec.r)
        for k in range(n_c // 2 + 1):
            # |2k> amplitude: (-tanh r)^k sqrt((2k)!) / (2^k k!)
            logmag = 0.5 * lf[2 * k] - lf[k] - k * np.log(2.0)
            amp = np.exp(logmag) * (-t) ** k
            ket[2 * k] = amp
        return _pure_density(ket)
    if isinstance(spec, Fock):
        if spec.n0 < 0:
            raise ValueError("Fock index must be >= 0")
        if spec.n0 > n_c:
            raise ValueError("Fock index exceeds the photon cutoff")
        rho = np.zeros((n_c + 1, n_c + 1), dtype=complex)
        rho[spec.n0, spec.n0] = 1.0
        return rho
    if isinstance(spec, Cat):
        if spec.parity not in ("even", "odd"):
            raise ValueError("cat parity must be 'even' or 'odd'")
        sign = 1.0 if spec.parity == "even" else -1.0
        ket = _coherent_ket(spec.alpha, n_c) + sign * _coherent_ket(-spec.alpha, n_c)
        return _pure_density(ket)
    raise TypeError(f"unknown state spec: {spec!r}")


def _loss_amplitudes(dim: int, eta: float) -> np.ndarray:
    """B[j, i] = sqrt(binom(j, i) eta^i (1-eta)^(j-i)) for j >= i, else 0."""
    j = np.arange(dim)[:, None].astype(float)
    i = np.arange(dim)[None, :].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_binom = gammaln(j + 1) - gammaln(i + 1) - gammaln(j - i + 1)
        log_eta = np.where(i > 0, i * np.log(eta) if eta > 0 else -np.inf, 0.0)
        log_loss = np.where(j - i > 0, (j - i) * np.log(1.0 - eta) if eta < 1 else -np.inf, 0.0)
        logb = 0.5 * (log_binom + log_eta + log_loss)
    B = np.exp(logb)
    B[i > j] = 0.0
    return B


def apply_loss(rho: np.ndarray, eta: float) -> np.ndarray:
    """Pure-loss (Bernoulli) channel with transmissivity ``eta`` on the truncated space.

    Trace-preserving for any eta in [0, 1]; the cutoff makes the map exact
    because lost photons only move population downward.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    dim = rho.shape[0]
    if eta == 1.0:
        return rho.copy()
    B = _loss_amplitudes(dim, eta)
    out = np.zeros_like(rho, dtype=complex)
    for k in range(dim):
        b = np.array([B[m + k, m] for m in range(dim - k)])
        out[: dim - k, : dim - k] += np.outer(b, b) * rho[k:, k:]
    return out


def validate_density(rho: np.ndarray, context: str = "density matrix") -> None:
    """Raise if ``rho`` violates Hermiticity, unit trace, or positivity tolerances."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{context}: expected a square matrix, got shape {rho.shape}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > 1e-12:
        raise ValueError(f"{context}: not Hermitian (residue {herm:.2e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValueError(f"{context}: trace {tr} is not 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -EIGENVALUE_ATOL:
        raise ValueError(f"{context}: negative eigenvalue {w.min():.2e}")


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min() < -1e-6:
        raise ValueError(f"matrix is not PSD (eigenvalue {w.min():.2e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho_g: np.ndarray, rho: np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho_g) rho sqrt(rho_g)))^2, clamped to [0, 1]."""
    if rho_g.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {rho_g.shape} vs {rho.shape}")
    s = _psd_sqrt(rho_g)
    inner = s @ rho @ s
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    w = np.clip(w, 0.0, None)
    return float(np.clip(np.sqrt(w).sum() ** 2, 0.0, 1.0))


def _laguerre_column(n_max: int, k: int, y: np.ndarray) -> list[np.ndarray]:
    """Generalized Laguerre L_n^k(y) for n = 0..n_max by upward recurrence."""
    out = [np.ones_like(y)]
    if n_max >= 1:
        out.append(1.0 + k - y)
    for n in range(1, n_max):
        out.append(((2 * n + 1 + k - y) * out[n] - (n + k) * out[n - 1]) / (n + 1))
    return out


def wigner(
    rho: np.ndarray,
    x_min: float = -6.0,
    x_max: float = 6.0,
    p_min: float = -6.0,
    p_max: float = 6.0,
    n_x: int = 241,
    n_p: int = 241,
) -> WignerGrid:
    """Wigner function of ``rho`` on a uniform grid (hbar = 1, integral dx dp = 1).

    The sign convention is fixed so that the p-marginal of W equals the
    homodyne quadrature density at LO phase 0.
    """
    if n_x < 2 or n_p < 2 or x_max <= x_min or p_max <= p_min:
        raise ValueError("invalid Wigner grid")
    dim = rho.shape[0]
    xs = np.linspace(x_min, x_max, n_x)
    ps = np.linspace(p_min, p_max, n_p)
    X, P = np.meshgrid(xs, ps, indexing="ij")
    r2 = X**2 + P**2
    envelope = np.exp(-r2) / np.pi
    A = X - 1j * P
    lf = _log_factorials(dim - 1)

    W = np.zeros_like(X, dtype=complex)
    for d in range(dim):
        lag = _laguerre_column(dim - 1 - d, d, 2.0 * r2)
        phase = A**d if d else 1.0
        for n in range(dim - d):
            m = n + d
            pref = (-1.0) ** n * np.exp(0.5 * (d * np.log(2.0) + lf[n] - lf[m]))
            term = pref * phase * lag[n] * envelope
            W += rho[m, n] * term
            if d:
                W += rho[n, m] * np.conj(term)
    resid = np.abs(W.imag).max()
    if resid > 1e-6:
        raise ValueError(f"Wigner imaginary residue {resid:.2e} signals a non-Hermitian input")
    return WignerGrid(x_min, x_max, p_min, p_max, n_x, n_p, W.real)


def truncation_error(spec: StateSpec, n_c: int) -> float:
    """Probability mass of ``spec`` above photon number ``n_c``.

    Evaluated at an internal cutoff max(4 n_c, n_c + 40) as a proxy for the
    infinite sum; the residual tail there is below 1e-12 for the states of
    interest.
    """
    big = max(4 * n_c, n_c + 40)
    rho = make_state(spec, big)
    kept = float(np.diag(rho).real[: n_c + 1].sum())
    return float(min(max(1.0 - kept, 0.0), 1.0))


def mean_photon(rho: np.ndarray) -> float:
    """Sum_n n rho_nn."""
    n = np.arange(rho.shape[0])
    val = float((n * np.diag(rho).real).sum())
    if val < -1e-10:
        raise ValueError(f"mean photon number {val} is negative beyond tolerance")
    return val


def phase_rotate(rho: np.ndarray, delta: float) -> np.ndarray:
    """Number-operator phase rotation rho_mn -> rho_mn exp(i (n - m) delta)."""
    n = np.arange(rho.shape[0])
    ph = np.exp(1j * n * delta)
    return rho * np.outer(ph.conj(), ph)


def density_to_json(rho: np.ndarray) -> dict:
    """JSON-serializable form: {dim, re, im} with row-major flat arrays."""
    return {
        "dim": int(rho.shape[0]),
        "re": [float(v) for v in rho.real.ravel()],
        "im": [float(v) for v in rho.imag.ravel()],
    }


def density_from_json(obj: dict) -> np.ndarray:
    dim = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=float).reshape(dim, dim)
    im = np.asarray(obj["im"], dtype=float).reshape(dim, dim)
    return re + 1j * im


def save_density(rho: np.ndarray, path, extra: dict | None = None) -> None:
    obj = density_to_json(rho)
    if extra:
        obj.update(extra)
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_density(path) -> np.ndarray:
    with open(path) as fh:
        return density_from_json(json.load(fh))
