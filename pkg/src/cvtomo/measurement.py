"""Outcome densities and likelihoods for homodyne and heterodyne detection.

A homodyne record is (theta, x); a heterodyne record is (theta, x, p), where
x is the quadrature aligned to the LO phase theta and p to theta + pi/2.
Detector inefficiency and electronics noise are not modeled separately: both
are absorbed into the transmissivity eta applied to the state before the
density is evaluated.

Numerics: the naive Hermite-polynomial form of the homodyne density overflows
near n_c = 20 at moderate |x|, so densities are assembled from orthonormal
Hermite functions (homodyne) and from the recurrence
g_n = u g_{n-1} / sqrt(n), u = (x + i p) e^{i theta} (heterodyne).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fock import apply_loss

__all__ = [
    "MeasurementConfig",
    "QuadratureDataset",
    "hermite_weighted",
    "homodyne_pdf",
    "heterodyne_pdf",
    "log_likelihood",
    "homodyne_amplitudes",
    "heterodyne_amplitudes",
    "packed_projectors",
    "pack_hermitian",
    "unpack_hermitian",
    "loss_pack_matrix",
]

DENSITY_FLOOR = 1e-300
RESIDUE_ATOL = 1e-9


@dataclass(frozen=True)
class MeasurementConfig:
    """Inference-side measurement model: transmissivity and photon cutoff."""

    eta: float
    n_c: int

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.n_c < 0:
            raise ValueError("n_c must be >= 0")


@dataclass
class QuadratureDataset:
    """Ordered quadrature records plus acquisition metadata.

    ``p`` is present (an array of the same length as ``theta``/``x``) exactly
    when scheme == "heterodyne".
    """

    scheme: str
    theta: np.ndarray
    x: np.ndarray
    p: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.scheme not in ("homodyne", "heterodyne"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "heterodyne":
            if self.p is None:
                raise ValueError("heterodyne data requires p values")
            self.p = np.asarray(self.p, dtype=float)
            if self.p.shape != self.x.shape:
                raise ValueError("p and x must have equal length")
        elif self.p is not None:
            raise ValueError("homodyne data must not carry p values")
        if self.theta.shape != self.x.shape:
            raise ValueError("theta and x must have equal length")
        for name, arr in (("theta", self.theta), ("x", self.x), ("p", self.p)):
            if arr is not None and arr.size and not np.isfinite(arr).all():
                raise ValueError(f"non-finite value in {name}")

    def __len__(self) -> int:
        return self.theta.size

    def subset(self, k: int) -> "QuadratureDataset":
        """Prefix of the first k records (metadata carried over)."""
        p = self.p[:k] if self.p is not None else None
        return QuadratureDataset(self.scheme, self.theta[:k], self.x[:k], p, dict(self.metadata))

    def concat(self, other: "QuadratureDataset") -> "QuadratureDataset":
        if other.scheme != self.scheme:
            raise ValueError("cannot concatenate datasets with different schemes")
        p = None
        if self.p is not None:
            p = np.concatenate([self.p, other.p])
        return QuadratureDataset(
            self.scheme,
            np.concatenate([self.theta, other.theta]),
            np.concatenate([self.x, other.x]),
            p,
            dict(self.metadata),
        )

    def drop_p(self) -> "QuadratureDataset":
        """x-only projection of a heterodyne dataset, viewed as homodyne data."""
        if self.scheme != "heterodyne":
            raise ValueError("drop_p applies to heterodyne data")
        meta = dict(self.metadata)
        meta["projected_from"] = "heterodyne"
        return QuadratureDataset("homodyne", self.theta.copy(), self.x.copy(), None, meta)

    def save(self, csv_path) -> None:
        """Write the CSV (header theta,x or theta,x,p) and its JSON sidecar."""
        csv_path = Path(csv_path)
        with open(csv_path, "w") as fh:
            if self.scheme == "homodyne":
                fh.write("theta,x\n")
                for t, x in zip(self.theta, self.x):
                    fh.write(f"{float(t)!r},{float(x)!r}\n")
            else:
                fh.write("theta,x,p\n")
                for t, x, p in zip(self.theta, self.x, self.p):
                    fh.write(f"{float(t)!r},{float(x)!r},{float(p)!r}\n")
        sidecar = {"scheme": self.scheme, "records": len(self)}
        sidecar.update(self.metadata)
        with open(csv_path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path) -> "QuadratureDataset":
        csv_path = Path(csv_path)
        with open(csv_path) as fh:
            header = fh.readline().strip()
            rows = [line.split(",") for line in fh if line.strip()]
        if header == "theta,x":
            scheme = "homodyne"
        elif header == "theta,x,p":
            scheme = "heterodyne"
        else:
            raise ValueError(f"unrecognized dataset header {header!r}")
        cols = np.array([[float(v) for v in row] for row in rows], dtype=float)
        cols = cols.reshape(-1, 3 if scheme == "heterodyne" else 2)
        metadata = {}
        sidecar = csv_path.with_suffix(".json")
        if sidecar.exists():
            with open(sidecar) as fh:
                metadata = json.load(fh)
            if metadata.get("scheme", scheme) != scheme:
                raise ValueError("sidecar scheme disagrees with CSV columns")
        p = cols[:, 2] if scheme == "heterodyne" else None
        return cls(scheme, cols[:, 0], cols[:, 1], p, metadata)


def hermite_weighted(n: int, x) -> np.ndarray | float:
    """Orthonormal Hermite function h_n(x) = H_n(x) exp(-x^2/2) / sqrt(2^n n! sqrt(pi))."""
    if n < 0:
        raise ValueError("order must be >= 0")
    xa = np.asarray(x, dtype=float)
    h = hermite_matrix(n, xa.ravel())[:, n].reshape(xa.shape)
    return float(h) if np.isscalar(x) else h


def hermite_matrix(n_max: int, x: np.ndarray) -> np.ndarray:
    """h_n(x) for n = 0..n_max, shape (len(x), n_max + 1), by stable recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n_max + 1))
    out[:, 0] = np.pi ** (-0.25) * np.exp(-0.5 * x**2)
    if n_max >= 1:
        out[:, 1] = np.sqrt(2.0) * x * out[:, 0]
    for n in range(1, n_max):
        out[:, n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[:, n] - np.sqrt(n / (n + 1.0)) * out[:, n - 1]
    return out


def homodyne_amplitudes(theta: np.ndarray, x: np.ndarray, n_c: int) -> np.ndarray:
    """Rows a_k with a_kn = exp(i n theta_k) h_n(x_k); f1 = a^dag rho_tilde a."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = hermite_matrix(n_c, x)
    n = np.arange(n_c + 1)
    return h * np.exp(1j * np.outer(theta, n))


def heterodyne_amplitudes(theta: np.ndarray, x: np.ndarray, p: np.ndarray, n_c: int) -> np.ndarray:
    """Rows a_k with a_kn = g_n(u_k)/sqrt(pi), u = (x + i p) e^{i theta}; f2 = a^dag rho_tilde a."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    u = (x + 1j * p) * np.exp(1j * theta)
    out = np.empty((u.size, n_c + 1), dtype=complex)
    out[:, 0] = np.exp(-0.5 * np.abs(u) ** 2) / np.sqrt(np.pi)
    for n in range(1, n_c + 1):
        out[:, n] = out[:, n - 1] * u / np.sqrt(n)
    return out


def _density_from_amplitudes(A: np.ndarray, rho_tilde: np.ndarray) -> np.ndarray:
    """Complex quadratic forms a_k^dag rho a_k, residue-checked and clamped."""
    vals = np.einsum("kn,kn->k", A.conj() @ rho_tilde, A)
    resid = np.abs(vals.imag).max(initial=0.0)
    if resid > RESIDUE_ATOL:
        raise ValueError(f"invalid density: imaginary residue {resid:.2e}")
    out = vals.real
    neg = out.min(initial=0.0)
    if neg < -RESIDUE_ATOL:
        raise ValueError(f"invalid density: negative value {neg:.2e}")
    return np.clip(out, 0.0, None)


def homodyne_pdf(x, theta: float, rho_tilde: np.ndarray):
    """Quadrature density f1(x | theta) of the (already lossy) state ``rho_tilde``."""
    A = homodyne_amplitudes(np.full(np.size(x), theta), np.ravel(x), rho_tilde.shape[0] - 1)
    vals = _density_from_amplitudes(A, rho_tilde)
    return float(vals[0]) if np.isscalar(x) else vals.reshape(np.shape(x))


def heterodyne_pdf(x, p, theta: float, rho_tilde: np.ndarray):
    """Joint density f2(x, p | theta) of the (already lossy) state ``rho_tilde``."""
    if np.shape(x) != np.shape(p):
        raise ValueError("x and p must have matching shapes")
    A = heterodyne_amplitudes(
        np.full(np.size(x), theta), np.ravel(x), np.ravel(p), rho_tilde.shape[0] - 1
    )
    vals = _density_from_amplitudes(A, rho_tilde)
    return float(vals[0]) if np.isscalar(x) else vals.reshape(np.shape(x))


def dataset_amplitudes(data: QuadratureDataset, n_c: int) -> np.ndarray:
    if data.scheme == "homodyne":
        return homodyne_amplitudes(data.theta, data.x, n_c)
    return heterodyne_amplitudes(data.theta, data.x, data.p, n_c)


def log_likelihood(data: QuadratureDataset, rho: np.ndarray, cfg: MeasurementConfig) -> float:
    """Sum of log outcome densities after applying the loss channel to ``rho``.

    Returns -inf if any record has exactly zero density; otherwise densities
    are floored at 1e-300 so that underflow cannot poison the sum.
    """
    if rho.shape[0] != cfg.n_c + 1:
        raise ValueError("state cutoff disagrees with the measurement config")
    if len(data) == 0:
        return 0.0
    rho_tilde = apply_loss(rho, cfg.eta)
    A = dataset_amplitudes(data, cfg.n_c)
    vals = _density_from_amplitudes(A, rho_tilde)
    if (vals == 0.0).any():
        return float("-inf")
    return float(np.log(np.clip(vals, DENSITY_FLOOR, None)).sum())


def pack_hermitian(rho: np.ndarray) -> np.ndarray:
    """Real parameterization [diag, Re upper (m<n), Im upper], length D^2."""
    dim = rho.shape[0]
    iu = np.triu_indices(dim, k=1)
    return np.concatenate([np.diag(rho).real, rho[iu].real, rho[iu].imag])


def unpack_hermitian(s: np.ndarray, dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    iu = np.triu_indices(dim, k=1)
    n_off = iu[0].size
    rho[np.arange(dim), np.arange(dim)] = s[:dim]
    rho[iu] = s[dim : dim + n_off] + 1j * s[dim + n_off :]
    rho = rho + np.triu(rho, k=1).conj().T
    return rho


def packed_projectors(A: np.ndarray) -> np.ndarray:
    """Real matrix P with P @ pack_hermitian(rho) = a_k^dag rho a_k for every row."""
    K, dim = A.shape
    iu = np.triu_indices(dim, k=1)
    c = A[:, iu[0]].conj() * A[:, iu[1]]
    return np.concatenate([np.abs(A) ** 2, 2.0 * c.real, -2.0 * c.imag], axis=1)


def loss_pack_matrix(dim: int, eta: float) -> np.ndarray:
    """Matrix L with L @ pack_hermitian(rho) = pack_hermitian(apply_loss(rho, eta))."""
    n = dim * dim
    L = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        L[:, i] = pack_hermitian(apply_loss(unpack_hermitian(e, dim), eta))
    return L
