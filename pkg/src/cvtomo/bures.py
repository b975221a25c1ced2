"""Bures-distributed random density matrices from Gaussian parameters.

A D-dimensional density matrix is parameterized by 2 D^2 complex numbers z:
the first D^2 fill a matrix G row-major, the second D^2 are converted to a
Haar unitary U by phase-corrected QR, and

    rho = (I + U) G G^dag (I + U^dag) / Tr[...].

When every component of z has independent standard-normal real and imaginary
parts (density ~ exp(-|z_j|^2 / 2)), rho follows the Bures distribution. The
overparameterization (4 D^2 real numbers) is kept deliberately: it gives the
sampler a Gaussian prior over an unconstrained parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BuresParams", "sample_prior", "haar_unitary", "build_density"]


@dataclass(frozen=True)
class BuresParams:
    """Parameter vector of length 2 dim^2 for one density matrix."""

    z: np.ndarray
    dim: int

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        object.__setattr__(self, "z", z)
        if z.shape != (2 * self.dim * self.dim,):
            raise ValueError(f"expected {2 * self.dim**2} parameters, got {z.shape}")
        if not np.isfinite(z.view(float)).all():
            raise ValueError("non-finite parameter")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "re": [float(v) for v in self.z.real],
            "im": [float(v) for v in self.z.imag],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BuresParams":
        z = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        return cls(z, int(obj["dim"]))


def sample_prior(rng: np.random.Generator, dim: int) -> BuresParams:
    """Draw 2 dim^2 complex parameters with unit-variance real and imaginary parts."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    n = 2 * dim * dim
    raw = rng.standard_normal(2 * n)
    return BuresParams(raw[0::2] + 1j * raw[1::2], dim)


def haar_unitary(z_half: np.ndarray) -> np.ndarray:
    """Haar-distributed unitary from D^2 complex normals (QR with phase correction).

    The columns of the QR factor Q are rescaled by the phases of R's diagonal,
    which makes the result independent of the QR sign convention and restores
    the Haar measure.
    """
    z_half = np.asarray(z_half, dtype=complex).ravel()
    dim = int(round(np.sqrt(z_half.size)))
    if dim * dim != z_half.size:
        raise ValueError("parameter count is not a perfect square")
    M = z_half.reshape(dim, dim)
    q, r = np.linalg.qr(M)
    d = np.diag(r)
    mags = np.abs(d)
    if (mags == 0.0).any():
        raise ValueError("singular input matrix")
    return q * (d / mags)


def build_density(params: BuresParams) -> np.ndarray:
    """Density matrix of ``params`` via the Bures construction."""
    dim = params.dim
    dsq = dim * dim
    G = params.z[:dsq].reshape(dim, dim)
    U = haar_unitary(params.z[dsq:])
    V = (np.eye(dim) + U) @ G
    M = V @ V.conj().T
    tr = np.trace(M).real
    if tr < 1e-14:
        raise ValueError("degenerate construction: (I + U) G vanished")
    return M / tr
