"""Vectorized NumPy versions of the compiled kernels."""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln


def coherent_amplitudes(alpha, n_trunc: int) -> np.ndarray:
    """Rows c_n(alpha) = exp(-|alpha|^2/2) alpha^n / sqrt(n!), n < n_trunc, in log domain."""
    alpha = np.ascontiguousarray(alpha, dtype=complex).ravel()
    n = np.arange(n_trunc, dtype=float)
    mag = np.abs(alpha)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = np.where(n > 0, n * np.log(mag), 0.0)
    logmag = logmag - 0.5 * mag * mag - 0.5 * gammaln(n + 1.0)
    phase = n * np.angle(alpha)[:, None]
    return np.exp(logmag + 1j * phase)


def energy_batch(q, p, mu: int, delta: float, coeff: float) -> np.ndarray:
    """Classical energy at many points; ``coeff`` is the drive prefactor 2 xi / 2^(mu/2)."""
    q = np.ascontiguousarray(q, dtype=float)
    p = np.ascontiguousarray(p, dtype=float)
    r2 = q * q + p * p
    z = (q + 1j * p) ** mu
    return -0.5 * delta * r2 + 0.25 * r2 * r2 - coeff * z.real
