"""Monte Carlo configuration and counter-based random streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .classical import bounding_radius, drive_coefficient
from .errors import ConfigError
from .params import ControlParams


@dataclass(frozen=True)
class MCConfig:
    samples: int = 100_000
    seed: int = 0
    batch: int = 20_000

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 1:
            raise ConfigError(f"samples: must be a positive integer, got {self.samples!r}")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ConfigError(f"batch: must be a positive integer, got {self.batch!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed: must be a non-negative integer, got {self.seed!r}")


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream addressed by ``(seed, *key)``.

    The same address always yields the same numbers regardless of which
    thread asks, so parallel runs reproduce serial ones.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def uniform_box(rng: np.random.Generator, n: int, bbox) -> tuple[np.ndarray, np.ndarray]:
    q0, q1, p0, p1 = bbox
    u = rng.random((n, 2))
    return q0 + (q1 - q0) * u[:, 0], p0 + (p1 - p0) * u[:, 1]


def phase_space_volumes(params: ControlParams, energies, config: MCConfig = MCConfig(),
                        radius: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Area of {H^c <= E} for each E in ``energies`` with binomial standard errors.

    Samples are drawn uniformly in the square [-R, R]^2, with R large enough
    that H^c exceeds max(energies) outside it.  All energies share the same
    sample, so differences between neighbouring energies are far less noisy
    than the volumes themselves.
    """
    e = np.asarray(energies, dtype=float)
    if np.any(np.diff(e) < 0):
        raise ValueError("energies must be ascending")
    r = bounding_radius(params, float(e.max())) if radius is None else radius
    area = (2 * r) ** 2
    coeff = drive_coefficient(params.mu, params.xi)
    below = np.zeros(e.size, dtype=np.int64)
    done = 0
    index = 0
    while done < config.samples:
        n = min(config.batch, config.samples - done)
        q, p = uniform_box(stream(config.seed, 0, index), n, (-r, r, -r, r))
        h = kernels.energy_batch(q, p, params.mu, params.delta, coeff)
        # sample with energy h is counted for every grid energy >= h
        pos = np.searchsorted(e, h, side="left")
        below += np.cumsum(np.bincount(pos, minlength=e.size + 1)[: e.size])
        done += n
        index += 1
    frac = below / config.samples
    return area * frac, area * np.sqrt(frac * (1 - frac) / config.samples)
