"""Control parameters and the quantum <-> classical scaling map."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import ConfigError

DRIVE_ORDERS = (1, 2, 3, 4)


@dataclass(frozen=True)
class ControlParams:
    """One physical configuration of the mu-photon Kerr parametric oscillator.

    ``delta`` and ``xi`` are the dimensionless detuning and drive ratio of the
    quantum Hamiltonian (energies in units of K).  ``n_trunc`` is the Fock
    truncation (basis |0>..|N-1>) and ``n_eff`` the scaling parameter used to
    compare with the classical limit; see :class:`ClassicalScaling`.

    Hamiltonian sign follows the convention H = -delta n + a+^2 a^2 - xi (a+^mu + a^mu),
    i.e. the negative of the usual superconducting-circuit convention.
    """

    mu: int
    delta: float
    xi: float
    n_trunc: int = 400
    n_eff: float = 1.0

    def __post_init__(self):
        if isinstance(self.mu, bool) or int(self.mu) != self.mu or self.mu not in DRIVE_ORDERS:
            raise ConfigError(f"mu: drive order must be one of {DRIVE_ORDERS}, got {self.mu!r}")
        object.__setattr__(self, "mu", int(self.mu))
        for name in ("delta", "xi", "n_eff"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name}: must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if int(self.n_trunc) != self.n_trunc:
            raise ConfigError(f"n_trunc: must be an integer, got {self.n_trunc!r}")
        object.__setattr__(self, "n_trunc", int(self.n_trunc))
        if self.n_trunc < self.mu + 1:
            raise ConfigError(
                f"n_trunc: need at least mu+1={self.mu + 1} Fock states to represent the drive, "
                f"got {self.n_trunc}"
            )
        if self.n_eff <= 0:
            raise ConfigError(f"n_eff: must be positive, got {self.n_eff}")

    def replace(self, **changes) -> ControlParams:
        return dataclasses.replace(self, **changes)

    @property
    def scaling(self) -> ClassicalScaling:
        return ClassicalScaling(self.mu, self.n_eff)

    @classmethod
    def from_classical(cls, mu, delta_c, xi_c, n_eff=1.0, n_trunc=400) -> ControlParams:
        """Quantum parameters whose classical limit at ``n_eff`` is (delta_c, xi_c)."""
        delta, xi = ClassicalScaling(mu, n_eff).to_quantum(delta_c, xi_c)
        return cls(mu, delta, xi, n_trunc=n_trunc, n_eff=n_eff)


@dataclass(frozen=True)
class ClassicalScaling:
    """Map between quantum and classical-limit parameters.

    K^c = K n_eff**2, delta^c = delta / n_eff, xi^c = xi / n_eff**(2 - mu/2).
    Energies therefore convert as E^c = E / n_eff**2.
    """

    mu: int
    n_eff: float

    def __post_init__(self):
        if self.n_eff <= 0:
            raise ConfigError(f"n_eff: must be positive, got {self.n_eff}")

    @property
    def xi_exponent(self) -> float:
        return 2.0 - self.mu / 2.0

    @property
    def kerr_factor(self) -> float:
        return self.n_eff ** 2

    def to_classical(self, delta, xi):
        return delta / self.n_eff, xi / self.n_eff ** self.xi_exponent

    def to_quantum(self, delta_c, xi_c):
        return delta_c * self.n_eff, xi_c * self.n_eff ** self.xi_exponent

    def energy_to_classical(self, energy):
        return energy / self.kerr_factor

    def energy_to_quantum(self, energy_c):
        return energy_c * self.kerr_factor


def rescale(params: ControlParams) -> ControlParams:
    """Classical view of ``params``: (delta^c, xi^c) with n_eff reset to 1."""
    delta_c, xi_c = params.scaling.to_classical(params.delta, params.xi)
    return params.replace(delta=delta_c, xi=xi_c, n_eff=1.0)


def unscale(params_c: ControlParams, n_eff: float) -> ControlParams:
    """Inverse of :func:`rescale`."""
    delta, xi = ClassicalScaling(params_c.mu, n_eff).to_quantum(params_c.delta, params_c.xi)
    return params_c.replace(delta=delta, xi=xi, n_eff=n_eff)
