"""Coherent states, spectral time evolution, Husimi functions and tunneling measures.

Phase-space coordinates are those of the Fock basis in use,
alpha = (q + i p)/sqrt(2), and the matching mean-field energy is
``classical_energy`` evaluated at the same (quantum) delta and xi.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq
from scipy.special import gammainc

from . import kernels
from .classical import (PhasePoint, classical_energy, contour_radius,
                        find_critical_points)
from .errors import ConfigError, TopologyError, TruncationError
from .montecarlo import MCConfig, stream, uniform_box
from .params import ControlParams
from .quantum import EigenSolution, build_hamiltonian, full_spectrum

TAIL_TOL = 1e-10
NORM_TOL = 1e-12


@dataclass(frozen=True)
class CoherentSpec:
    center: PhasePoint

    @property
    def alpha(self) -> complex:
        return self.center.alpha

    @classmethod
    def from_alpha(cls, alpha: complex) -> CoherentSpec:
        a = complex(alpha) * math.sqrt(2.0)
        return cls(PhasePoint(a.real, a.imag))


@dataclass(frozen=True)
class QuantumState:
    """Unit-norm amplitude vector over the truncated Fock basis."""

    amplitudes: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        n = float(np.linalg.norm(a))
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {n!r} differs from 1; use QuantumState.normalized")
        object.__setattr__(self, "norm", n)

    @classmethod
    def normalized(cls, amplitudes) -> QuantumState:
        a = np.asarray(amplitudes, dtype=complex).ravel()
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(a / n)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def photon_number(self) -> float:
        return float(np.sum(np.arange(self.dim) * np.abs(self.amplitudes) ** 2))

    def expectation(self, params: ControlParams) -> float:
        h = build_hamiltonian(params.replace(n_trunc=self.dim))
        return float(np.vdot(self.amplitudes, h.matvec(self.amplitudes)).real)

    def rotated(self, angle: float) -> QuantumState:
        """exp(i angle n) |psi>: rotates the Husimi function by ``angle`` in phase space."""
        return QuantumState(self.amplitudes * np.exp(1j * angle * np.arange(self.dim)))


def coherent_tail(alpha2: float, n_trunc: int) -> float:
    """Probability weight of |alpha> beyond Fock index n_trunc - 1."""
    return float(gammainc(n_trunc, alpha2)) if alpha2 > 0 else 0.0


def required_truncation(alpha2: float, tol: float = TAIL_TOL) -> int:
    n = max(2, int(alpha2 + 1))
    while coherent_tail(alpha2, n) >= tol:
        n = int(n * 1.1) + 1
    return n


def _check_tail(alpha2: float, n_trunc: int, tol: float):
    tail = coherent_tail(alpha2, n_trunc)
    if tail >= tol:
        raise TruncationError(
            f"n_trunc: {n_trunc} Fock states leave weight {tail:.2e} of a coherent state with "
            f"|alpha|^2={alpha2:.4g} outside the basis; need n_trunc >= {required_truncation(alpha2, tol)}"
        )


def coherent_state(spec: CoherentSpec, n_trunc: int, tail_tol: float = TAIL_TOL) -> QuantumState:
    """|alpha> truncated to n_trunc Fock states and renormalized.

    Raises :class:`TruncationError` when the discarded tail weight exceeds ``tail_tol``.
    """
    a = spec.alpha
    _check_tail(abs(a) ** 2, n_trunc, tail_tol)
    amps = kernels.coherent_amplitudes(np.array([a]), n_trunc)[0]
    return QuantumState.normalized(amps)


def _spectral_basis(solution: EigenSolution, dim: int):
    if solution.states is None:
        raise ConfigError("solution: eigenvectors are required for time evolution")
    if solution.states.shape != (dim, dim):
        raise ConfigError(
            f"solution: needs the full decomposition of a {dim}-state basis, got shape {solution.states.shape}"
        )
    return solution.energies, solution.states


def evolve_many(state: QuantumState, solution: EigenSolution, times) -> np.ndarray:
    """Columns psi(t) = exp(-i H t) psi for each t in ``times``."""
    energies, vecs = _spectral_basis(solution, state.dim)
    coef = vecs.T @ state.amplitudes
    t = np.atleast_1d(np.asarray(times, dtype=float))
    return vecs @ (coef[:, None] * np.exp(-1j * np.outer(energies, t)))


def evolve(state: QuantumState, solution: EigenSolution, t: float) -> QuantumState:
    """exp(-i H t) |state> by expansion in the eigenbasis of ``solution``."""
    if t == 0:
        return state
    return QuantumState.normalized(evolve_many(state, solution, [t])[:, 0])


def husimi_grid(state: QuantumState, q, p, check: bool = True, tail_tol: float = TAIL_TOL) -> np.ndarray:
    """Q(q, p) = |<alpha|psi>|^2 / pi at broadcast points (q, p)."""
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    alpha = ((q + 1j * p) / math.sqrt(2.0)).ravel()
    if check and alpha.size:
        _check_tail(float(np.max(np.abs(alpha)) ** 2), state.dim, tail_tol)
    out = np.empty(alpha.size)
    chunk = max(1, 2_000_000 // max(state.dim, 1))
    for s in range(0, alpha.size, chunk):
        rows = kernels.coherent_amplitudes(alpha[s:s + chunk], state.dim)
        out[s:s + chunk] = np.abs(rows.conj() @ state.amplitudes) ** 2 / math.pi
    return out.reshape(q.shape)


def husimi(state: QuantumState, x: PhasePoint) -> float:
    return float(husimi_grid(state, x.q, x.p))


@dataclass(frozen=True)
class RegionMask:
    """Membership lattice of a phase-space region on ``bbox = (q0, q1, p0, p1)``.

    ``grid[i, j]`` refers to the cell centred at (q_i, p_j); cells are
    ``dq x dp`` rectangles tiling the box.
    """

    kind: str
    bbox: tuple
    grid: np.ndarray
    separatrix_energy: float | None = None
    local_max_energy: float | None = None

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    @property
    def cell(self) -> tuple:
        q0, q1, p0, p1 = self.bbox
        return (q1 - q0) / self.grid.shape[0], (p1 - p0) / self.grid.shape[1]

    @property
    def box_area(self) -> float:
        q0, q1, p0, p1 = self.bbox
        return (q1 - q0) * (p1 - p0)

    @property
    def area(self) -> float:
        dq, dp = self.cell
        return float(self.grid.sum()) * dq * dp

    def axes(self) -> tuple:
        q0, q1, p0, p1 = self.bbox
        dq, dp = self.cell
        return q0 + dq * (np.arange(self.grid.shape[0]) + 0.5), p0 + dp * (np.arange(self.grid.shape[1]) + 0.5)

    def cell_index(self, q, p):
        q0, _, p0, _ = self.bbox
        dq, dp = self.cell
        i = np.floor((np.asarray(q) - q0) / dq).astype(int)
        j = np.floor((np.asarray(p) - p0) / dp).astype(int)
        return i, j

    def contains(self, q, p) -> np.ndarray:
        i, j = self.cell_index(q, p)
        ok = (i >= 0) & (i < self.grid.shape[0]) & (j >= 0) & (j < self.grid.shape[1])
        out = np.zeros(np.shape(i), dtype=bool)
        out[ok] = self.grid[i[ok], j[ok]]
        return out

    def max_alpha2(self) -> float:
        """Largest |alpha|^2 over member cells (their outer corners)."""
        if not self.grid.any():
            return 0.0
        qa, pa = self.axes()
        dq, dp = self.cell
        ii, jj = np.nonzero(self.grid)
        r2 = (np.abs(qa[ii]) + dq / 2) ** 2 + (np.abs(pa[jj]) + dp / 2) ** 2
        return float(r2.max() / 2)

    def union(self, other: RegionMask) -> RegionMask:
        if other.bbox != self.bbox or other.shape != self.shape:
            raise ValueError("masks must share bbox and resolution")
        return RegionMask("custom", self.bbox, self.grid | other.grid)


def window_mask(bbox, resolution: int = 512) -> RegionMask:
    return RegionMask("custom", tuple(map(float, bbox)), np.ones((resolution, resolution), dtype=bool))


def disk_mask(radius: float, center=(0.0, 0.0), resolution: int = 512) -> RegionMask:
    q0, p0 = center
    bbox = (q0 - radius, q0 + radius, p0 - radius, p0 + radius)
    m = window_mask(bbox, resolution)
    qa, pa = m.axes()
    grid = (qa[:, None] - q0) ** 2 + (pa[None, :] - p0) ** 2 <= radius ** 2
    return RegionMask("custom", bbox, grid)


def _separatrix_topology(params: ControlParams):
    cps = find_critical_points(params)
    hyp = [c for c in cps if c.kind == "hyperbolic"]
    mx = [c for c in cps if c.kind == "local_max"]
    if not hyp or not mx:
        raise TopologyError(
            f"mu={params.mu}, delta={params.delta}, xi={params.xi}: need a hyperbolic point and a local "
            f"maximum (mu=1 region II, mu=2 III, mu=3 VI, mu=4 II)"
        )
    return cps, hyp, mx[0]


def default_bbox(params: ControlParams, margin: float = 4.0) -> tuple:
    """Square box around every critical point and the E_max contour, plus ``margin``."""
    cps = find_critical_points(params)
    e_top = max(c.energy for c in cps)
    r = max(contour_radius(params, e_top), max(c.position.radius for c in cps)) + margin
    return (-r, r, -r, r)


def build_region_mask(params: ControlParams, kind: str = "omega_out", resolution: int = 512,
                      bbox=None, margin: float = 4.0) -> RegionMask:
    """Omega_in / Omega_out of the separatrix through the hyperbolic points.

    Omega_in is the 4-connected component of {E_sep < H <= E_max} containing
    the local maximum.  The flood fill does not pass through cells whose
    corners reach E_sep or that lie within 2.5 cells of a hyperbolic point,
    so it cannot leak through the saddle; one dilation step, kept inside the
    energy band, then restores the boundary cells.  Omega_out is
    {H > E_sep} minus Omega_in.
    """
    if kind not in ("omega_in", "omega_out"):
        raise ConfigError(f"kind: must be 'omega_in' or 'omega_out', got {kind!r}")
    _, hyp, mx = _separatrix_topology(params)
    e_sep = min(c.energy for c in hyp)
    e_max = mx.energy
    if bbox is None:
        bbox = default_bbox(params, margin)
    base = window_mask(bbox, resolution)
    qa, pa = base.axes()
    dq, dp = base.cell
    qq, pp = np.meshgrid(qa, pa, indexing="ij")
    h = classical_energy(qq, pp, params)
    band = (h > e_sep) & (h <= e_max)
    corners = np.full(h.shape, np.inf)
    for sq in (-0.5, 0.5):
        for sp in (-0.5, 0.5):
            corners = np.minimum(corners, classical_energy(qq + sq * dq, pp + sp * dp, params))
    strict = band & (corners > e_sep)
    for c in hyp:
        strict &= np.hypot((qq - c.position.q) / dq, (pp - c.position.p) / dp) > 2.5
    labels, _ = ndimage.label(strict)
    i, j = base.cell_index(mx.position.q, mx.position.p)
    seed = int(labels[i, j])
    if seed == 0:
        inside = np.zeros_like(band)
        inside[i, j] = band[i, j] or h[i, j] > e_sep
    else:
        inside = labels == seed
    inside = ndimage.binary_dilation(inside) & band
    grid = inside if kind == "omega_in" else (h > e_sep) & ~inside
    return RegionMask(kind, tuple(map(float, bbox)), grid, float(e_sep), float(e_max))


class _VolumeSampler:
    """Fixed Monte Carlo sample of a mask, reused for every state or time.

    Reusing one sample (common random numbers) makes V(t) - V(t0) far less
    noisy than independent estimates, and makes T(t0, t0) exactly zero.
    """

    def __init__(self, mask: RegionMask, n_trunc: int, config: MCConfig, task: int = 0):
        if not mask.grid.any():
            raise ConfigError("mask: region has zero measure")
        if config.samples < 1000:
            raise ConfigError(f"samples: need at least 1000 Monte Carlo samples, got {config.samples}")
        _check_tail(mask.max_alpha2(), n_trunc, TAIL_TOL)
        self.mask, self.n_trunc, self.config, self.task = mask, n_trunc, config, task

    def batches(self):
        cfg = self.config
        done, index = 0, 0
        while done < cfg.samples:
            n = min(cfg.batch, cfg.samples - done)
            q, p = uniform_box(stream(cfg.seed, 1, self.task, index), n, self.mask.bbox)
            keep = self.mask.contains(q, p)
            alpha = (q[keep] + 1j * p[keep]) / math.sqrt(2.0)
            yield n, kernels.coherent_amplitudes(alpha, self.n_trunc).conj()
            done += n
            index += 1

    def integrate(self, columns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(1/2) integral of Q over the mask for each column state, with standard errors."""
        s1 = np.zeros(columns.shape[1])
        s2 = np.zeros(columns.shape[1])
        for _, rows in self.batches():
            f = np.abs(rows @ columns) ** 2 / math.pi
            s1 += f.sum(axis=0)
            s2 += (f * f).sum(axis=0)
        m = self.config.samples
        mean = s1 / m
        var = np.maximum(s2 / m - mean * mean, 0.0)
        scale = 0.5 * self.mask.box_area
        return scale * mean, scale * np.sqrt(var / m)


def husimi_volume(state: QuantumState, mask: RegionMask,
                  mc_config: MCConfig = MCConfig()) -> tuple[float, float]:
    """V = (1/2) integral_mask Q dq dp by uniform sampling of the mask box, with its standard error.

    The factor 1/2 is the Jacobian d^2 alpha = dq dp / 2, so that V = 1 over
    the whole plane.
    """
    v, e = _VolumeSampler(mask, state.dim, mc_config).integrate(state.amplitudes[:, None])
    return float(v[0]), float(e[0])


def initial_center(params: ControlParams, eps_frac: float = 0.02) -> PhasePoint:
    """Point just outside the separatrix: a hyperbolic point pushed radially outward.

    The hyperbolic point with the smallest polar angle in [0, 2 pi) is moved
    along its radius until H^c = E_sep + eps, eps = eps_frac (E_max - E_sep).
    """
    if eps_frac <= 0:
        raise ConfigError(f"eps_frac: must be positive, got {eps_frac}")
    _, hyp, mx = _separatrix_topology(params)
    h = min(hyp, key=lambda c: math.atan2(c.position.p, c.position.q) % (2 * math.pi))
    target = h.energy + eps_frac * (mx.energy - h.energy)
    r0 = h.position.radius
    if r0 == 0:
        raise TopologyError("hyperbolic point at the origin has no radial direction")
    uq, up = h.position.q / r0, h.position.p / r0

    def f(s):
        return classical_energy(h.position.q + s * uq, h.position.p + s * up, params) - target

    hi = max(1e-3, 0.1 * r0)
    while f(hi) < 0:
        hi *= 2
    s = brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return PhasePoint(h.position.q + s * uq, h.position.p + s * up)


@dataclass(frozen=True)
class TunnelingTrace:
    """V(t) over a mask and T(t, t0) = V(t) - V(t0)."""

    times: np.ndarray
    volumes: np.ndarray
    errors: np.ndarray
    effective: np.ndarray

    @property
    def t_min(self) -> float:
        return float(self.effective.min())

    @property
    def t_final(self) -> float:
        return float(self.effective[-1])

    @property
    def summary(self) -> dict:
        return {"min": self.t_min, "final": self.t_final,
                "argmin_time": float(self.times[int(np.argmin(self.effective))])}


def default_times() -> np.ndarray:
    return np.linspace(0.0, 100.0, 101)


def effective_tunneling(initial: CoherentSpec, params: ControlParams, mask: RegionMask,
                        times=None, mc_config: MCConfig = MCConfig(),
                        solution: EigenSolution | None = None, task: int = 0) -> TunnelingTrace:
    """Husimi volume of ``mask`` along the evolution of a coherent state.

    All time samples share one Monte Carlo point set.  A
    ``RuntimeWarning`` is issued when less than half of the initial Husimi
    mass lies in the mask.
    """
    t = default_times() if times is None else np.asarray(times, dtype=float).ravel()
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("times: must be a non-empty ascending sequence")
    if solution is None:
        solution = full_spectrum(params, vectors=True, certify_levels=False)
    psi0 = coherent_state(initial, params.n_trunc)
    columns = evolve_many(psi0, solution, t)
    sampler = _VolumeSampler(mask, params.n_trunc, mc_config, task)
    vol, err = sampler.integrate(columns)
    if vol[0] < 0.5:
        warnings.warn(f"only {vol[0]:.3f} of the initial Husimi mass lies in the mask", RuntimeWarning,
                      stacklevel=2)
    return TunnelingTrace(t, vol, err, vol - vol[0])


def mask_truncation(mask: RegionMask, tol: float = TAIL_TOL) -> int:
    """Smallest Fock truncation that resolves coherent states over the whole mask."""
    return required_truncation(mask.max_alpha2(), tol)


__all__ = [
    "CoherentSpec", "QuantumState", "RegionMask", "TunnelingTrace", "coherent_state", "coherent_tail",
    "evolve", "evolve_many", "husimi", "husimi_grid", "build_region_mask", "window_mask", "disk_mask",
    "husimi_volume", "initial_center", "effective_tunneling", "mask_truncation", "required_truncation",
    "default_bbox", "default_times",
]
