"""Spectral sweeps, densities of states, ESQPT and crossing detection, Ehrenfest order."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .errors import ConfigError, TrackingError
from .montecarlo import MCConfig, phase_space_volumes
from .params import ControlParams
from .quantum import EigenSolution, full_spectrum, solve

AXES = ("delta", "xi")
REFERENCES = ("ground", "absolute")


def _check_axis(axis: str):
    if axis not in AXES:
        raise ConfigError(f"axis: must be one of {AXES}, got {axis!r}")


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0:
        raise ConfigError("grid: must contain at least one value")
    if np.any(np.diff(g) <= 0):
        raise ConfigError("grid: values must be strictly ascending")
    return g


@dataclass(frozen=True)
class ParameterSweep:
    """Lowest ``k`` levels at every grid point of one control-parameter axis.

    ``spectra`` keep absolute energies; :meth:`energies` applies the reference
    convention (``"ground"`` subtracts E0 per grid point).
    """

    template: ControlParams
    axis: str
    grid: np.ndarray
    k: int
    spectra: tuple
    reference: str = "ground"

    def __len__(self):
        return self.grid.size

    @property
    def mu(self) -> int:
        return self.template.mu

    def params_at(self, i: int) -> ControlParams:
        return self.template.replace(**{self.axis: float(self.grid[i])})

    def energies(self, reference: str | None = None) -> np.ndarray:
        ref = self.reference if reference is None else reference
        e = np.array([s.energies for s in self.spectra])
        if ref == "ground":
            e = e - e[:, :1]
        return e

    def labels(self) -> np.ndarray:
        return np.array([s.sector_labels for s in self.spectra])

    def sector_energies(self, residue: int, count: int | None = None,
                        reference: str | None = None) -> np.ndarray:
        """(grid, count) array of the lowest levels of one sector."""
        e = self.energies(reference)
        rows = []
        for i, s in enumerate(self.spectra):
            sel = e[i][s.sector_labels == residue]
            rows.append(sel if count is None else sel[:count])
        n = min(r.size for r in rows)
        if count is not None and n < count:
            raise ConfigError(
                f"count: sector {residue} holds only {n} levels at some grid point; "
                f"increase k (currently {self.k}) to get {count}"
            )
        return np.array([r[:n] for r in rows])


def sweep_spectrum(template: ControlParams, axis: str, grid, k: int, reference: str = "ground",
                   workers: int = 1, certify: bool = True) -> ParameterSweep:
    """Spectrum of the lowest ``k`` levels along ``axis`` over ``grid``.

    Grid points run concurrently when ``workers > 1``; results are kept in grid order.
    """
    _check_axis(axis)
    if reference not in REFERENCES:
        raise ConfigError(f"reference: must be one of {REFERENCES}, got {reference!r}")
    g = _check_grid(grid)
    if not 0 < k <= template.n_trunc:
        raise ConfigError(f"levels: must lie in [1, {template.n_trunc}], got {k}")

    def run(value):
        return full_spectrum(template.replace(**{axis: float(value)}), k=k, certify_levels=certify)

    if workers > 1 and g.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = tuple(pool.map(run, g))
    else:
        spectra = tuple(run(v) for v in g)
    return ParameterSweep(template, axis, g, k, spectra, reference)


@dataclass(frozen=True)
class DOSHistogram:
    """Density of states on ``bin_edges``.

    Quantum histograms carry integer ``counts``; classical ones carry
    ``values`` = rho(E) and per-bin ``std_error``.
    """

    bin_edges: np.ndarray
    values: np.ndarray
    kind: str
    counts: np.ndarray | None = None
    std_error: np.ndarray | None = None
    energy_scale: float = 1.0
    notes: tuple = field(default_factory=tuple)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def __len__(self):
        return self.values.size


def quantum_dos(solution: EigenSolution, bin_width: float | None = None, window=None,
                shift: float = 0.0, energy_scale: float = 1.0) -> DOSHistogram:
    """Histogram of the certified levels of ``solution``.

    Energies are mapped to (E - shift) / energy_scale before binning, which
    allows E - E0 references and classical units (energy_scale = n_eff**2).
    ``values`` holds counts per unit (mapped) energy.  The default window runs
    from the lowest to the highest certified level, split into 60 bins when no
    width is given.
    """
    e = (solution.certified - shift) / energy_scale
    if window is None:
        if e.size == 0:
            edges = np.array([0.0, 1.0]) if bin_width is None else np.array([0.0, bin_width])
            counts = np.zeros(1, dtype=np.int64)
            warnings.warn("no certified levels to bin", RuntimeWarning, stacklevel=2)
            return DOSHistogram(edges, counts.astype(float), "quantum", counts,
                                energy_scale=energy_scale, notes=("empty",))
        lo, hi = float(e.min()), float(e.max())
    else:
        lo, hi = map(float, window)
    if bin_width is None:
        bin_width = (hi - lo) / 60 if hi > lo else 1.0
    if bin_width <= 0:
        raise ConfigError(f"bin_width: must be positive, got {bin_width}")
    nbins = max(1, int(math.ceil((hi - lo) / bin_width - 1e-9)))
    edges = lo + bin_width * np.arange(nbins + 1)
    counts, _ = np.histogram(e, edges)
    notes = ()
    if counts.sum() == 0:
        warnings.warn("no levels fall inside the DOS window", RuntimeWarning, stacklevel=2)
        notes = ("empty",)
    return DOSHistogram(edges, counts / bin_width, "quantum", counts,
                        energy_scale=energy_scale, notes=notes)


def classical_dos(params: ControlParams, energy_grid, mc_config: MCConfig = MCConfig()) -> DOSHistogram:
    """rho(E) = (1/2 pi) dV/dE from Monte Carlo volumes V(E) = area{H^c <= E}.

    Parameters are used as given (classical units).  The bin between two
    consecutive grid energies gets rho = (V_hi - V_lo) / (2 pi dE) with a
    binomial standard error.
    """
    classical._check_bounded(params)
    edges = _check_grid(energy_grid)
    if edges.size < 2:
        raise ConfigError("energy_grid: need at least two energies")
    r = classical.bounding_radius(params, float(edges[-1]))
    vol, _ = phase_space_volumes(params, edges, mc_config, radius=r)
    area = (2 * r) ** 2
    dv = np.diff(vol)
    frac = dv / area
    err = area * np.sqrt(np.clip(frac * (1 - frac), 0, None) / mc_config.samples)
    de = np.diff(edges)
    return DOSHistogram(edges, dv / (2 * np.pi * de), "classical",
                        std_error=err / (2 * np.pi * de))


@dataclass(frozen=True)
class ESQPTMarker:
    kind: str
    energy: float
    strength: float
    bin_index: int


def _smooth(v: np.ndarray) -> np.ndarray:
    pad = np.concatenate([v[:1], v, v[-1:]])
    return 0.25 * pad[:-2] + 0.5 * pad[1:-1] + 0.25 * pad[2:]


def detect_esqpt(dos: DOSHistogram, peak_factor: float = 1.5, step_factor: float = 1.5,
                 skip_low: int = 4, smooth: bool = True) -> list[ESQPTMarker]:
    """Peaks and downward steps in a density of states.

    After a [1, 2, 1]/4 smoothing pass, a bin is a peak when it is a strict
    local maximum exceeding ``peak_factor`` times the mean of its shoulders,
    bins i-4, i-3, i+3, i+4.  Logarithmic peaks are broad, so the nearest
    neighbours make a poor baseline.  A step is a boundary where the mean of the two bins below
    exceeds ``step_factor`` times the mean of the two bins above.  The lowest
    ``skip_low`` bins (sparse ground-state region) are ignored, and step
    candidates within two bins of a peak are dropped.
    """
    v = np.asarray(dos.values, dtype=float)
    if v.size < 8:
        raise ConfigError(f"dos: need at least 8 bins, got {v.size}")
    s = _smooth(v) if smooth else v
    centers, edges = dos.centers, dos.bin_edges
    peaks = []
    for i in range(max(4, skip_low), v.size - 4):
        neigh = np.mean([s[i - 4], s[i - 3], s[i + 3], s[i + 4]])
        if s[i] > s[i - 1] and s[i] > s[i + 1] and s[i] > peak_factor * neigh:
            peaks.append(ESQPTMarker("peak", float(centers[i]), float(s[i] / max(neigh, 1e-300)), i))
    steps = []
    for b in range(max(2, skip_low), v.size - 1):
        # boundary b sits between bins b-1 and b
        before = 0.5 * (s[b - 2] + s[b - 1])
        after = 0.5 * (s[b] + s[b + 1])
        if before > step_factor * after and all(abs(b - pk.bin_index) > 2 and abs(b - 1 - pk.bin_index) > 2
                                                 for pk in peaks):
            steps.append((b, before / max(after, 1e-300)))
    merged = []
    for b, ratio in steps:
        if merged and b - merged[-1][-1][0] <= 1:
            merged[-1].append((b, ratio))
        else:
            merged.append([(b, ratio)])
    step_markers = []
    for run in merged:
        b, ratio = max(run, key=lambda t: t[1])
        step_markers.append(ESQPTMarker("step", float(edges[b]), float(ratio), b))
    return sorted(peaks + step_markers, key=lambda m: m.energy)


@dataclass(frozen=True)
class SpacingSeries:
    """Mean level spacing per grid point; ``values`` keyed by sector residue (None = all levels)."""

    grid: np.ndarray
    values: dict
    count: int
    statistic: str

    def minima(self, key=None) -> np.ndarray:
        return self.grid[_local_extrema(self.values[key], np.less)]

    def maxima(self, key=None) -> np.ndarray:
        return self.grid[_local_extrema(self.values[key], np.greater)]


def _local_extrema(v: np.ndarray, cmp) -> np.ndarray:
    if v.size < 3:
        return np.zeros(0, dtype=int)
    inner = cmp(v[1:-1], v[:-2]) & cmp(v[1:-1], v[2:])
    return np.nonzero(inner)[0] + 1


def spacing_of(levels: np.ndarray, statistic: str = "geometric") -> np.ndarray:
    """Mean consecutive gap along the last axis."""
    gaps = np.diff(np.asarray(levels, dtype=float), axis=-1)
    if statistic == "arithmetic":
        return gaps.mean(axis=-1)
    if statistic == "geometric":
        return np.exp(np.log(np.maximum(gaps, np.finfo(float).tiny)).mean(axis=-1))
    raise ConfigError(f"statistic: must be 'geometric' or 'arithmetic', got {statistic!r}")


def mean_level_spacing(sweep: ParameterSweep, count: int = 150, per_sector: bool | None = None,
                       statistic: str = "geometric") -> SpacingSeries:
    """Average gap among the lowest ``count`` levels at each grid point.

    The default geometric mean is sensitive to near-degeneracies; the
    arithmetic mean telescopes to (E_count - E_1)/(count - 1).  With
    ``per_sector`` (default for mu >= 2) each sector contributes its own
    lowest ``count`` levels.
    """
    if count < 2:
        raise ConfigError(f"count: need at least 2 levels, got {count}")
    if per_sector is None:
        per_sector = sweep.mu >= 2
    values = {}
    if per_sector:
        for r in range(sweep.mu):
            values[r] = spacing_of(sweep.sector_energies(r, count), statistic)
    else:
        e = sweep.energies()
        if e.shape[1] < count:
            raise ConfigError(f"count: sweep holds {e.shape[1]} levels, fewer than {count}")
        values[None] = spacing_of(e[:, :count], statistic)
    return SpacingSeries(sweep.grid, values, count, statistic)


@dataclass(frozen=True)
class CrossingEvent:
    param_value: float
    level_pair: tuple
    sectors: tuple
    kind: str
    gap: float
    energy: float


def _sign_changes(d: np.ndarray, tol: np.ndarray):
    """Yield (left, right) sample indices where the sign of ``d`` flips.

    Samples with |d| <= tol count as zero; a flip across a run of zeros is
    reported between the last nonzero sample before and the first after.
    """
    s = np.where(np.abs(d) > tol, np.sign(d), 0.0)
    nz = np.nonzero(s)[0]
    if nz.size < 2:
        return
    flips = np.nonzero(s[nz[1:]] != s[nz[:-1]])[0]
    for f in flips:
        yield int(nz[f]), int(nz[f + 1])


def detect_crossings(sweep: ParameterSweep, gap_threshold: float, energy_window=None,
                     rtol: float = 1e-9, on_tracking_error: str = "raise") -> list[CrossingEvent]:
    """Real (cross-sector) and avoided (same-sector) crossings along a sweep.

    Levels are identified by (sector, index within sector); within a sector
    the index order is stable because tridiagonal blocks have simple spectra.
    A real crossing is a sign change of E_i(s) - E_j(s') for s != s'.  An
    avoided crossing is an interior local minimum below ``gap_threshold`` of
    a within-sector gap.  ``energy_window`` restricts events to absolute
    energies inside (lo, hi).  A level that changes order with two or more
    levels of another sector inside a single grid interval means the grid is
    too coarse; this raises :class:`TrackingError` (or warns when
    ``on_tracking_error="warn"``).
    """
    if gap_threshold <= 0:
        raise ConfigError(f"gap_threshold: must be positive, got {gap_threshold}")
    grid = sweep.grid
    e_abs = sweep.energies("absolute")
    n_per = [int(min(np.count_nonzero(s.sector_labels == r) for s in sweep.spectra)) for r in range(sweep.mu)]
    sectors = [sweep.sector_energies(r, n_per[r], reference="absolute") for r in range(sweep.mu)]
    lo, hi = (-np.inf, np.inf) if energy_window is None else map(float, energy_window)
    events: list[CrossingEvent] = []
    scale = np.maximum(1.0, np.abs(e_abs).max(axis=1) if e_abs.size else 1.0)

    for a in range(sweep.mu):
        for b in range(a + 1, sweep.mu):
            ea, eb = sectors[a], sectors[b]
            d = ea[:, :, None] - eb[:, None, :]
            tol = rtol * scale[:, None, None]
            s = np.where(np.abs(d) > tol, np.sign(d), 0.0)
            candidates = np.nonzero((s.max(axis=0) > 0) & (s.min(axis=0) < 0))
            partners: dict = {}
            for i, j in zip(*candidates):
                for left, right in _sign_changes(d[:, i, j], tol[:, 0, 0]):
                    if right == left + 1:
                        x = grid[left] + (grid[right] - grid[left]) * d[left, i, j] / (d[left, i, j] - d[right, i, j])
                        t = (x - grid[left]) / (grid[right] - grid[left])
                    else:
                        x = 0.5 * (grid[left + 1] + grid[right - 1])
                        t = 0.5
                    energy = (1 - t) * ea[left, i] + t * ea[right, i]
                    partners.setdefault((a, i, left), set()).add(j)
                    partners.setdefault((b, j, left), set()).add(i)
                    if not lo < energy < hi:
                        continue
                    gap = float(np.min(np.abs(d[left:right + 1, i, j])))
                    events.append(CrossingEvent(float(x), (int(i), int(j)), (a, b), "real", gap, float(energy)))
            for (sec, lvl, left), js in partners.items():
                if len(js) > 1:
                    msg = (f"level {lvl} of sector {sec} changes order with levels {sorted(js)} "
                           f"within [{grid[left]}, {grid[left + 1]}]; refine the grid")
                    if on_tracking_error == "raise":
                        raise TrackingError(msg, (float(grid[left]), float(grid[left + 1])))
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)

    for r in range(sweep.mu):
        e = sectors[r]
        gaps = np.diff(e, axis=1)
        for i in range(gaps.shape[1]):
            g = gaps[:, i]
            for t in _local_extrema(g, np.less):
                if g[t] >= gap_threshold:
                    continue
                x = float(grid[t])
                den = g[t - 1] - 2 * g[t] + g[t + 1]
                if den > 0 and np.allclose(np.diff(grid[t - 1:t + 2]), grid[t] - grid[t - 1]):
                    x += 0.5 * (grid[t] - grid[t - 1]) * (g[t - 1] - g[t + 1]) / den
                energy = 0.5 * (e[t, i] + e[t, i + 1])
                if lo < energy < hi:
                    events.append(CrossingEvent(x, (i, i + 1), (r, r), "avoided", float(g[t]), float(energy)))
    events.sort(key=lambda ev: (ev.param_value, ev.sectors, ev.level_pair))
    return events


@dataclass(frozen=True)
class EhrenfestReport:
    """Outcome of the ground-energy derivative test.

    ``order`` is 1, 2 or ``None`` (inconclusive).  Jumps are the
    discontinuities of dE0/dx and d2E0/dx2 at ``critical_param``, obtained by
    extrapolating straight-line fits from both sides; ``ratio1``/``ratio2``
    compare the largest difference jump with the background.
    """

    axis: str
    critical_param: float | None
    order: int | None
    jump_d1: float
    jump_d2: float
    ratio1: float
    ratio2: float
    grid: np.ndarray
    e0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def verdict(self) -> str:
        return {1: "first-order", 2: "second-order"}.get(self.order, "inconclusive")


def _side_fit_jump(x: np.ndarray, y: np.ndarray, x0: float, exclude: float) -> float:
    left = x < x0 - exclude
    right = x > x0 + exclude
    if left.sum() < 2 or right.sum() < 2:
        return float("nan")
    fl = np.polyfit(x[left], y[left], 1)
    fr = np.polyfit(x[right], y[right], 1)
    return float(np.polyval(fr, x0) - np.polyval(fl, x0))


def _jump_ratio(jumps: np.ndarray, scale: float, zone: int, rel_floor: float):
    i = int(np.argmax(np.abs(jumps)))
    mask = np.ones(jumps.size, dtype=bool)
    mask[max(0, i - zone): i + zone + 1] = False
    rms = float(np.sqrt(np.mean(jumps[mask] ** 2))) if mask.any() else 0.0
    floor = max(rms, rel_floor * max(scale, 1e-300))
    return i, float(abs(jumps[i]) / floor)


def ground_energy_classical_units(params_c: ControlParams, source: str = "quantum") -> float:
    """E0 in classical units at classical parameters ``params_c`` with the scaling of ``params_c.n_eff``."""
    if source == "classical":
        return classical.ground_energy(params_c.replace(n_eff=1.0))
    q = ControlParams.from_classical(params_c.mu, params_c.delta, params_c.xi,
                                     n_eff=params_c.n_eff, n_trunc=params_c.n_trunc)
    return float(solve(q, k=1).energies[0]) / q.n_eff ** 2


def ehrenfest_order(template: ControlParams, axis: str, window, h: float, threshold: float = 5.0,
                    source: str = "quantum", zone: int = 2, rel_floor: float = 1e-3,
                    workers: int = 1) -> EhrenfestReport:
    """Classify a ground-state transition by which finite-difference derivative of E0 jumps.

    ``template`` carries classical-unit values of delta and xi together with
    ``n_eff`` and ``n_trunc``; ``window`` and ``h`` are in classical units
    too.  The quantum ground energy is computed at the mapped parameters and
    divided by n_eff**2.  With ``source="classical"`` the closed-form
    classical E0 is used instead.  Order 1 when the largest jump of the
    first difference exceeds ``threshold`` times the RMS of the jumps away
    from it (``zone`` samples each side excluded); otherwise order 2 by the
    same test on the second difference; otherwise inconclusive.
    """
    _check_axis(axis)
    if h <= 0:
        raise ConfigError(f"h: must be positive, got {h}")
    a, b = map(float, window)
    if b <= a:
        raise ConfigError(f"window: need start < stop, got {window}")
    n = int(round((b - a) / h))
    if n < 8:
        raise ConfigError(f"window: needs at least 8 steps of h, got {n}")
    x = a + h * np.arange(n + 1)

    def e0_at(v):
        return ground_energy_classical_units(template.replace(**{axis: float(v)}), source)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            e0 = np.array(list(pool.map(e0_at, x)))
    else:
        e0 = np.array([e0_at(v) for v in x])
    d1 = np.diff(e0) / h
    x1 = 0.5 * (x[1:] + x[:-1])
    d2 = np.diff(e0, 2) / h ** 2
    x2 = x[1:-1]
    jump1 = np.diff(d1)
    jump2 = np.diff(d2)
    i1, ratio1 = _jump_ratio(jump1, float(np.max(np.abs(d1))), zone, rel_floor)
    i2, ratio2 = _jump_ratio(jump2, float(np.max(np.abs(d2))), zone, rel_floor)
    order, crit = None, None
    if ratio1 > threshold:
        order, crit = 1, float(x[i1 + 1])
    elif ratio2 > threshold:
        order = 2
        crit = float(0.5 * (x2[i2] + x2[i2 + 1]))
    exclude = (zone + 1) * h
    j1 = _side_fit_jump(x1, d1, crit, exclude) if crit is not None else 0.0
    j2 = _side_fit_jump(x2, d2, crit, exclude) if crit is not None else 0.0
    return EhrenfestReport(axis, crit, order, j1, j2, ratio1, ratio2, x, e0, d1, d2)
