"""Classical limit: energy surface, stationary points and phase-diagram regions.

Coordinates are those of the N_eff = 1 convention, alpha = (q + i p)/sqrt(2);
``params.delta`` and ``params.xi`` are used as given.  Use
:func:`kpolab.params.rescale` first to work in classical-limit units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GradientError, UnboundedHamiltonianError
from .params import ControlParams

KINDS = ("global_min", "local_min", "local_max", "hyperbolic", "inflection",
         "monkey_saddle", "degenerate_circle")

LINE_RTOL = 1e-12
GRADIENT_TOL = 1e-10


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValueError(f"phase point must be finite, got ({self.q}, {self.p})")

    @property
    def alpha(self) -> complex:
        return complex(self.q, self.p) / math.sqrt(2.0)

    @property
    def radius(self) -> float:
        return math.hypot(self.q, self.p)

    def rotated(self, angle: float) -> PhasePoint:
        c, s = math.cos(angle), math.sin(angle)
        return PhasePoint(c * self.q - s * self.p, s * self.q + c * self.p)


@dataclass(frozen=True)
class CriticalPoint:
    """Stationary point of H^c.

    For ``kind == "degenerate_circle"`` the position is a representative
    point on the circle and ``radius`` holds sqrt(delta).
    """

    position: PhasePoint
    energy: float
    kind: str
    radius: float | None = None


def drive_coefficient(mu: int, xi: float) -> float:
    return 2.0 * xi / 2.0 ** (mu / 2.0)


def _drive_poly(q, p, mu):
    if mu == 1:
        return q
    if mu == 2:
        return q * q - p * p
    if mu == 3:
        return q ** 3 - 3.0 * q * p * p
    return q ** 4 - 6.0 * q * q * p * p + p ** 4


def _drive_grad(q, p, mu):
    if mu == 1:
        return np.ones_like(q), np.zeros_like(p)
    if mu == 2:
        return 2.0 * q, -2.0 * p
    if mu == 3:
        return 3.0 * (q * q - p * p), -6.0 * q * p
    return 4.0 * q ** 3 - 12.0 * q * p * p, -12.0 * q * q * p + 4.0 * p ** 3


def classical_energy(q, p, params: ControlParams):
    """H^c(q, p) = -(delta/2) r^2 + r^4/4 - (2 xi / 2^(mu/2)) Re[(q + i p)^mu].

    Vectorized over ``q`` and ``p``.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    r2 = q * q + p * p
    e = -0.5 * params.delta * r2 + 0.25 * r2 * r2 - drive_coefficient(params.mu, params.xi) * _drive_poly(q, p, params.mu)
    return e if e.ndim else float(e)


def energy_gradient(q, p, params: ControlParams):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    r2 = q * q + p * p
    c = drive_coefficient(params.mu, params.xi)
    fq, fp = _drive_grad(q, p, params.mu)
    return (r2 - params.delta) * q - c * fq, (r2 - params.delta) * p - c * fp


def hamiltonian_flow(x: PhasePoint, params: ControlParams) -> tuple[float, float]:
    """(dq/dt, dp/dt) = (dH/dp, -dH/dq)."""
    hq, hp = energy_gradient(x.q, x.p, params)
    return float(hp), float(-hq)


def hessian(x: PhasePoint, params: ControlParams) -> np.ndarray:
    q, p, mu = x.q, x.p, params.mu
    r2 = q * q + p * p
    c = drive_coefficient(mu, params.xi)
    hqq = r2 + 2 * q * q - params.delta
    hpp = r2 + 2 * p * p - params.delta
    hqp = 2 * q * p
    if mu == 2:
        hqq -= 2 * c
        hpp += 2 * c
    elif mu == 3:
        hqq -= 6 * c * q
        hpp += 6 * c * q
        hqp += 6 * c * p
    elif mu == 4:
        hqq -= c * (12 * q * q - 12 * p * p)
        hpp -= c * (12 * p * p - 12 * q * q)
        hqp += 24 * c * q * p
    return np.array([[hqq, hqp], [hqp, hpp]])


def _third_derivative(x: PhasePoint, params: ControlParams, u) -> float:
    """D^3 H[u, u, u] at x."""
    q, p, mu = x.q, x.p, params.mu
    a, b = u
    c = drive_coefficient(mu, params.xi)
    # quartic part r^4/4: d3 tensor entries qqq=6q, qqp=2p, qpp=2q, ppp=6p
    t = 6 * q * a ** 3 + 3 * 2 * p * a * a * b + 3 * 2 * q * a * b * b + 6 * p * b ** 3
    if mu == 3:
        t -= c * (6 * a ** 3 - 3 * 6 * a * b * b)
    elif mu == 4:
        t -= c * (24 * q * a ** 3 - 3 * 24 * p * a * a * b - 3 * 24 * q * a * b * b + 24 * p * b ** 3)
    return float(t)


def _fourth_derivative(params: ControlParams, u) -> float:
    a, b = u
    t = 6.0 * (a * a + b * b) ** 2
    if params.mu == 4:
        t -= drive_coefficient(4, params.xi) * 24.0 * (a ** 4 - 6 * a * a * b * b + b ** 4)
    return float(t)


def _gradient_scale(x: PhasePoint, params: ControlParams) -> float:
    r = x.radius
    return max(1.0, r ** 3, abs(params.delta) * r, abs(params.xi) * max(1.0, r) ** (params.mu - 1))


def _local_kind(x: PhasePoint, params: ControlParams) -> str:
    """Classification without the global/local distinction for minima."""
    lam, vec = np.linalg.eigh(hessian(x, params))
    l1, l2 = lam
    tol1 = 1e-8 * max(1.0, abs(l2))
    tol2 = 1e-8 * max(1.0, abs(l1))
    z1, z2 = abs(l1) <= tol1, abs(l2) <= tol2
    if not z1 and not z2:
        if l1 > 0:
            return "min"
        if l2 < 0:
            return "local_max"
        return "hyperbolic"
    if z1 != z2:
        u = vec[:, 0] if z1 else vec[:, 1]
        other = l2 if z1 else l1
        c3 = _third_derivative(x, params, u)
        if abs(c3) > 1e-8 * max(1.0, abs(other)):
            return "inflection"
        c4 = _fourth_derivative(params, u)
        if np.sign(c4) == np.sign(other):
            return "min" if other > 0 else "local_max"
        return "hyperbolic"
    # both directions flat: look at the cubic, then quartic, angular forms
    theta = np.linspace(0.0, 2 * np.pi, 721)[:-1]
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    c3 = np.array([_third_derivative(x, params, u) for u in dirs])
    if np.max(np.abs(c3)) > 1e-8:
        s = np.sign(c3)
        # a binary cubic with three real root lines has six sign changes around the circle
        changes = int(np.count_nonzero(s != np.roll(s, 1)))
        return "monkey_saddle" if changes >= 6 else "hyperbolic"
    c4 = np.array([_fourth_derivative(params, u) for u in dirs])
    if np.all(c4 > 0):
        return "min"
    if np.all(c4 < 0):
        return "local_max"
    return "hyperbolic"


def _check_bounded(params: ControlParams):
    if params.mu == 4 and abs(params.xi) >= 0.5:
        raise UnboundedHamiltonianError(
            f"mu=4 with |xi|={abs(params.xi)} >= 1/2: the classical Hamiltonian is unbounded below"
        )


def _snap(value: float, scale: float) -> float:
    return 0.0 if abs(value) <= LINE_RTOL * max(scale, 1e-300) else value


def real_cubic_roots(delta: float, xi1: float) -> np.ndarray:
    """Real roots of q^3 - delta q - sqrt(2) xi1 = 0, ascending, duplicates merged.

    Trigonometric form for three real roots, Cardano for one, one Newton polish.
    """
    s = math.sqrt(2.0) * xi1
    disc = xi1 * xi1 / 2.0 - delta ** 3 / 27.0
    disc = _snap(disc, max(xi1 * xi1 / 2.0, abs(delta) ** 3 / 27.0))
    if disc > 0:
        # one real root
        sq = math.sqrt(disc)
        roots = [np.cbrt(s / 2.0 + sq) + np.cbrt(s / 2.0 - sq)]
    elif disc == 0:
        if delta == 0:
            roots = [0.0]
        else:
            roots = [3.0 * s / delta, -1.5 * s / delta]
    else:
        m = 2.0 * math.sqrt(delta / 3.0)
        arg = 3.0 * s / (delta * m)
        phi = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [m * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    out = []
    for r in roots:
        f = r ** 3 - delta * r - s
        fp = 3 * r * r - delta
        if fp != 0 and disc != 0:
            r -= f / fp
        out.append(float(r))
    return np.array(sorted(out))


def _positions(params: ControlParams) -> list[PhasePoint]:
    mu, d, xi = params.mu, params.delta, params.xi
    pts = [PhasePoint(0.0, 0.0)]
    if mu == 1:
        return [PhasePoint(float(q), 0.0) for q in real_cubic_roots(d, xi)]
    if mu == 2:
        a = _snap(d - 2 * xi, abs(d) + 2 * abs(xi))
        b = _snap(d + 2 * xi, abs(d) + 2 * abs(xi))
        if a > 0:
            s = math.sqrt(a)
            pts += [PhasePoint(0.0, s), PhasePoint(0.0, -s)]
        if b > 0:
            s = math.sqrt(b)
            pts += [PhasePoint(s, 0.0), PhasePoint(-s, 0.0)]
        return pts
    if mu == 3:
        rad = _snap(9 * xi * xi + 8 * d, 9 * xi * xi + 8 * abs(d))
        if rad >= 0:
            root = math.sqrt(rad)
            for qv in ((3 * xi + root) / (2 * math.sqrt(2)), (3 * xi - root) / (2 * math.sqrt(2))):
                pts += [PhasePoint(qv, 0.0),
                        PhasePoint(-0.5 * qv, 0.5 * math.sqrt(3) * abs(qv)),
                        PhasePoint(-0.5 * qv, -0.5 * math.sqrt(3) * abs(qv))]
        return pts
    if d > 0:
        qa = math.sqrt(d / (1 - 2 * xi))
        qd = math.sqrt(d / (2 * (1 + 2 * xi)))
        pts += [PhasePoint(0.0, qa), PhasePoint(0.0, -qa), PhasePoint(qa, 0.0), PhasePoint(-qa, 0.0),
                PhasePoint(qd, qd), PhasePoint(-qd, -qd), PhasePoint(qd, -qd), PhasePoint(-qd, qd)]
    return pts


def _dedupe(points: list[PhasePoint], tol: float = 1e-9) -> list[PhasePoint]:
    out: list[PhasePoint] = []
    for pt in points:
        if all(math.hypot(pt.q - o.q, pt.p - o.p) > tol * max(1.0, pt.radius) for o in out):
            out.append(pt)
    return out


def find_critical_points(params: ControlParams) -> list[CriticalPoint]:
    """All real stationary points of H^c with energies and stability labels.

    Closed forms per drive order; with ``xi == 0`` and ``delta > 0`` the
    minima form a circle, returned as a single ``degenerate_circle`` entry
    next to the local maximum at the origin.
    """
    _check_bounded(params)
    if params.xi == 0.0 and params.delta > 0:
        r = math.sqrt(params.delta)
        return [
            CriticalPoint(PhasePoint(0.0, 0.0), 0.0, "local_max"),
            CriticalPoint(PhasePoint(r, 0.0), -params.delta ** 2 / 4.0, "degenerate_circle", radius=r),
        ]
    pts = _dedupe(_positions(params))
    energies = [classical_energy(pt.q, pt.p, params) for pt in pts]
    e_low = min(energies)
    out = []
    for pt, e in zip(pts, energies):
        kind = _local_kind(pt, params)
        if kind == "min":
            kind = "global_min" if e - e_low <= 1e-10 * max(1.0, abs(e_low)) else "local_min"
        out.append(CriticalPoint(pt, float(e), kind))
    return out


def classify_stationary(x: PhasePoint, params: ControlParams) -> str:
    """Stability label of a stationary point from the Hessian signature.

    Degenerate Hessians are resolved by the cubic (inflection / monkey saddle)
    and quartic directional terms.  Minima are ``global_min`` when their
    energy equals the lowest stationary energy within 1e-10.
    """
    hq, hp = energy_gradient(x.q, x.p, params)
    if math.hypot(hq, hp) > 1e-8 * _gradient_scale(x, params):
        raise GradientError(f"({x.q}, {x.p}) is not stationary: |grad H| = {math.hypot(hq, hp):.3e}")
    kind = _local_kind(x, params)
    if kind != "min":
        return kind
    e = classical_energy(x.q, x.p, params)
    e_low = min(cp.energy for cp in find_critical_points(params))
    return "global_min" if e - e_low <= 1e-10 * max(1.0, abs(e_low)) else "local_min"


def ground_energy(params: ControlParams) -> float:
    """Classical ground energy: lowest stationary energy."""
    return min(cp.energy for cp in find_critical_points(params))


def separatrix_energy(params: ControlParams) -> float:
    hyp = [cp.energy for cp in find_critical_points(params) if cp.kind == "hyperbolic"]
    if not hyp:
        raise ValueError("no hyperbolic point at these parameters")
    return min(hyp)


@dataclass(frozen=True)
class PhaseRegionLabel:
    mu: int
    region: str
    tilde: bool
    esqpt_kinds: frozenset
    unbounded: bool = False

    def __str__(self):
        return self.region + ("~" if self.tilde else "")


_ESQPT = {
    1: {"I": (), "II": ("peak", "step"), "boundary": ("peak",)},
    2: {"I": (), "II": ("peak",), "III": ("peak", "step")},
    3: {"I": (), "spinodal": ("peak",), "II": ("peak", "step"), "III-line": ("peak",),
        "IV": ("peak", "step"), "V-line": ("peak",), "VI": ("peak", "step")},
    4: {"I": (), "II": ("peak", "step"), "unbounded": ()},
}


def _on_line(value: float, line: float, scale: float) -> bool:
    return abs(value - line) <= LINE_RTOL * max(1.0, abs(scale))


def phase_region(params: ControlParams) -> PhaseRegionLabel:
    """Region of the (delta, xi) phase diagram from the analytic boundaries.

    Boundary lines are reported under their own labels.  ``xi < 0`` gives the
    mirrored (tilde) regions.
    """
    mu, d, xi = params.mu, params.delta, params.xi
    ax = abs(xi)
    unbounded = False
    if mu == 1:
        edge = 3.0 * (xi * xi / 2.0) ** (1.0 / 3.0)
        region = "boundary" if _on_line(d, edge, edge) and xi != 0 else ("I" if d < edge else "II")
    elif mu == 2:
        region = "I" if d <= -2 * ax else ("II" if d <= 2 * ax else "III")
    elif mu == 3:
        spin, line3 = -9.0 * xi * xi / 8.0, -xi * xi
        if xi != 0 and _on_line(d, spin, spin):
            region = "spinodal"
        elif xi != 0 and _on_line(d, line3, line3):
            region = "III-line"
        elif d == 0:
            region = "V-line"
        elif d < spin:
            region = "I"
        elif d < line3:
            region = "II"
        elif d < 0:
            region = "IV"
        else:
            region = "VI"
    else:
        if ax >= 0.5:
            region, unbounded = "unbounded", True
        else:
            region = "I" if d <= 0 else "II"
    kinds = _ESQPT[mu][region]
    if xi == 0:
        # non-driven: only the local maximum at the origin for delta > 0
        kinds = ("step",) if d > 0 else ()
    return PhaseRegionLabel(mu, region, xi < 0, frozenset(kinds), unbounded)


def bounding_radius(params: ControlParams, energy: float) -> float:
    """Radius R such that H^c > ``energy`` everywhere outside the disk of radius R."""
    _check_bounded(params)
    c = abs(drive_coefficient(params.mu, params.xi))
    quart = 0.25 - (c if params.mu == 4 else 0.0)

    def lower(r):
        drive = c * r ** params.mu if params.mu < 4 else 0.0
        return quart * r ** 4 - 0.5 * abs(params.delta) * r * r - drive

    r = 1.0
    while lower(r) <= energy:
        r *= 1.5
    return r


def contour_radius(params: ControlParams, energy: float, n_angles: int = 720) -> float:
    """Largest radius at which the level set H^c = ``energy`` is reached along any ray."""
    r_hi = bounding_radius(params, energy)
    theta = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    r = np.linspace(0.0, r_hi, 4001)
    qq = np.outer(np.cos(theta), r)
    pp = np.outer(np.sin(theta), r)
    below = classical_energy(qq, pp, params) <= energy
    if not below.any():
        return 0.0
    return float(r[np.nonzero(below.any(axis=0))[0].max()])
