"""Command-line entry point: ``kpolab <command> [options]``.

Every command builds a :class:`Dataset` and writes it as CSV or JSON.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 physics precondition violated.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__, classical, dynamics, spectral
from .datasets import Column, Dataset
from .errors import ConfigError, NumericalError, PhysicsError, UnboundedHamiltonianError
from .montecarlo import MCConfig
from .params import ControlParams, rescale
from .quantum import full_spectrum

CONFIG_SCHEMA_VERSION = 1
COMMANDS = ("spectrum", "phase-diagram", "dos", "crossings", "spacing", "tunneling", "husimi",
            "ehrenfest", "critical-points")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PHYSICS = 0, 2, 3, 4
UNITS = {"energy": "K", "time": "1/K"}


@dataclass
class RunConfig:
    """Everything that determines a command's output.

    ``grid`` and ``xi_grid`` are (start, stop, count) triples; ``window``
    and ``times`` likewise where used.  ``classical_units`` means delta, xi
    and the grids are classical-limit values mapped through ``n_eff``.
    """

    command: str
    mu: int = 2
    delta: float = 0.0
    xi: float = 0.0
    n_trunc: int | None = None
    n_eff: float = 1.0
    axis: str = "delta"
    grid: tuple | None = None
    xi_grid: tuple | None = None
    levels: int = 50
    reference: str = "ground"
    classical_units: bool = False
    bin_width: float | None = None
    window: tuple | None = None
    peak_factor: float = 1.5
    step_factor: float = 1.5
    count: int = 150
    gap_threshold: float = 1e-2
    times: tuple = (0.0, 100.0, 101)
    time: float = 0.0
    eps_frac: float = 0.02
    region: str = "omega_out"
    resolution: int = 512
    husimi_points: int = 101
    threshold: float = 5.0
    source: str = "quantum"
    seed: int = 0
    samples: int = 100_000
    threads: int = 1
    out: str | None = None
    format: str = "csv"
    schema_version: int = CONFIG_SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def validate(self) -> RunConfig:
        if self.command not in COMMANDS:
            raise ConfigError(f"command: must be one of {COMMANDS}, got {self.command!r}")
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported {self.schema_version!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: must be csv or json, got {self.format!r}")
        if self.axis not in spectral.AXES:
            raise ConfigError(f"axis: must be delta or xi, got {self.axis!r}")
        if self.reference not in spectral.REFERENCES:
            raise ConfigError(f"reference: must be ground or absolute, got {self.reference!r}")
        if self.levels < 1:
            raise ConfigError(f"levels: must be positive, got {self.levels}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be positive, got {self.threads}")
        for name in ("grid", "xi_grid", "window", "times"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, _triple(name, value) if name != "window" else _pair(name, value))
        MCConfig(self.samples, self.seed)
        self.params()
        return self

    def params(self, **override) -> ControlParams:
        values = {"delta": self.delta, "xi": self.xi, **override}
        n_trunc = self.n_trunc if self.n_trunc is not None else max(400, 4 * self.levels)
        if self.classical_units:
            return ControlParams.from_classical(self.mu, values["delta"], values["xi"],
                                                n_eff=self.n_eff, n_trunc=n_trunc)
        return ControlParams(self.mu, values["delta"], values["xi"], n_trunc=n_trunc, n_eff=self.n_eff)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown configuration key")
        data = dict(data)
        for k in ("grid", "xi_grid", "window", "times"):
            if data.get(k) is not None:
                data[k] = tuple(data[k])
        return cls(**data).validate()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """SHA-256 of the canonical config, ignoring output location and thread count."""
        d = self.to_dict()
        for k in ("out", "threads"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _triple(name, value) -> tuple:
    if len(value) != 3:
        raise ConfigError(f"{name}: expected start:stop:count")
    start, stop, count = float(value[0]), float(value[1]), value[2]
    if int(count) != count or count < 1:
        raise ConfigError(f"{name}: count must be a positive integer, got {count}")
    if count > 1 and stop <= start:
        raise ConfigError(f"{name}: stop must exceed start")
    return start, stop, int(count)


def _pair(name, value) -> tuple:
    if len(value) != 2 or float(value[1]) <= float(value[0]):
        raise ConfigError(f"{name}: expected lo:hi with lo < hi")
    return float(value[0]), float(value[1])


def linspace(triple) -> np.ndarray:
    start, stop, count = triple
    return np.linspace(start, stop, count) if count > 1 else np.array([start])


def _meta(cfg: RunConfig, **more) -> dict:
    return {"artifact_version": __version__, "config_hash": cfg.config_hash(), "seed": cfg.seed,
            "units": UNITS, "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "threads")},
            **more}


def _sweep_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.grid is None:
        return np.array([cfg.delta if cfg.axis == "delta" else cfg.xi])
    return linspace(cfg.grid)


def _template(cfg: RunConfig, value: float) -> ControlParams:
    return cfg.params(**{cfg.axis: value})


def _sweep(cfg: RunConfig, reference: str | None = None) -> spectral.ParameterSweep:
    grid = _sweep_grid(cfg)
    template = cfg.params()
    if cfg.classical_units:
        # the scaling map is linear along either axis
        unit = cfg.params(**{cfg.axis: 1.0})
        grid = grid * getattr(unit, cfg.axis)
    return spectral.sweep_spectrum(template, cfg.axis, grid, cfg.levels,
                                   reference=reference or cfg.reference, workers=cfg.threads)


def cmd_spectrum(cfg: RunConfig) -> Dataset:
    sweep = _sweep(cfg)
    grid = _sweep_grid(cfg)
    e = sweep.energies()
    scale = cfg.n_eff ** 2 if cfg.classical_units else 1.0
    rows = []
    for i, v in enumerate(grid):
        labels = sweep.spectra[i].sector_labels
        for lvl in range(e.shape[1]):
            rows.append((float(v), lvl, int(labels[lvl]), float(e[i, lvl] / scale)))
    notes = [w for s in sweep.spectra for w in s.warnings]
    cols = [Column(cfg.axis, "", "sweep parameter"), Column("level", "", "merged level index"),
            Column("sector", "", "residue n mod mu"),
            Column("energy", "K^c" if cfg.classical_units else "K", f"reference={cfg.reference}")]
    return Dataset("kpolab.spectrum/1", cols, rows, _meta(cfg, warnings=notes))


def cmd_phase_diagram(cfg: RunConfig) -> Dataset:
    deltas = _sweep_grid(cfg) if cfg.grid is not None else np.array([cfg.delta])
    xis = linspace(cfg.xi_grid) if cfg.xi_grid is not None else np.array([cfg.xi])
    rows = []
    for d in deltas:
        for x in xis:
            p = ControlParams(cfg.mu, float(d), float(x), n_trunc=max(cfg.mu + 1, 2))
            label = classical.phase_region(p)
            count = None if label.unbounded else len(classical.find_critical_points(p))
            rows.append((float(d), float(x), label.region, label.tilde, count,
                         ";".join(sorted(label.esqpt_kinds)), label.unbounded))
    cols = [Column("delta"), Column("xi"), Column("region"), Column("tilde"),
            Column("stationary_points", "", "empty when unbounded"), Column("esqpt_kinds"),
            Column("unbounded")]
    return Dataset("kpolab.phase_diagram/1", cols, rows, _meta(cfg))


def cmd_critical_points(cfg: RunConfig) -> Dataset:
    pc = rescale(cfg.params())
    cps = classical.find_critical_points(pc)
    rows = [(c.position.q, c.position.p, c.energy, c.kind, c.radius) for c in cps]
    cols = [Column("q"), Column("p"), Column("energy", "K^c"), Column("kind"),
            Column("radius", "", "set for degenerate_circle")]
    label = classical.phase_region(pc)
    return Dataset("kpolab.critical_points/1", cols, rows,
                   _meta(cfg), {"region": str(label), "esqpt_kinds": sorted(label.esqpt_kinds)})


def cmd_dos(cfg: RunConfig) -> Dataset:
    p = cfg.params()
    sol = full_spectrum(p, k=cfg.levels)
    scale = p.n_eff ** 2 if cfg.classical_units else 1.0
    shift = sol.energies[0] if cfg.reference == "ground" else 0.0
    hist = spectral.quantum_dos(sol, cfg.bin_width, cfg.window, shift=shift, energy_scale=scale)
    markers = spectral.detect_esqpt(hist, cfg.peak_factor, cfg.step_factor) if len(hist) >= 8 else []
    rows = [(float(hist.bin_edges[i]), float(hist.bin_edges[i + 1]), int(hist.counts[i]), float(hist.values[i]))
            for i in range(len(hist))]
    cols = [Column("bin_lo", "K^c" if cfg.classical_units else "K"), Column("bin_hi"),
            Column("count"), Column("density", "levels per unit energy")]
    extras = {"markers": [dataclasses.asdict(m) for m in markers], "notes": list(hist.notes) + list(sol.warnings)}
    return Dataset("kpolab.dos/1", cols, rows, _meta(cfg), extras)


def cmd_crossings(cfg: RunConfig) -> Dataset:
    sweep = _sweep(cfg, reference="absolute")
    events = spectral.detect_crossings(sweep, cfg.gap_threshold, energy_window=cfg.window)
    rows = [(ev.param_value, ev.level_pair[0], ev.level_pair[1], ev.sectors[0], ev.sectors[1], ev.kind,
             ev.gap, ev.energy) for ev in events]
    cols = [Column(cfg.axis), Column("level_i", "", "index within sector_a"),
            Column("level_j", "", "index within sector_b"), Column("sector_a"), Column("sector_b"),
            Column("kind"), Column("gap", "K"), Column("energy", "K", "absolute")]
    return Dataset("kpolab.crossings/1", cols, rows, _meta(cfg))


def cmd_spacing(cfg: RunConfig) -> Dataset:
    sweep = _sweep(cfg)
    series = spectral.mean_level_spacing(sweep, cfg.count)
    grid = _sweep_grid(cfg)
    rows = []
    for key, vals in series.values.items():
        for v, s in zip(grid, vals):
            rows.append((float(v), "all" if key is None else int(key), float(s)))
    cols = [Column(cfg.axis), Column("sector", "", "'all' for the merged spectrum"),
            Column("spacing", "K", f"{series.statistic} mean of the first {cfg.count} gaps")]
    extras = {"minima": {str(k): [float(g) for g in series.minima(k)] for k in series.values}}
    return Dataset("kpolab.spacing/1", cols, rows, _meta(cfg), extras)


def _tunneling_point(cfg: RunConfig, value: float, index: int):
    p = _template(cfg, value)
    mask = dynamics.build_region_mask(p, cfg.region, cfg.resolution)
    p = p.replace(n_trunc=max(p.n_trunc if cfg.n_trunc is not None else 0, dynamics.mask_truncation(mask)))
    center = dynamics.initial_center(p, cfg.eps_frac)
    trace = dynamics.effective_tunneling(dynamics.CoherentSpec(center), p, mask, linspace(cfg.times),
                                         MCConfig(cfg.samples, cfg.seed), task=index)
    return trace


def cmd_tunneling(cfg: RunConfig) -> Dataset:
    grid = _sweep_grid(cfg)
    if cfg.threads > 1 and grid.size > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            traces = list(pool.map(lambda a: _tunneling_point(cfg, float(a[1]), a[0]), enumerate(grid)))
    else:
        traces = [_tunneling_point(cfg, float(v), i) for i, v in enumerate(grid)]
    rows, summary = [], []
    for v, tr in zip(grid, traces):
        for t, vol, err, eff in zip(tr.times, tr.volumes, tr.errors, tr.effective):
            rows.append((float(v), float(t), float(vol), float(err), float(eff)))
        summary.append({cfg.axis: float(v), **tr.summary})
    cols = [Column(cfg.axis), Column("time", "1/K"), Column("volume"), Column("std_error"),
            Column("effective", "", "T(t, t0) = V(t) - V(t0)")]
    return Dataset("kpolab.tunneling/1", cols, rows, _meta(cfg), {"summary": summary})


def cmd_husimi(cfg: RunConfig) -> Dataset:
    p = cfg.params()
    mask = dynamics.build_region_mask(p, cfg.region, cfg.resolution)
    p = p.replace(n_trunc=max(p.n_trunc if cfg.n_trunc is not None else 0, dynamics.mask_truncation(mask)))
    center = dynamics.initial_center(p, cfg.eps_frac)
    psi = dynamics.coherent_state(dynamics.CoherentSpec(center), p.n_trunc)
    if cfg.time:
        sol = full_spectrum(p, vectors=True, certify_levels=False)
        psi = dynamics.evolve(psi, sol, cfg.time)
    q0, q1, p0, p1 = mask.bbox
    qs = np.linspace(q0, q1, cfg.husimi_points)
    ps = np.linspace(p0, p1, cfg.husimi_points)
    qq, pp = np.meshgrid(qs, ps, indexing="ij")
    values = dynamics.husimi_grid(psi, qq, pp, check=False)
    rows = [(float(qq.flat[i]), float(pp.flat[i]), float(values.flat[i])) for i in range(values.size)]
    cols = [Column("q"), Column("p"), Column("Q", "", "Husimi function (1/pi)|<alpha|psi>|^2")]
    extras = {"initial_center": [center.q, center.p], "separatrix_energy": mask.separatrix_energy,
              "local_max_energy": mask.local_max_energy, "n_trunc": p.n_trunc}
    return Dataset("kpolab.husimi/1", cols, rows, _meta(cfg), extras)


def cmd_ehrenfest(cfg: RunConfig) -> Dataset:
    if cfg.grid is None:
        raise ConfigError("grid: ehrenfest needs start:stop:count along the axis")
    start, stop, count = cfg.grid
    if count < 9:
        raise ConfigError("grid: ehrenfest needs at least 9 points")
    h = (stop - start) / (count - 1)
    n_trunc = cfg.n_trunc if cfg.n_trunc is not None else 1000
    template = ControlParams(cfg.mu, cfg.delta, cfg.xi, n_trunc=n_trunc, n_eff=cfg.n_eff)
    rep = spectral.ehrenfest_order(template, cfg.axis, (start, stop), h, cfg.threshold, cfg.source,
                                   workers=cfg.threads)
    d1 = np.full(rep.grid.size, math.nan)
    d1[1:-1] = 0.5 * (rep.d1[1:] + rep.d1[:-1])
    d2 = np.full(rep.grid.size, math.nan)
    d2[1:-1] = rep.d2
    rows = [(float(x), float(e), float(a), float(b)) for x, e, a, b in zip(rep.grid, rep.e0, d1, d2)]
    cols = [Column(cfg.axis, "", "classical units"), Column("e0", "K^c"), Column("d1", "", "central difference"),
            Column("d2", "", "second difference")]
    extras = {"verdict": rep.verdict, "order": rep.order, "critical_param": rep.critical_param,
              "jump_d1": rep.jump_d1, "jump_d2": rep.jump_d2, "ratio1": rep.ratio1, "ratio2": rep.ratio2}
    return Dataset("kpolab.ehrenfest/1", cols, rows, _meta(cfg), extras)


HANDLERS = {
    "spectrum": cmd_spectrum, "phase-diagram": cmd_phase_diagram, "dos": cmd_dos,
    "crossings": cmd_crossings, "spacing": cmd_spacing, "tunneling": cmd_tunneling,
    "husimi": cmd_husimi, "ehrenfest": cmd_ehrenfest, "critical-points": cmd_critical_points,
}


def run(cfg: RunConfig) -> Dataset:
    cfg.validate()
    return HANDLERS[cfg.command](cfg)


def _colon_list(kind, n):
    def parse(text):
        parts = text.split(":")
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} colon-separated values, got {text!r}")
        try:
            vals = [kind(x) for x in parts]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
        return tuple(vals)
    return parse


def _grid_arg(text):
    start, stop, count = _colon_list(str, 3)(text)
    try:
        return float(start), float(stop), int(count)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("physics")
    g.add_argument("--config", help="JSON run configuration; command-line flags override it")
    g.add_argument("--mu", type=int)
    g.add_argument("--delta", type=float)
    g.add_argument("--xi", type=float)
    g.add_argument("--n-trunc", dest="n_trunc", type=int)
    g.add_argument("--n-eff", dest="n_eff", type=float)
    g.add_argument("--classical-units", dest="classical_units", action="store_true", default=None,
                   help="delta, xi and grids are classical-limit values scaled by --n-eff")
    g.add_argument("--axis", choices=spectral.AXES)
    g.add_argument("--grid", type=_grid_arg, help="start:stop:count along --axis")
    g.add_argument("--xi-grid", dest="xi_grid", type=_grid_arg, help="start:stop:count (phase-diagram)")
    g.add_argument("--levels", type=int)
    g.add_argument("--reference", choices=spectral.REFERENCES)
    a = common.add_argument_group("analysis")
    a.add_argument("--bin-width", dest="bin_width", type=float)
    a.add_argument("--window", type=_colon_list(float, 2), help="lo:hi energy window")
    a.add_argument("--peak-factor", dest="peak_factor", type=float)
    a.add_argument("--step-factor", dest="step_factor", type=float)
    a.add_argument("--count", type=int, help="levels per curve for spacing")
    a.add_argument("--gap-threshold", dest="gap_threshold", type=float)
    a.add_argument("--times", type=_grid_arg, help="start:stop:count in 1/K")
    a.add_argument("--time", type=float, help="evolution time for husimi")
    a.add_argument("--eps-frac", dest="eps_frac", type=float)
    a.add_argument("--region", choices=("omega_in", "omega_out"))
    a.add_argument("--resolution", type=int)
    a.add_argument("--husimi-points", dest="husimi_points", type=int)
    a.add_argument("--threshold", type=float, help="Ehrenfest jump threshold")
    a.add_argument("--source", choices=("quantum", "classical"))
    r = common.add_argument_group("run")
    r.add_argument("--seed", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--format", choices=("csv", "json"))
    parser = argparse.ArgumentParser(prog="kpolab", description="Kerr parametric oscillator laboratory")
    parser.add_argument("--version", action="version", version=f"kpolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
    data["command"] = args.command
    if "KPOLAB_THREADS" in environ and args.threads is None:
        try:
            data["threads"] = int(environ["KPOLAB_THREADS"])
        except ValueError as exc:
            raise ConfigError(f"threads: KPOLAB_THREADS must be an integer, got {environ['KPOLAB_THREADS']!r}") from exc
    for f in dataclasses.fields(RunConfig):
        if f.name in ("command", "extra", "schema_version"):
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    out = data.get("out")
    out_dir = environ.get("KPOLAB_OUT_DIR")
    if out and out_dir and not os.path.isabs(out):
        data["out"] = os.path.join(out_dir, out)
    return RunConfig.from_dict(data)


def write(dataset: Dataset, cfg: RunConfig, stdout=None):
    text = dataset.dumps(cfg.format)
    if cfg.out:
        parent = os.path.dirname(cfg.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        (stdout or sys.stdout).write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dataset = run(cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        write(dataset, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhysicsError, UnboundedHamiltonianError) as exc:
        print(f"physics precondition: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
