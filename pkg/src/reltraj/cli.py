"""Command line front end: configuration, runs, column files and manifests.

Every subcommand builds one :class:`RunConfig` from built-in defaults, an
optional YAML/JSON config file (``--config``) and the command-line flags,
in that order of precedence.  Results go to one directory per invocation
together with ``report.json`` and ``manifest.json``.

Exit status: 0 success, 2 configuration error, 3 numerical breakdown,
4 verification failure.
"""

from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field, fields
import hashlib
import json
import math
import os
from pathlib import Path
import sys
import time
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .dynamics import compute_fields, initial_state
from .errors import ConfigurationError, NumericalBreakdown, SpanError, VerificationFailure
from .integrator import IntegratorConfig, SolutionRecord, dense_eval, dense_eval_many, evolve
from .lorentz import BoostParams, boost_events, boosted_conservation
from .model import GridSpec, PhysicalParams, build_grid
from .observables import (
    conservation_report,
    flux_at,
    max_speed_ratio,
    slice_constant_t,
    slice_coverage_stop,
)
from .verify import (
    ScaleTransform,
    apply_scale,
    convergence_error,
    grid_for,
    metric_history,
    nonrelativistic_check,
    scale_invariance_error,
)

ENV_OUTPUT_ROOT = "RELTRAJ_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

SUBCOMMANDS = ("simulate", "slice", "boost", "conserve", "scale-check",
               "converge", "classical-check")
# the published scale comparison starts from c = 3; files and flags still win
COMMAND_DEFAULTS = {"scale-check": {"c": 3.0}}

FMT = "{:.12g}"


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    """Flat run configuration; keys mirror the command-line flags.

    Velocities in ``v`` are numbers (absolute) or strings such as ``"0.8c"``
    (fractions of ``c``).  ``tmax`` is the ensemble-time horizon of runs
    that sample fixed ``T`` values; slicing runs integrate until every
    requested slice is covered, but never beyond ``tau_limit``.
    """

    a: float = 0.5
    hbar: float = 1.0
    mass: float = 1.0
    c: float = 1.5
    grid: str = "tanh"
    ng: int = 53
    cmax: float = 5.0
    qmax: float = 5.0
    beta_grid: float = 0.19
    order: int = 4
    tmax: float = 10.0
    tau_limit: float = 200.0
    sample_dt: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    slices: list = field(default_factory=lambda: [float(k) for k in range(16)])
    t_prime_slices: Optional[list] = field(default_factory=lambda: [0.0, 2.0, 5.0, 10.0, 15.0])
    v: list = field(default_factory=lambda: ["0.2c", "0.4c", "0.8c"])
    zeta: float = 10.0 / 3.0
    eta: float = math.sqrt(2.5)
    converge_sizes: list = field(default_factory=lambda: [53, 83])
    converge_step: int = 10
    classical_c: list = field(default_factory=lambda: [3.0, 10.0])
    classical_t: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0])
    classical_climit: float = 2.0
    rms_tol: float = 3e-3
    mean_tol: float = 5e-3
    scale_tol: float = 1e-2
    classical_tol: float = 1e-2
    out: Optional[str] = None
    format: str = "csv"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**{k: v for k, v in data.items() if v is not None or k in ("out", "t_prime_slices")})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        try:
            self.ng = int(self.ng)
            self.order = int(self.order)
            self.converge_step = int(self.converge_step)
            for name in ("a", "hbar", "mass", "c", "cmax", "qmax", "beta_grid", "tmax",
                         "tau_limit", "sample_dt", "rtol", "atol", "zeta", "eta",
                         "classical_climit", "rms_tol", "mean_tol", "scale_tol",
                         "classical_tol"):
                setattr(self, name, float(getattr(self, name)))
            self.slices = [float(s) for s in self.slices]
            if self.t_prime_slices is not None:
                self.t_prime_slices = [float(s) for s in self.t_prime_slices]
            self.converge_sizes = [int(n) for n in self.converge_sizes]
            self.classical_c = [float(c) for c in self.classical_c]
            self.classical_t = [float(t) for t in self.classical_t]
            self.v = [v if isinstance(v, str) else float(v) for v in self.v]
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed config value: {exc}") from exc
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.format!r}")
        if not (self.tmax >= 0 and self.tau_limit > 0 and self.sample_dt > 0):
            raise ConfigurationError("tmax must be >= 0; tau_limit and sample_dt > 0")
        # component invariants
        self.params()
        self.grid_spec()
        self.integrator(0.0, self.tmax)
        self.velocities()
        ScaleTransform(self.zeta, self.eta)

    def params(self, c: Optional[float] = None) -> PhysicalParams:
        return PhysicalParams(a=self.a, hbar=self.hbar, m=self.mass,
                              c=self.c if c is None else c)

    def grid_spec(self, n_points: Optional[int] = None) -> GridSpec:
        return GridSpec(kind=self.grid, n_points=self.ng if n_points is None else n_points,
                        c_max=self.cmax, q_max=self.qmax, beta_grid=self.beta_grid,
                        order=self.order)

    def integrator(self, lo: float, hi: float, output_times=()) -> IntegratorConfig:
        return IntegratorConfig(rtol=self.rtol, atol=self.atol, t_span=(lo, hi),
                                output_times=tuple(output_times))

    def velocities(self, c: Optional[float] = None) -> list:
        c = self.c if c is None else c
        out = []
        for v in self.v:
            value = parse_velocity(v, c)
            BoostParams(value, c)
            out.append(value)
        return out

    def boosted_slices(self) -> list:
        """Slices ``t'`` of the boosted frames; ``None`` reuses ``slices``."""
        return list(self.slices if self.t_prime_slices is None else self.t_prime_slices)


def parse_velocity(value, c: float) -> float:
    """``0.8c`` -> ``0.8 * c``; plain numbers are absolute velocities."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    try:
        if text.endswith("c"):
            return float(text[:-1] or 1.0) * c
        return float(text)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse velocity {value!r}") from exc


def parse_slices(text: str) -> list:
    """``"0:15"`` (inclusive, unit step), ``"0:15:5"`` or ``"0,2,5"``; empty -> no slices."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError(text)
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1.0
            if step <= 0:
                raise ValueError("step must be positive")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [lo + k * step for k in range(max(count, 0))]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse slice list {text!r}") from exc


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


# ---------------------------------------------------------------- output


@dataclass
class Check:
    metric: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"metric": self.metric, "value": _num(self.value),
                "tolerance": _num(self.tolerance), "pass": bool(self.passed),
                "detail": self.detail}


def _num(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


class OutputDir:
    """One run directory; tracks every file written for the manifest."""

    def __init__(self, path: Path, fmt: str):
        self.path = Path(path)
        self.fmt = fmt
        self.files: list[Path] = []
        try:
            self.path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"cannot create output directory {self.path}: {exc}") from exc
        if not os.access(self.path, os.W_OK):
            raise ConfigurationError(f"output directory {self.path} is not writable")

    def columns(self, stem: str, header: Sequence[str], cols: Sequence) -> Path:
        """Write equal-length columns as CSV or JSON at 12 significant digits."""
        arrays = [np.asarray(c, dtype=float).ravel() for c in cols]
        if len({a.size for a in arrays}) > 1:
            raise ValueError(f"columns of {stem} differ in length")
        rows = np.column_stack(arrays) if arrays else np.empty((0, 0))
        if self.fmt == "csv":
            path = self.path / f"{stem}.csv"
            lines = [",".join(header)]
            lines += [",".join(FMT.format(v) for v in row) for row in rows]
            text = "\n".join(lines) + "\n"
        else:
            path = self.path / f"{stem}.json"
            data = {"columns": list(header),
                    "rows": [[float(FMT.format(v)) for v in row] for row in rows]}
            text = json.dumps(data, indent=1) + "\n"
        self._write(path, text)
        return path

    def json(self, name: str, data) -> Path:
        path = self.path / name
        self._write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
        return path

    def _write(self, path: Path, text: str) -> None:
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        if path not in self.files:
            self.files.append(path)

    def manifest(self, payload: dict) -> Path:
        entries = []
        for p in self.files:
            entries.append({"path": p.name, "bytes": p.stat().st_size,
                            "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        payload = dict(payload, files=entries)
        path = self.path / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------- plot data


def sample_taus(record: SolutionRecord, dt: float, extra=()) -> np.ndarray:
    """Multiples of ``dt`` inside the record span, plus ``extra``, sorted."""
    lo, hi = record.span
    k = np.arange(math.ceil(lo / dt - 1e-9), math.floor(hi / dt + 1e-9) + 1)
    taus = np.clip(k * dt, lo, hi)
    return np.unique(np.concatenate([taus, [t for t in extra if lo <= t <= hi]]))


def trajectory_columns(record: SolutionRecord, taus):
    """``(C, T, x, ct)`` for every trajectory, ordered by label then ``T``."""
    grid = grid_for(record)
    n = grid.n
    Ys = dense_eval_many(record, np.asarray(taus, dtype=float))
    t, x = Ys[:, :n], Ys[:, n:2 * n]
    c = record.params.c
    C = np.repeat(grid.C, len(taus))
    T = np.tile(np.asarray(taus, dtype=float), n)
    return C, T, x.T.ravel(), c * t.T.ravel()


def contour_columns(record: SolutionRecord, taus):
    """``(T, x, ct)`` along constant-``T`` leaves, ordered by ``T`` then label."""
    grid = grid_for(record)
    n = grid.n
    Ys = dense_eval_many(record, np.asarray(taus, dtype=float))
    c = record.params.c
    T = np.repeat(np.asarray(taus, dtype=float), n)
    return T, Ys[:, n:2 * n].ravel(), c * Ys[:, :n].ravel()


def gamma_columns(record: SolutionRecord, taus):
    grid = grid_for(record)
    gam = metric_history(record, taus, grid)
    T = np.repeat(np.asarray(taus, dtype=float), grid.n)
    return T, np.tile(grid.C, len(taus)), gam.ravel()


def potential_columns(record: SolutionRecord, taus):
    grid = grid_for(record)
    rows = [compute_fields(record.state(record.index_of(t)), grid, record.params).Q
            for t in taus]
    T = np.repeat(np.asarray(taus, dtype=float), grid.n)
    return T, np.tile(grid.C, len(taus)), np.ravel(rows)


def flux_columns(record: SolutionRecord, taus):
    """``(ct, x, j0, j1)`` on constant-``T`` leaves (a flux surface)."""
    grid = grid_for(record)
    out = [[], [], [], []]
    for tau in taus:
        k = int(np.searchsorted(record.taus, tau))
        if k < record.taus.size and record.taus[k] == tau:
            st = record.state(k)
        else:
            st = dense_eval(record, float(tau))
        s = flux_at(st, grid, record.params, record.frame_v)
        for j, col in enumerate((s.ct, s.x, s.j0, s.j1)):
            out[j].append(col)
    return tuple(np.concatenate(col) if col else np.empty(0) for col in out)


def slice_columns(reports, grid, v_over_c=None):
    """``(t_slice, C, x, j0, j1)`` for every sample of every slice.

    With ``v_over_c`` a sixth column records the frame of boosted slices.
    """
    out = [[], [], [], [], []]
    for rep in reports:
        s = rep.samples
        out[0].append(np.full(len(s), rep.t_slice))
        out[1].append(grid.C[s.traj_index])
        out[2].append(s.x)
        out[3].append(s.j0)
        out[4].append(s.j1)
    cols = tuple(np.concatenate(col) if col else np.empty(0) for col in out)
    if v_over_c is not None:
        cols += (np.full(cols[0].size, v_over_c),)
    return cols


def emit_plot_data(out: OutputDir, stem: str, kind: str, source, taus=None, grid=None,
                   v_over_c=None) -> Path:
    """Write one figure panel's data file.

    ``kind`` is one of ``trajectories``, ``contours``, ``gamma``,
    ``potential``, ``flux`` (these read a record at ``taus``) or ``slices``
    (reads a list of slice reports on ``grid``).
    """
    if kind == "trajectories":
        return out.columns(stem, ("C", "tau", "x", "ct"), trajectory_columns(source, taus))
    if kind == "contours":
        return out.columns(stem, ("tau", "x", "ct"), contour_columns(source, taus))
    if kind == "gamma":
        return out.columns(stem, ("tau", "C", "gamma"), gamma_columns(source, taus))
    if kind == "potential":
        return out.columns(stem, ("tau", "C", "Q"), potential_columns(source, taus))
    if kind == "flux":
        return out.columns(stem, ("ct", "x", "j0", "j1"), flux_columns(source, taus))
    if kind == "slices":
        header = ("t_slice", "C", "x", "j0", "j1") + (() if v_over_c is None else ("v_over_c",))
        return out.columns(stem, header, slice_columns(source, grid, v_over_c))
    raise ValueError(f"unknown plot kind {kind!r}")


# ---------------------------------------------------------------- runs


def integer_times(tmax: float) -> list:
    return [float(k) for k in range(int(math.floor(tmax + 1e-9)) + 1)]


def fixed_time_run(cfg: RunConfig, params: PhysicalParams, spec: GridSpec,
                   output_times: Sequence[float]) -> SolutionRecord:
    """Forward run to ``max(output_times)`` with those times as stored steps."""
    grid = build_grid(spec, params.a)
    hi = max(output_times) if len(output_times) else cfg.tmax
    return evolve(initial_state(params, grid), cfg.integrator(0.0, hi, output_times), params, grid)


def coverage_run(cfg: RunConfig, params: PhysicalParams, spec: GridSpec,
                 t_slices: Sequence[float], frames: Sequence[tuple] = ()) -> SolutionRecord:
    """Run just long enough to cover every slice in every frame.

    ``frames`` holds ``(v, t_prime_slices)`` pairs in addition to the
    stationary ``t_slices``.
    """
    grid = build_grid(spec, params.a)
    requests = [(0.0, list(t_slices))] + [(v, list(ts)) for v, ts in frames]
    requests = [(v, ts) for v, ts in requests if ts]
    if not requests:
        return evolve(initial_state(params, grid), cfg.integrator(0.0, 0.0), params, grid)
    stops = [slice_coverage_stop(min(ts), max(ts), params.c, v) for v, ts in requests]

    def stop(state, direction):
        return all(s(state, direction) for s in stops)

    # backward events are needed when a slice is earlier than the initial leaf
    need_back = any(v != 0.0 or min(ts) < 0 for v, ts in requests)
    lo = -cfg.tau_limit if need_back else 0.0
    need_fwd = any(v != 0.0 or max(ts) > 0 for v, ts in requests)
    hi = cfg.tau_limit if need_fwd else 0.0
    return evolve(initial_state(params, grid), cfg.integrator(lo, hi), params, grid, stop=stop)


def _beta_tag(v: float, c: float) -> str:
    return f"b{v / c:.6g}"


# ---------------------------------------------------------------- subcommands


def cmd_simulate(cfg: RunConfig, out: OutputDir) -> dict:
    params, spec = cfg.params(), cfg.grid_spec()
    times = integer_times(cfg.tmax)
    if cfg.tmax not in times:
        times.append(cfg.tmax)
    rec = fixed_time_run(cfg, params, spec, times)
    taus = sample_taus(rec, cfg.sample_dt, times)
    emit_plot_data(out, "trajectories", "trajectories", rec, taus)
    emit_plot_data(out, "contours", "contours", rec, times)
    emit_plot_data(out, "gamma", "gamma", rec, times)
    emit_plot_data(out, "potential", "potential", rec, times)
    grid = grid_for(rec)
    drift = float(np.max(np.abs(rec.component("x") - grid.C)))
    return {"summary": {"steps": int(rec.taus.size), "span": list(rec.span),
                        "max_speed_ratio": max_speed_ratio(rec, params.c),
                        "max_abs_x_minus_C": drift},
            "checks": []}


def _stationary_checks(cfg: RunConfig, rep, params) -> list:
    checks = [Check("min_j0", float(min((s.samples.j0.min() for s in rep.slices), default=0.0)),
                    0.0, all(np.all(s.samples.j0 >= 0) for s in rep.slices),
                    "density non-negative on every sampled event")]
    if rep.integrals.size:
        checks.append(Check("relative_rms", rep.relative_rms, cfg.rms_tol,
                            rep.relative_rms < cfg.rms_tol))
        if params.a > 0:
            analytic = params.c * math.sqrt(math.pi / params.a)
            dev = abs(rep.mean / analytic - 1)
            checks.append(Check("mean_vs_analytic", dev, cfg.mean_tol, dev < cfg.mean_tol,
                                f"analytic c*sqrt(pi/a) = {analytic:.12g}"))
    return checks


def cmd_slice(cfg: RunConfig, out: OutputDir) -> dict:
    params, spec = cfg.params(), cfg.grid_spec()
    rec = coverage_run(cfg, params, spec, cfg.slices)
    grid = grid_for(rec)
    reports = [slice_constant_t(rec, t, params, grid) for t in cfg.slices]
    if reports:
        emit_plot_data(out, "slices", "slices", reports, grid=grid)
        emit_plot_data(out, "flux", "flux", rec, sample_taus(rec, cfg.sample_dt))
    integrals = [r.integral for r in reports]
    checks = [Check("min_j0", float(min((r.samples.j0.min() for r in reports), default=0.0)),
                    0.0, all(np.all(r.samples.j0 >= 0) for r in reports))]
    return {"summary": {"n_slices": len(reports), "t_slices": list(cfg.slices),
                        "integrals": integrals, "span": list(rec.span)},
            "checks": checks}


def _boost_section(cfg, rec, params, grid, v, stationary_mean, out=None):
    boost = BoostParams(v, params.c)
    res = boosted_conservation(rec, boost, cfg.boosted_slices(), params, grid)
    tag = _beta_tag(v, params.c)
    checks = [Check(f"{tag}_min_j0",
                    float(min((s.samples.j0.min() for s in res.slices), default=0.0)), 0.0,
                    all(np.all(s.samples.j0 >= 0) for s in res.slices),
                    "boosted density non-negative on every sampled event")]
    if res.integrals.size and math.isfinite(stationary_mean):
        ratio = res.mean / (boost.gamma_boost * stationary_mean)
        checks.append(Check(f"{tag}_mean_over_gamma_stationary", abs(ratio - 1), cfg.mean_tol,
                            abs(ratio - 1) < cfg.mean_tol))
        inv = abs(res.charge_mean / stationary_mean - 1)
        checks.append(Check(f"{tag}_charge_invariance", inv, cfg.mean_tol, inv < cfg.mean_tol,
                            "integral over boosted x' equals the stationary value"))
    if out is not None:
        boosted = boost_events(rec, boost)
        taus = sample_taus(boosted, cfg.sample_dt)
        emit_plot_data(out, f"boost_{tag}_trajectories", "trajectories", boosted, taus)
        contour_t = [t for t in integer_times(boosted.span[1]) if t >= boosted.span[0]]
        contour_t += [-t for t in integer_times(-boosted.span[0]) if t > 0]
        emit_plot_data(out, f"boost_{tag}_contours", "contours", boosted, sorted(contour_t))
        if res.slices:
            emit_plot_data(out, f"boost_{tag}_slices", "slices", res.slices, grid=grid,
                           v_over_c=v / params.c)
            emit_plot_data(out, f"boost_{tag}_flux", "flux", boosted, taus)
    summary = {"v": v, "v_over_c": v / params.c, "gamma_boost": boost.gamma_boost,
               "mean": res.mean, "rms": res.rms, "integrals": res.integrals.tolist(),
               "charge_mean": res.charge_mean, "charge_rms": res.charge.rms,
               "t_prime_slices": res.t_slices.tolist()}
    return summary, checks


def _conservation(cfg: RunConfig, out: Optional[OutputDir]) -> dict:
    params, spec = cfg.params(), cfg.grid_spec()
    vs = cfg.velocities()
    frames = [(v, cfg.boosted_slices()) for v in vs]
    rec = coverage_run(cfg, params, spec, cfg.slices, frames)
    grid = grid_for(rec)
    rep = conservation_report(rec, cfg.slices, params, grid) if cfg.slices else None
    checks = _stationary_checks(cfg, rep, params) if rep is not None else []
    stationary_mean = rep.mean if rep is not None else float("nan")
    boosts = []
    for v in vs:
        summary, more = _boost_section(cfg, rec, params, grid, v, stationary_mean, out)
        boosts.append(summary)
        checks += more
    stationary = None
    if rep is not None:
        stationary = {"mean": rep.mean, "rms": rep.rms, "relative_rms": rep.relative_rms,
                      "integrals": rep.integrals.tolist(), "t_slices": rep.t_slices.tolist()}
    return {"summary": {"stationary": stationary, "boosts": boosts, "span": list(rec.span),
                        "n_slices": len(cfg.slices)},
            "checks": checks}


def cmd_conserve(cfg: RunConfig, out: OutputDir) -> dict:
    return _conservation(cfg, None)


def cmd_boost(cfg: RunConfig, out: OutputDir) -> dict:
    return _conservation(cfg, out)


def cmd_scale_check(cfg: RunConfig, out: OutputDir) -> dict:
    params_a, spec_a = cfg.params(), cfg.grid_spec()
    s = ScaleTransform(cfg.zeta, cfg.eta)
    params_b, cmap = apply_scale(params_a, s)
    taus_a = integer_times(cfg.tmax)
    run_a = fixed_time_run(cfg, params_a, spec_a, taus_a)
    run_b = fixed_time_run(cfg, params_b, spec_a.scaled(s.eta), [cmap.tau * t for t in taus_a])
    rep = scale_invariance_error(run_a, run_b, s, taus_a)
    emit_plot_data(out, "gamma_a", "gamma", run_a, taus_a)
    emit_plot_data(out, "gamma_b", "gamma", run_b, [cmap.tau * t for t in taus_a])
    return {"summary": {"params_b": asdict(params_b), "tau_ratio": cmap.tau,
                        "max_weighted": rep.max_weighted, "rms_weighted": rep.rms_weighted,
                        "max_gamma": rep.max_gamma},
            "checks": [Check("relative_max_weighted", rep.relative_max, cfg.scale_tol,
                             rep.relative_max < cfg.scale_tol)]}


def cmd_converge(cfg: RunConfig, out: OutputDir) -> dict:
    params = cfg.params()
    taus = integer_times(cfg.tmax)
    pairs, checks = [], []
    for n in cfg.converge_sizes:
        small = fixed_time_run(cfg, params, cfg.grid_spec(n), taus)
        large = fixed_time_run(cfg, params, cfg.grid_spec(n + cfg.converge_step), taus)
        ce = convergence_error(small, large, taus)
        T = np.repeat(ce.taus, ce.C.size)
        out.columns(f"converge_n{n}", ("tau", "C", "error"),
                    (T, np.tile(ce.C, ce.taus.size), ce.values.ravel()))
        label = ce.argmax_label()
        pairs.append({"n_small": n, "n_large": n + cfg.converge_step,
                      "interior_rms": ce.interior_rms(), "max_abs": ce.max_abs(),
                      "argmax_C": label})
        checks.append(Check(f"n{n}_argmax_interior", abs(label), 2.0, abs(label) <= 2.0))
    for prev, nxt in zip(pairs, pairs[1:]):
        checks.append(Check(f"rms_n{nxt['n_small']}_below_n{prev['n_small']}",
                            nxt["interior_rms"] / prev["interior_rms"], 1.0,
                            nxt["interior_rms"] < prev["interior_rms"]))
    return {"summary": {"pairs": pairs}, "checks": checks}


def cmd_classical_check(cfg: RunConfig, out: OutputDir) -> dict:
    spec = cfg.grid_spec()
    rows, checks = [], []
    for c in cfg.classical_c:
        params = cfg.params(c)
        rec = coverage_run(cfg, params, spec, cfg.classical_t)
        dev = nonrelativistic_check(rec, params, cfg.classical_t, cfg.classical_climit)
        rows.append({"c": c, "deviation": dev})
    out.columns("classical", ("c", "deviation"),
                ([r["c"] for r in rows], [r["deviation"] for r in rows]))
    if rows:
        best = max(rows, key=lambda r: r["c"])
        checks.append(Check(f"c{best['c']:g}_deviation", best["deviation"], cfg.classical_tol,
                            best["deviation"] < cfg.classical_tol,
                            "largest deviation in instantaneous packet widths"))
    ordered = sorted(rows, key=lambda r: r["c"])
    for lo, hi in zip(ordered, ordered[1:]):
        checks.append(Check(f"deviation_c{hi['c']:g}_below_c{lo['c']:g}",
                            hi["deviation"], lo["deviation"], hi["deviation"] < lo["deviation"]))
    return {"summary": {"runs": rows}, "checks": checks}


COMMANDS = {
    "simulate": cmd_simulate,
    "slice": cmd_slice,
    "boost": cmd_boost,
    "conserve": cmd_conserve,
    "scale-check": cmd_scale_check,
    "converge": cmd_converge,
    "classical-check": cmd_classical_check,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reltraj", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"reltraj {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON file with run settings")
    common.add_argument("--a", type=float, help="Gaussian width parameter")
    common.add_argument("--hbar", type=float)
    common.add_argument("--mass", type=float)
    common.add_argument("--c", type=float, help="speed of light")
    common.add_argument("--grid", choices=("uniform", "tanh"))
    common.add_argument("--ng", type=int, help="number of grid points (odd)")
    common.add_argument("--cmax", type=float)
    common.add_argument("--qmax", type=float)
    common.add_argument("--beta-grid", type=float, dest="beta_grid")
    common.add_argument("--tmax", type=float, help="ensemble-time horizon")
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)
    common.add_argument("--slices", help="t slices: '0:15', '0:15:5' or '0,2,5'")
    common.add_argument("--t-prime-slices", dest="t_prime_slices",
                        help="t' slices of boosted frames, same syntax (default 0,2,5,10,15)")
    common.add_argument("--v", help="boost velocities, e.g. '0.8c' or '0.2c,0.4c'")
    common.add_argument("--zeta", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_ROOT}/<command>)")
    common.add_argument("--format", choices=("csv", "json"))
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__[4:].replace("_", "-"))
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = asdict(RunConfig())
    data.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        data.update(load_config_file(args.config))
    for key in ("a", "hbar", "mass", "c", "grid", "ng", "cmax", "qmax", "beta_grid",
                "tmax", "rtol", "atol", "zeta", "eta", "out", "format"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.slices is not None:
        data["slices"] = parse_slices(args.slices)
    if args.t_prime_slices is not None:
        data["t_prime_slices"] = parse_slices(args.t_prime_slices)
    if args.v is not None:
        data["v"] = [p.strip() for p in args.v.split(",") if p.strip()]
    return RunConfig.from_dict(data)


def output_path(cfg: RunConfig, command: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get(ENV_OUTPUT_ROOT, "reltraj_out")
    return Path(root) / command


def run(command: str, cfg: RunConfig, out_dir: Optional[Path] = None) -> tuple[int, dict]:
    """Execute one subcommand; returns the exit status and the report."""
    out = OutputDir(out_dir or output_path(cfg, command), cfg.format)
    start = time.perf_counter()
    status, message, report = EXIT_OK, "", {"summary": {}, "checks": []}
    try:
        report = COMMANDS[command](cfg, out)
        if not all(c.passed for c in report["checks"]):
            status = EXIT_VERIFY
            message = "checks failed: " + ", ".join(c.metric for c in report["checks"]
                                                     if not c.passed)
    except (ConfigurationError, SpanError) as exc:
        status, message = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except NumericalBreakdown as exc:
        status, message = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
    except VerificationFailure as exc:
        status, message = EXIT_VERIFY, f"{type(exc).__name__}: {exc}"
    checks = [c.as_dict() for c in report["checks"]]
    out.json("report.json", {"command": command, "summary": _jsonable(report["summary"]),
                             "checks": checks})
    labels = {EXIT_OK: "ok", EXIT_CONFIG: "configuration_error",
              EXIT_NUMERICAL: "numerical_breakdown", EXIT_VERIFY: "verification_failure"}
    out.manifest({"command": command, "status": labels[status], "exit_code": status,
                  "message": message, "version": __version__, "config": cfg.to_dict(),
                  "wall_time_s": round(time.perf_counter() - start, 3),
                  "checks": {c["metric"]: c["pass"] for c in checks},
                  "n_slices": len(cfg.slices)})
    report = dict(report, message=message, out=str(out.path))
    return status, report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return _num(obj)


def _config_error_manifest(args: argparse.Namespace, exc: Exception) -> None:
    """Record a rejected configuration when its output directory is known."""
    target = args.out or (Path(os.environ[ENV_OUTPUT_ROOT]) / args.command
                          if os.environ.get(ENV_OUTPUT_ROOT) else None)
    if target is None:
        return
    try:
        out = OutputDir(Path(target), "csv")
    except ConfigurationError:
        return
    raw = {k: v for k, v in vars(args).items() if v is not None}
    out.manifest({"command": args.command, "status": "configuration_error",
                  "exit_code": EXIT_CONFIG, "message": str(exc), "version": __version__,
                  "config": raw, "checks": {}})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        status, report = run(args.command, cfg)
    except ConfigurationError as exc:
        print(f"reltraj: configuration error: {exc}", file=sys.stderr)
        _config_error_manifest(args, exc)
        return EXIT_CONFIG
    for c in report["checks"]:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark} {c.metric} = {c.value:.6g} (tolerance {c.tolerance:.6g})")
    print(f"results in {report['out']}")
    if status != EXIT_OK:
        print(f"reltraj: {report['message']} (exit {status})", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
