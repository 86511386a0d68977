"""Experiment presets, run orchestration and artifact comparison.

A run is described by an :class:`ExperimentConfig` (JSON schema below), its
identifier is a hash of the semantic fields, and every artifact is written
atomically below ``$SLOWVOTER_RUNS/<run_id>/`` (default ``./runs``).

Configuration schema::

    {
      "preset": "hydro-robin",
      "geometry": {"d": 1, "L": 4.0},
      "rates": {"N": 500, "alpha": 1.0, "beta": 1.0},
      "t": 0.1,
      "profile": {"kind": "ramp", "params": [0.5, 0.4]},
      "replicas": 20000,
      "seed": 0,
      "tolerances": {"sup": 0.02},
      "options": {...},          # preset specific
      "workers": 4,              # not part of the run id
      "output_dir": null         # not part of the run id
    }
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .io import read_csv, read_json, write_csv, write_json
from .lattice import BoxGeometry, InitialProfile, MembraneRates, draw_events, sample_initial_batch
from .testfunctions import PiecewiseTestFunction

__all__ = ["ExperimentConfig", "RunRecord", "PRESETS", "runs_root", "run", "compare", "list_runs",
           "load_record", "RUNS_ENV"]

#: Environment variable overriding the output root.
RUNS_ENV = "SLOWVOTER_RUNS"

_SEMANTIC = ("preset", "geometry", "rates", "t", "profile", "replicas", "seed", "tolerances", "options")


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def _default_workers() -> int:
    return max(1, os.cpu_count() or 1)


@dataclass
class Preset:
    description: str
    defaults: dict
    runner: Callable
    required_options: tuple = ()


PRESETS: dict[str, Preset] = {}


def _preset(name, description, defaults, required_options=()):
    def wrap(fn):
        PRESETS[name] = Preset(description, defaults, fn, required_options)
        return fn
    return wrap


def _deep_update(base: dict, new: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "profile":
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """A complete, validated description of one experiment."""

    preset: str
    d: int
    N: int
    alpha: float
    beta: float
    L: float
    t: float
    profile: dict
    replicas: int
    seed: int
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    workers: int = field(default_factory=_default_workers)
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentConfig":
        """Merge ``spec`` over the preset defaults and validate the result."""
        if not isinstance(spec, dict) or "preset" not in spec:
            raise ConfigurationError("configuration needs a preset", {"preset": "missing"})
        name = spec["preset"]
        if name not in PRESETS:
            raise ConfigurationError("unknown preset", {"preset": f"{name!r} not in {sorted(PRESETS)}"})
        unknown = set(spec) - set(_SEMANTIC) - {"workers", "output_dir"}
        if unknown:
            raise ConfigurationError("unknown configuration keys", {k: "not in schema" for k in unknown})
        merged = _deep_update(PRESETS[name].defaults, spec)
        try:
            cfg = cls(
                preset=name,
                d=int(merged["geometry"]["d"]),
                N=int(merged["rates"]["N"]),
                alpha=float(merged["rates"]["alpha"]),
                beta=float(merged["rates"]["beta"]),
                L=float(merged["geometry"]["L"]),
                t=float(merged["t"]),
                profile=dict(merged["profile"]),
                replicas=int(merged["replicas"]),
                seed=int(merged["seed"]),
                tolerances=dict(merged.get("tolerances", {})),
                options=dict(merged.get("options", {})),
                workers=int(merged.get("workers") or _default_workers()),
                output_dir=merged.get("output_dir"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError("malformed configuration", {"config": str(exc)}) from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"preset": self.preset, "geometry": {"d": self.d, "L": self.L},
                "rates": {"N": self.N, "alpha": self.alpha, "beta": self.beta}, "t": self.t,
                "profile": self.profile, "replicas": self.replicas, "seed": self.seed,
                "tolerances": self.tolerances, "options": self.options, "workers": self.workers,
                "output_dir": self.output_dir}

    def semantic(self) -> dict:
        full = self.to_dict()
        return {k: full[k] for k in _SEMANTIC}

    @property
    def run_id(self) -> str:
        canon = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return f"{self.preset}-{hashlib.sha256(canon.encode()).hexdigest()[:12]}"

    def validate(self) -> None:
        errs = {}
        if self.replicas < 1:
            errs["replicas"] = "must be at least 1"
        if self.N < 1:
            errs["rates.N"] = "must be at least 1"
        if not self.alpha > 0:
            errs["rates.alpha"] = "must be positive"
        if self.beta < 0:
            errs["rates.beta"] = "must be nonnegative"
        if not 1 <= self.d <= 6:
            errs["geometry.d"] = "must lie in 1..6"
        if not self.L > 0:
            errs["geometry.L"] = "must be positive"
        if not self.t > 0:
            errs["t"] = "must be positive"
        if self.workers < 1:
            errs["workers"] = "must be at least 1"
        try:
            InitialProfile.from_dict(self.profile)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            errs["profile"] = str(exc)
        for key in PRESETS[self.preset].required_options:
            if key not in self.options:
                errs[f"options.{key}"] = "required by this preset"
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or v < 0:
                errs[f"tolerances.{k}"] = "must be a nonnegative number"
        if errs:
            raise ConfigurationError("invalid configuration", errs)

    @property
    def rates(self) -> MembraneRates:
        return MembraneRates(self.alpha, self.beta, self.N)

    @property
    def initial_profile(self) -> InitialProfile:
        return InitialProfile.from_dict(self.profile)


@dataclass
class RunRecord:
    run_id: str
    config: dict
    started: str
    finished: str
    artifacts: list
    summary: dict

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed"))

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "config": self.config, "started": self.started,
                "finished": self.finished, "artifacts": self.artifacts, "summary": self.summary}


def _check(name, value, bound, passed=None, **extra) -> dict:
    ok = bool(value <= bound) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "bound": float(bound), "passed": ok, **extra}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(config: ExperimentConfig | dict, root=None) -> RunRecord:
    """Execute a preset, write its artifacts and return the run record.

    Numeric artifacts (CSV tables and ``report.json``) depend only on the
    semantic configuration; timestamps live in ``record.json`` alone.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    config.validate()
    out_dir = Path(config.output_dir) if config.output_dir else Path(root or runs_root()) / config.run_id
    started = _now()
    tables, report = PRESETS[config.preset].runner(config)
    artifacts = []
    for name, (header, rows) in tables.items():
        artifacts.append(str(write_csv(out_dir / f"{name}.csv", header, rows)))
    checks = report.get("checks", [])
    summary = {"passed": all(c["passed"] for c in checks), "checks": checks}
    report = {"op": config.preset, "params": config.semantic(), **report, "passed": summary["passed"]}
    artifacts.append(str(write_json(out_dir / "report.json", report)))
    artifacts.append(str(write_json(out_dir / "config.json", config.to_dict())))
    record = RunRecord(config.run_id, config.to_dict(), started, _now(), artifacts, summary)
    write_json(out_dir / "record.json", record.to_dict())
    return record


def _resolve(run_ref, root=None) -> Path:
    p = Path(run_ref)
    if p.is_dir():
        return p
    q = Path(root or runs_root()) / str(run_ref)
    if q.is_dir():
        return q
    raise ConfigurationError("run not found", {"run": str(run_ref)})


def load_record(run_ref, root=None) -> dict:
    path = _resolve(run_ref, root)
    rec = read_json(path / "record.json")
    rec["report"] = read_json(path / "report.json")
    return rec


def list_runs(root=None) -> list[dict]:
    root = Path(root or runs_root())
    out = []
    if not root.is_dir():
        return out
    for p in sorted(root.iterdir()):
        f = p / "record.json"
        if f.is_file():
            rec = read_json(f)
            out.append({"run_id": rec["run_id"], "preset": rec["config"]["preset"],
                        "passed": rec["summary"]["passed"], "finished": rec["finished"]})
    return out


def compare(run_a, run_b, tolerance: dict | None = None, root=None) -> dict:
    """Column-wise differences between the CSV artifacts of two runs.

    Parameters
    ----------
    tolerance : dict, optional
        ``abs`` and ``rel`` bounds (default 0) and ``stderr_k``: when given,
        a column ``c`` with a companion ``c_stderr`` passes if every
        difference is at most ``stderr_k * sqrt(se_a^2 + se_b^2) + abs``;
        the companion columns are then reported but not judged.

    Raises
    ------
    ConfigurationError
        Different presets, table sets, headers or row counts.
    """
    tol = {"abs": 0.0, "rel": 0.0, "stderr_k": None, **(tolerance or {})}
    pa, pb = _resolve(run_a, root), _resolve(run_b, root)
    ca, cb = read_json(pa / "config.json"), read_json(pb / "config.json")
    if ca["preset"] != cb["preset"]:
        raise ConfigurationError("schema mismatch", {"preset": f"{ca['preset']} vs {cb['preset']}"})
    ta = sorted(f.name for f in pa.glob("*.csv"))
    tb = sorted(f.name for f in pb.glob("*.csv"))
    if ta != tb:
        raise ConfigurationError("schema mismatch", {"tables": f"{ta} vs {tb}"})
    tables = {}
    passed = True
    for name in ta:
        ha, cola = read_csv(pa / name)
        hb, colb = read_csv(pb / name)
        if ha != hb:
            raise ConfigurationError("schema mismatch", {name: "headers differ"})
        n = len(cola[ha[0]]) if ha else 0
        if any(len(colb[h]) != n for h in hb):
            raise ConfigurationError("schema mismatch", {name: "row counts differ"})
        cols = {}
        for h in ha:
            a, b = cola[h], colb[h]
            if not all(isinstance(v, float) for v in a + b):
                same = a == b
                cols[h] = {"kind": "label", "equal": same, "passed": same}
                passed &= same
                continue
            a, b = np.array(a), np.array(b)
            both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
            diff = np.where(both_inf, 0.0, np.abs(a - b))
            rel = np.where(diff == 0, 0.0, diff / np.maximum(np.abs(a), 1e-300))
            judged = True
            if tol["stderr_k"] is not None and f"{h}_stderr" in cola:
                se = np.hypot(np.array(colb[f"{h}_stderr"]), np.array(cola[f"{h}_stderr"]))
                bound = tol["stderr_k"] * se + tol["abs"]
            elif tol["stderr_k"] is not None and h.endswith("_stderr") and h[:-7] in cola:
                judged = False
                bound = np.full_like(diff, np.inf)
            else:
                bound = tol["abs"] + tol["rel"] * np.abs(a)
            ok = bool(np.all(diff <= bound + 1e-300)) if diff.size else True
            cols[h] = {"max_abs": float(diff.max()) if diff.size else 0.0,
                       "max_rel": float(rel.max()) if rel.size else 0.0,
                       "judged": judged, "passed": ok}
            passed &= ok
        tables[name] = cols
    return {"run_a": str(pa), "run_b": str(pb), "tolerance": tol, "tables": tables, "passed": bool(passed)}


# ---------------------------------------------------------------------------
# presets


def _test_function(spec: dict | None, default_plus: str, default_minus: str | None = None):
    spec = spec or {}
    plus = spec.get("plus", default_plus)
    minus = spec.get("minus", default_minus if default_minus is not None else plus)
    return PiecewiseTestFunction(plus, minus)


def _hydro(cfg: ExperimentConfig, kind: str):
    from .pde import InterfaceCondition, solve_1d
    from .walks import one_point_function

    if cfg.d != 1:
        raise ConfigurationError("hydrodynamic presets use the reduction to u_1", {"geometry.d": "must be 1"})
    prof = cfg.initial_profile
    cond = {"none": InterfaceCondition.none(), "neumann": InterfaceCondition.neumann(),
            "robin": InterfaceCondition.robin(cfg.alpha)}[kind]
    dx = float(cfg.options.get("dx", 0.0025))
    grid = solve_1d(prof, cfg.t, cond, dx=dx, L=cfg.L)
    points = np.linspace(-1.0, 1.0, int(cfg.options.get("points", 21)))
    rows = []
    for i, u in enumerate(points):
        x = int(round(u * cfg.N))
        side = 1 if x >= 1 else -1
        est = one_point_function([x], cfg.t, cfg.rates, prof, cfg.replicas, cfg.seed + i, workers=cfg.workers)
        ref = float(grid(np.array([x / cfg.N]), side)[0])
        rows.append([x / cfg.N, "+" if side > 0 else "-", est.mean, est.stderr, ref, abs(est.mean - ref)])
    sup = max(r[-1] for r in rows)
    tol = cfg.tolerances.get("sup", 0.02)
    tables = {"profile": (["u1", "side", "duality", "duality_stderr", "pde", "abs_diff"], rows)}
    return tables, {"checks": [_check("sup_abs_diff", sup, tol)], "condition": kind}


_HYDRO_BASE = {"geometry": {"d": 1, "L": 4.0}, "t": 0.1,
               "profile": {"kind": "ramp", "params": [0.5, 0.4]},
               "replicas": 20000, "seed": 0, "tolerances": {"sup": 0.02}, "options": {"points": 21}}


@_preset("hydro-sub", "duality one-point profile against the free heat equation (beta < 1)",
         {**_HYDRO_BASE, "rates": {"N": 500, "alpha": 1.0, "beta": 0.5}})
def _hydro_sub(cfg):
    return _hydro(cfg, "none")


@_preset("hydro-robin", "duality one-point profile against the Robin interface solve (beta = 1)",
         {**_HYDRO_BASE, "rates": {"N": 500, "alpha": 1.0, "beta": 1.0}})
def _hydro_robin(cfg):
    return _hydro(cfg, "robin")


@_preset("hydro-neumann", "duality one-point profile against the Neumann interface solve (beta > 1)",
         {**_HYDRO_BASE, "rates": {"N": 500, "alpha": 1.0, "beta": 2.0}})
def _hydro_neumann(cfg):
    return _hydro(cfg, "neumann")


def _parse_start(u):
    from .brownian import SignedHalfLinePoint

    if isinstance(u, str):
        s = u.strip()
        if s in ("0+", "+0"):
            return SignedHalfLinePoint.plus(0.0)
        if s in ("0-", "-0"):
            return SignedHalfLinePoint.minus(0.0)
        return SignedHalfLinePoint(float(s))
    return SignedHalfLinePoint(float(u))


@_preset("invariance", "KS distance between the rescaled slow-bond walk and its continuum limit",
         {"geometry": {"d": 1, "L": 4.0}, "rates": {"N": 200, "alpha": 1.0, "beta": 1.0}, "t": 0.5,
          "profile": {"kind": "constant", "params": [0.5]}, "replicas": 100000, "seed": 0,
          "tolerances": {"ks": 0.05},
          "options": {"cases": [[0.5, "1"], [1.0, "0+"], [1.0, "-1"], [2.0, "0+"], [2.0, "1"]]}},
         required_options=("cases",))
def _invariance(cfg):
    from .brownian import SnappingParams, invariance_distance

    rows, checks = [], []
    tol = cfg.tolerances.get("ks", 0.05)
    for i, (beta, u) in enumerate(cfg.options["cases"]):
        rates = MembraneRates(cfg.alpha, float(beta), cfg.N)
        start = _parse_start(u)
        ks = invariance_distance(start, cfg.t, rates, SnappingParams.from_rates(rates), cfg.replicas, cfg.seed + i)
        label = str(u)
        rows.append([float(beta), label, ks])
        checks.append(_check(f"ks[beta={beta},u={label}]", ks, tol))
    return {"ks": (["beta", "u", "ks"], rows)}, {"checks": checks}


@_preset("qv-limit", "duality per-site quadratic variation against 4d(1 - gamma_d) rho(1 - rho)",
         {"geometry": {"d": 4, "L": 1.0}, "rates": {"N": 50, "alpha": 1.0, "beta": 2.0}, "t": 0.1,
          "profile": {"kind": "constant", "params": [0.5]}, "replicas": 20000, "seed": 0,
          "tolerances": {"rel": 0.10},
          "options": {"x1": 25, "gamma_horizon": 1000000, "gamma_replicas": 1000000}},
         required_options=("gamma_horizon", "gamma_replicas"))
def _qv_limit(cfg):
    from .fluctuation import pair_correlation_qv
    from .walks import gamma_d

    prof = cfg.initial_profile
    x = [int(cfg.options.get("x1", cfg.N // 2))] + [0] * (cfg.d - 1)
    g = gamma_d(cfg.d, horizon=cfg.options["gamma_horizon"], replicas=cfg.options["gamma_replicas"],
                seed=cfg.seed, workers=cfg.workers)
    qv = pair_correlation_qv(x, cfg.t, cfg.rates, prof, cfg.replicas, cfg.seed)
    c = float(prof(np.array([x[0] / cfg.N]))[0])
    ref = 4 * cfg.d * (1 - g.estimate) * c * (1 - c)
    rel = abs(qv.total - ref) / ref if ref > 0 else abs(qv.total)
    rows = [[str(list(y)), xi, e.mean, e.stderr] for y, xi, e in zip(qv.neighbors, qv.rates_, qv.estimates)]
    tables = {"qv_bonds": (["y", "xi", "bond_value", "bond_value_stderr"], rows),
              "qv_total": (["duality", "duality_stderr", "reference", "gamma", "gamma_stderr"],
                           [[qv.total, qv.total_stderr, ref, g.estimate, g.stderr]])}
    return tables, {"checks": [_check("relative_error", rel, cfg.tolerances.get("rel", 0.10))],
                    "gamma": g.to_dict()}


@_preset("martingale-exact", "finite-N Dynkin martingale and quadratic-variation identities on a small box",
         {"geometry": {"d": 1, "L": 3.0}, "rates": {"N": 1, "alpha": 1.0, "beta": 1.0}, "t": 0.5,
          "profile": {"kind": "step", "params": [0.8, 0.2]}, "replicas": 100000, "seed": 0,
          "tolerances": {"k_sigma": 3.0},
          "options": {"times": [0.1, 0.5], "H": {"plus": "exp(-u**2/4)*(1 + u/2)"}}},
         required_options=("times",))
def _martingale(cfg):
    from .fluctuation import martingale_check
    from .master import mean_field

    geom = BoxGeometry.from_scale(cfg.d, cfg.L, cfg.N)
    if geom.n_sites > 14:
        raise ConfigurationError("box too large for the exact mean field", {"geometry": f"{geom.n_sites} sites"})
    prof, rates = cfg.initial_profile, cfg.rates
    times = sorted(float(s) for s in cfg.options["times"])
    if times[-1] > cfg.t:
        raise ConfigurationError("observation time beyond t", {"options.times": str(times)})
    H = _test_function(cfg.options.get("H"), "exp(-u**2/4)*(1 + u/2)")
    from .rng import stream

    rng = stream(cfg.seed, 0x3A)
    init = sample_initial_batch(prof, geom, cfg.N, rng, cfg.replicas)
    events = draw_events(geom, rates, cfg.t, cfg.replicas, rng)
    rep = martingale_check(init, events, H, times, lambda s: mean_field(geom, rates, prof, s))
    k = cfg.tolerances.get("k_sigma", 3.0)
    rows, checks = [], []
    for i, s in enumerate(times):
        rows.append([s, rep.mean_M[i], rep.stderr_M[i], rep.mean_excess[i], rep.stderr_excess[i]])
        checks.append(_check(f"mean_M[t={s}]", abs(rep.mean_M[i]), k * rep.stderr_M[i] + 1e-12))
        checks.append(_check(f"qv_excess[t={s}]", abs(rep.mean_excess[i]), k * rep.stderr_excess[i] + 1e-12))
    header = ["t", "mean_M", "mean_M_stderr", "qv_excess", "qv_excess_stderr"]
    return {"martingale": (header, rows)}, {"checks": checks}


@_preset("gamma-estimate", "Monte Carlo return probabilities against the lattice Green function",
         {"geometry": {"d": 4, "L": 1.0}, "rates": {"N": 1, "alpha": 1.0, "beta": 0.0}, "t": 1.0,
          "profile": {"kind": "constant", "params": [0.5]}, "replicas": 1000000, "seed": 0,
          "tolerances": {"gamma": 0.01, "recurrent": 0.99},
          "options": {"dims": [1, 3, 4], "horizon": 1000000}},
         required_options=("dims", "horizon"))
def _gamma(cfg):
    from .walks import extrapolate_gamma, gamma_d, gamma_quadrature

    rows, curve_rows, checks = [], [], []
    for d in cfg.options["dims"]:
        est = gamma_d(int(d), horizon=cfg.options["horizon"], replicas=cfg.replicas, seed=cfg.seed,
                      workers=cfg.workers)
        exact = gamma_quadrature(int(d))
        g_ext, _ = extrapolate_gamma(est)
        rows.append([int(d), est.estimate, est.stderr, est.tail_bound, est.censored_fraction, g_ext, exact])
        curve_rows += [[int(d), int(h), v] for h, v in zip(est.curve_horizons, est.curve_values)]
        if d <= 2:
            floor = cfg.tolerances.get("recurrent", 0.99)
            checks.append(_check(f"gamma_{d} (at least)", est.estimate, floor, passed=est.estimate >= floor))
        else:
            checks.append(_check(f"|gamma_{d} - quadrature|", abs(est.estimate - exact),
                                 cfg.tolerances.get("gamma", 0.01)))
    header = ["d", "estimate", "estimate_stderr", "tail_bound", "censored_fraction", "extrapolated", "quadrature"]
    return {"gamma": (header, rows), "gamma_curve": (["d", "horizon", "value"], curve_rows)}, {"checks": checks}


@_preset("variance-scaling", "growth exponent of the membrane-plane variance bound",
         {"geometry": {"d": 4, "L": 1.0}, "rates": {"N": 8, "alpha": 1.0, "beta": 2.0}, "t": 0.1,
          "profile": {"kind": "constant", "params": [0.5]}, "replicas": 20000, "seed": 0,
          "tolerances": {"exponent_slack": 0.3},
          "options": {"N_list": [8, 16, 32], "gamma_radius": 3, "gamma_horizon": 100000}},
         required_options=("N_list", "gamma_radius", "gamma_horizon"))
def _variance(cfg):
    from .fluctuation import boundary_variance_scaling

    H = lambda u: np.exp(-np.sum(np.asarray(u) ** 2, axis=-1))
    out = boundary_variance_scaling(cfg.rates, cfg.initial_profile, H, cfg.options["N_list"], cfg.t,
                                    cfg.replicas, cfg.seed, d=cfg.d, L=cfg.L,
                                    gamma_radius=int(cfg.options["gamma_radius"]),
                                    horizon=int(cfg.options["gamma_horizon"]))
    rows = [[int(n), b] for n, b in zip(out["N"], out["bound"])]
    bound = cfg.d + 1 + cfg.tolerances.get("exponent_slack", 0.3)
    exp = out["exponent"]
    check = _check("exponent", exp if math.isfinite(exp) else 0.0, bound)
    return {"variance_bound": (["N", "bound"], rows)}, {"checks": [check], "envelope_C": out["envelope_C"],
                                                       "gamma_table": out["gamma_table"]}
