"""Scenario files: JSON trees describing rate, distributions, initial state, grid and runs.

``Scenario.to_dict`` emits the normalised tree; parsing it again yields the
same tree.
"""

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .dist import DistributionModel, RateFunction
from .elapsed import ElapsedInitialCondition, to_residual_ic
from .errors import ScenarioError, TvFluidError
from .kernel import Grid
from .solver import InitialCondition, SolverConfig

_SOLVER_DEFAULTS = {"picard_tol": 1e-10, "max_iters": 500, "kappa_target": 0.5, "window_cap": None}


def _get(d, key, path, kind=None, default=...):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        if default is ...:
            raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
        return copy.deepcopy(default)
    v = d[key]
    p = f"{path}.{key}" if path else key
    if kind == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(p, f"expected a finite number, got {v!r}")
        return float(v)
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(p, f"expected an integer, got {v!r}")
        return v
    if kind == "numbers":
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ScenarioError(p, "expected a list of numbers")
        return [float(x) for x in v]
    if kind == "object" and not isinstance(v, dict):
        raise ScenarioError(p, "expected an object")
    if kind == "string" and not isinstance(v, str):
        raise ScenarioError(p, "expected a string")
    return copy.deepcopy(v)


def _wrap(path, fn, *args):
    try:
        return fn(*args)
    except ScenarioError:
        raise
    except (TvFluidError, ValueError, KeyError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from exc


# ---------------------------------------------------------------------------
# rates


def _norm_rate(spec, path):
    kind = _get(spec, "kind", path, "string")
    if kind == "constant":
        return {"kind": kind, "value": _get(spec, "value", path, "number"),
                "start": _get(spec, "start", path, "number", 0.0)}
    if kind in ("linear", "step"):
        out = {"kind": kind, "times": _get(spec, "times", path, "numbers"),
               "values": _get(spec, "values", path, "numbers")}
        return out
    if kind == "sinusoid":
        return {"kind": kind, "base": _get(spec, "base", path, "number"),
                "amplitude": _get(spec, "amplitude", path, "number"),
                "period": _get(spec, "period", path, "number"),
                "phase": _get(spec, "phase", path, "number", 0.0),
                "step": _get(spec, "step", path, "number", 0.02),
                "start": _get(spec, "start", path, "number", 0.0)}
    raise ScenarioError(f"{path}.kind", f"unknown rate kind {kind!r}")


def build_rate(spec, end):
    """Rate from a normalised spec; ``constant`` and ``sinusoid`` run from ``start`` to ``end``."""
    kind = spec["kind"]
    if kind == "constant":
        if spec["value"] < 0:
            raise ValueError("rate must be nonnegative")
        return RateFunction.constant(spec["value"], spec["start"], end)
    if kind == "linear":
        return RateFunction.linear(spec["times"], spec["values"], spec=spec)
    if kind == "step":
        return RateFunction.step(spec["times"], spec["values"], spec=spec)
    if kind == "sinusoid":
        b, a, p, ph = spec["base"], spec["amplitude"], spec["period"], spec["phase"]
        if b - abs(a) < 0:
            raise ValueError("sinusoid dips below zero")
        fn = lambda t: b + a * np.sin(2 * np.pi * t / p + ph)
        return RateFunction.sampled(fn, spec["start"], end, spec["step"], spec=spec)
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# densities for the age form


def _norm_density(spec, path):
    if spec is None:
        return None
    kind = _get(spec, "kind", path, "string", "table")
    if kind == "table":
        return {"kind": "table", "x": _get(spec, "x", path, "numbers"), "values": _get(spec, "values", path, "numbers")}
    if kind == "exp-linear":
        return {"kind": kind, "a": _get(spec, "a", path, "number"), "b": _get(spec, "b", path, "number", 0.0),
                "decay": _get(spec, "decay", path, "number"), "end": _get(spec, "end", path, "number"),
                "step": _get(spec, "step", path, "number", 0.02),
                "mass": _get(spec, "mass", path, "number", None) if spec.get("mass") is not None else None}
    raise ScenarioError(f"{path}.kind", f"unknown density kind {kind!r}")


def _density_table(spec):
    if spec is None:
        return None, None
    if spec["kind"] == "table":
        return spec["x"], spec["values"]
    n = int(round(spec["end"] / spec["step"]))
    x = np.arange(n + 1) * spec["step"]
    v = (spec["a"] + spec["b"] * x) * np.exp(-spec["decay"] * x)
    if spec["mass"] is not None:
        v = v * (spec["mass"] / np.trapezoid(v, x))
    return x, v


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    spec: dict
    rate: RateFunction
    F: DistributionModel
    G: DistributionModel
    initial: InitialCondition
    elapsed: ElapsedInitialCondition
    grid: Grid

    def to_dict(self):
        return copy.deepcopy(self.spec)

    def dumps(self):
        return json.dumps(self.spec, indent=2, sort_keys=False) + "\n"

    def solver_config(self, h=None):
        s = self.spec["solver"]
        grid = self.grid if h is None else Grid(float(h), self.grid.T)
        return SolverConfig(grid, s["picard_tol"], s["max_iters"], s["window_cap"], s["kappa_target"])

    @property
    def sim(self):
        return self.spec.get("sim")

    def with_grid(self, h):
        spec = self.to_dict()
        spec["grid"]["h"] = float(h)
        return parse(spec)


def parse(tree, source="<scenario>"):
    """Validate a scenario tree and build its objects; errors carry the field path."""
    if not isinstance(tree, dict):
        raise ScenarioError("", "scenario must be an object")
    spec = {"name": _get(tree, "name", "", "string")}
    if "description" in tree:
        spec["description"] = _get(tree, "description", "", "string")
    g = _get(tree, "grid", "", "object")
    spec["grid"] = {"h": _get(g, "h", "grid", "number"), "T": _get(g, "T", "grid", "number")}
    grid = _wrap("grid", Grid, spec["grid"]["h"], spec["grid"]["T"])
    T = grid.T

    spec["patience"] = _wrap("patience", lambda: DistributionModel.from_spec(_get(tree, "patience", "", "object")).to_spec())
    spec["service"] = _wrap("service", lambda: DistributionModel.from_spec(_get(tree, "service", "", "object")).to_spec())
    F = DistributionModel.from_spec(spec["patience"])
    G = DistributionModel.from_spec(spec["service"])
    _wrap("patience", F.validate_role, "patience")
    _wrap("service", G.validate_role, "service")

    spec["rate"] = _norm_rate(_get(tree, "rate", "", "object"), "rate")
    rate = _wrap("rate", build_rate, spec["rate"], T)
    if abs(rate.t_max - T) > 1e-9 or rate.t_min > 1e-9:
        raise ScenarioError("rate", f"rate must cover [0, {T}] and end at the horizon")

    ini = _get(tree, "initial", "", "object", {"form": "residual"})
    form = _get(ini, "form", "initial", "string", "residual")
    elapsed = None
    if form == "residual":
        extra = set(ini) - {"form", "omega0", "pre_rate", "z0"}
        if extra:
            raise ScenarioError("initial", f"unexpected fields {sorted(extra)} for the residual form")
        omega0 = _get(ini, "omega0", "initial", "number", 0.0)
        norm = {"form": "residual", "omega0": omega0}
        pre = None
        if omega0 > 0 and "pre_rate" in ini:
            if rate.t_min < -1e-12:
                raise ScenarioError("initial.pre_rate", "history given twice: the rate already has negative times")
            norm["pre_rate"] = _norm_rate(_get(ini, "pre_rate", "initial", "object"), "initial.pre_rate")
            pre = _wrap("initial.pre_rate", build_rate, norm["pre_rate"], 0.0)
        elif omega0 > 0:
            if rate.t_min > -omega0 + 1e-9:
                raise ScenarioError("rate", f"rate history must reach back to -omega0 = {-omega0}")
            pre = _wrap("rate", rate.restrict, -omega0, 0.0)
        z0 = _get(ini, "z0", "initial", "object", {"kind": "empty"})
        norm["z0"] = z0
        initial = _wrap("initial", InitialCondition, omega0, pre, z0, G)
        _wrap("initial", initial.validate, F)
    elif form == "elapsed":
        if rate.t_min < -1e-12:
            raise ScenarioError("rate", "the age form supplies the history; the rate must start at 0")
        extra = set(ini) - {"form", "r0", "z0"}
        if extra:
            raise ScenarioError("initial", f"unexpected fields {sorted(extra)} for the elapsed form")
        norm = {"form": "elapsed", "r0": _norm_density(ini.get("r0"), "initial.r0"),
                "z0": _norm_density(ini.get("z0"), "initial.z0")}
        rx, rv = _density_table(norm["r0"])
        zx, zv = _density_table(norm["z0"])
        elapsed = _wrap("initial", ElapsedInitialCondition, rx, rv, zx, zv)
        initial = _wrap("initial", to_residual_ic, elapsed, F, G)
        _wrap("initial", initial.validate, F)
    else:
        raise ScenarioError("initial.form", f"expected 'residual' or 'elapsed', got {form!r}")
    spec["initial"] = norm
    if initial.omega0 > 0:
        _wrap("initial.omega0", grid.steps_for, initial.omega0, "omega0")

    s = _get(tree, "solver", "", "object", {})
    unknown = set(s) - set(_SOLVER_DEFAULTS)
    if unknown:
        raise ScenarioError("solver", f"unknown fields {sorted(unknown)}")
    spec["solver"] = {
        "picard_tol": _get(s, "picard_tol", "solver", "number", _SOLVER_DEFAULTS["picard_tol"]),
        "max_iters": _get(s, "max_iters", "solver", "int", _SOLVER_DEFAULTS["max_iters"]),
        "kappa_target": _get(s, "kappa_target", "solver", "number", _SOLVER_DEFAULTS["kappa_target"]),
        "window_cap": s.get("window_cap"),
    }
    wc = spec["solver"]["window_cap"]
    if wc is not None and wc != "horizon" and not (isinstance(wc, (int, float)) and wc > 0):
        raise ScenarioError("solver.window_cap", "expected null, 'horizon' or a positive number")
    _wrap("solver", SolverConfig, grid, spec["solver"]["picard_tol"], spec["solver"]["max_iters"],
          wc, spec["solver"]["kappa_target"])

    if "sim" in tree:
        sm = _get(tree, "sim", "", "object")
        ns = sm.get("n")
        if not isinstance(ns, list) or not ns or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1
                                                         for v in ns):
            raise ScenarioError("sim.n", "expected a nonempty list of positive integers")
        reps = _get(sm, "replications", "sim", "int")
        if reps < 1:
            raise ScenarioError("sim.replications", f"must be at least 1, got {reps}")
        seed = _get(sm, "seed", "sim", "int", 0)
        if seed < 0 or seed >= 2 ** 64:
            raise ScenarioError("sim.seed", "must be a 64-bit unsigned integer")
        spec["sim"] = {"n": list(ns), "replications": reps, "seed": seed}

    return Scenario(spec["name"], spec, rate, F, G, initial, elapsed, grid)


def load(path):
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"{path} is not valid JSON: {exc}") from exc
    return parse(tree, str(path))


def bundled():
    """Names of the scenarios shipped with the package."""
    root = resources.files("tvfluid") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name):
    return Path(str(resources.files("tvfluid") / "scenarios" / f"{name}.json"))


def load_bundled(name):
    return load(bundled_path(name))
