"""Command-line driver: ``tvfluid {solve,simulate,compare,equivalence,check-invariants}``.

Every subcommand reads one scenario file and writes CSV/JSON into ``--out``.
Floats go out as ``.17g`` in CSV and shortest round-trip repr in JSON, so
reruns of the same scenario and seed are byte-identical.

Exit codes: 0 success, 2 invalid input, 3 solver divergence, 4 invariant
violation (with ``--strict``).
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import scenario as scn_mod
from .elapsed import equivalence
from .errors import (ConfigurationError, CorrespondenceError, DivergenceError, DomainError,
                     InternalConsistencyError, ScenarioError)
from .invariants import check_invariants, violations
from .processes import balance_residuals, flow_ledger
from .sim import SimScenario, compare, simulate
from .solver import solve

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_INVARIANT = 0, 2, 3, 4

TRAJECTORY_COLUMNS = ("t", "X", "Q", "Z", "omega", "A", "L", "S", "E", "a")


class _Violation(Exception):
    pass


# ---------------------------------------------------------------------------
# emission


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj):
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# runs


def _solve(sc):
    return solve(sc.initial, sc.rate, sc.F, sc.G, sc.solver_config())


def _solver_diagnostics(sol):
    d = sol.diagnostics
    keep = ("windows", "b", "kappa", "M", "L", "Q0", "residual")
    return {k: d[k] for k in keep if k in d}


def run_solve(sc, out, strict=False):
    sol = _solve(sc)
    led = flow_ledger(sol, check=True)
    write_csv(out / "trajectories.csv", TRAJECTORY_COLUMNS,
              (sol.t, sol.X, sol.Q, sol.Z, sol.omega, led.A, led.L, led.S, led.E, sol.a))
    checks = check_invariants(sol)
    qres, xres = balance_residuals(sol, led)
    diag = {"scenario": sc.name, "h": sol.h, "T": sc.grid.T, "solver": _solver_diagnostics(sol),
            "invariants": [c.as_dict() for c in checks],
            "balance": {"queue": qres, "system": xres}}
    write_json(out / "diagnostics.json", diag)
    bad = violations(checks)
    print(f"{sc.name}: X(T)={sol.X[-1]:.6g} residual={sol.diagnostics['residual']:.3g} "
          f"windows={len(sol.diagnostics['windows'])} violations={len(bad)}")
    if strict and bad:
        raise _Violation(", ".join(c.name for c in bad))
    return sol


def _sim_block(sc):
    if sc.sim is None:
        raise ScenarioError("sim", "scenario has no sim block")
    return sc.sim


def _ensembles(sc):
    block = _sim_block(sc)
    out = []
    for n in block["n"]:
        s = SimScenario(n, sc.rate, sc.F, sc.G, sc.initial, sc.grid, block["seed"], block["replications"])
        out.append(simulate(s))
    return out


def run_simulate(sc, out, strict=False):
    summary = []
    for ens in _ensembles(sc):
        n = ens.n
        write_csv(out / f"sim_n{n}_ensemble.csv", ("t", "mean_X", "mean_Q", "mean_Z", "var_X"),
                  (ens.t, ens.mean_X, ens.mean_Q, ens.mean_Z, ens.var_X))
        reps = ens.X.shape[0]
        write_csv(out / f"sim_n{n}_replications.csv", ("t", *(f"X_rep{r}" for r in range(reps))),
                  (ens.t, *ens.X))
        summary.append({"n": n, "replications": reps, "paths": ens.stats})
        print(f"{sc.name}: n={n} replications={reps} mean X(T)={ens.mean_X[-1]:.6g}")
    write_json(out / "simulate.json", {"scenario": sc.name, "seed": sc.sim["seed"], "runs": summary})


def run_compare(sc, out, strict=False):
    _sim_block(sc)
    sol = _solve(sc)
    ens = _ensembles(sc)
    rows = [compare(sol, e) for e in ens]
    header = ("t", "fluid_X", *(f"mean_X_n{e.n}" for e in ens))
    write_csv(out / "comparison.csv", header, (sol.t, sol.X, *(e.mean_X for e in ens)))
    write_csv(out / "sup_errors.csv", ("n", "sup_X", "sup_Q", "sup_Z"),
              ([r["n"] for r in rows], [r["sup_X"] for r in rows], [r["sup_Q"] for r in rows],
               [r["sup_Z"] for r in rows]))
    sup = [r["sup_X"] for r in rows]
    summary = {"scenario": sc.name, "seed": sc.sim["seed"], "replications": sc.sim["replications"],
               "errors": rows, "sup_X_strictly_decreasing": all(a > b for a, b in zip(sup, sup[1:]))}
    write_json(out / "compare.json", summary)
    for r in rows:
        print(f"{sc.name}: n={r['n']} sup|mean X_n/n - X|={r['sup_X']:.4g}")
    return summary


def run_equivalence(sc, out, strict=False):
    if sc.elapsed is None:
        raise ScenarioError("initial.form", "equivalence needs the elapsed form")
    rep, _ = equivalence(sc.elapsed, sc.rate, sc.F, sc.G, sc.solver_config())
    write_json(out / "equivalence.json", {"scenario": sc.name, **rep.as_dict()})
    print(f"{sc.name}: max |dQ|={rep.max_Q:.3g} |dZ|={rep.max_Z:.3g} |dL|={rep.max_L:.3g} "
          f"allowed={rep.allowed:.3g}")
    if strict and not rep.passed:
        raise _Violation("elapsed and residual descriptions disagree beyond the allowance")
    return rep


def run_check_invariants(sc, out, strict=False):
    sol = _solve(sc)
    checks = check_invariants(sol)
    write_json(out / "invariants.json", {"scenario": sc.name, "h": sol.h,
                                         "checks": [c.as_dict() for c in checks]})
    for c in checks:
        print(f"{'ok  ' if c.passed else 'FAIL'} {c.name}: {c.measured:.3g} (allowed {c.allowed:.3g})")
    bad = violations(checks)
    if strict and bad:
        raise _Violation(", ".join(c.name for c in bad))
    return checks


COMMANDS = {
    "solve": run_solve,
    "simulate": run_simulate,
    "compare": run_compare,
    "equivalence": run_equivalence,
    "check-invariants": run_check_invariants,
}


# ---------------------------------------------------------------------------
# argument handling


def _add_common(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--scenario", default=d, help="scenario file, or the name of a bundled scenario")
    p.add_argument("--out", default=d, help="output directory (created if missing; default: .)")
    p.add_argument("--grid-h", type=float, default=d, help="override the grid step")
    p.add_argument("--seed", type=int, default=d, help="override the simulation seed")
    p.add_argument("--strict", action="store_true", default=d, help="exit 4 on invariant violations")


def build_parser():
    p = argparse.ArgumentParser(prog="tvfluid", description=__doc__.splitlines()[0])
    _add_common(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name), suppress=True)
    return p


def load_scenario(ref, grid_h=None, seed=None):
    path = Path(ref)
    if not path.exists() and ref in scn_mod.bundled():
        path = scn_mod.bundled_path(ref)
    sc = scn_mod.load(path)
    if grid_h is None and seed is None:
        return sc
    spec = sc.to_dict()
    if grid_h is not None:
        spec["grid"]["h"] = float(grid_h)
    if seed is not None:
        if "sim" not in spec:
            raise ScenarioError("sim.seed", "--seed given but the scenario has no sim block")
        spec["sim"]["seed"] = int(seed)
    return scn_mod.parse(spec)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not args.scenario:
        print("tvfluid: error: --scenario is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        sc = load_scenario(args.scenario, args.grid_h, args.seed)
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](sc, out, bool(args.strict))
    except ScenarioError as exc:
        print(f"tvfluid: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigurationError, DomainError, CorrespondenceError) as exc:
        print(f"tvfluid: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"tvfluid: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (_Violation, InternalConsistencyError) as exc:
        print(f"tvfluid: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
