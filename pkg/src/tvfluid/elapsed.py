"""Elapsed-time (age) description of the fluid model.

One solve of the key equation drives both descriptions. This module maps
age densities at time 0 to the residual-form initial condition and then
rebuilds the age-based queue, service and abandonment quantities from the
solved trajectory, so the two descriptions can be compared node by node.
"""

from dataclasses import dataclass

import numpy as np

from . import _quad
from .dist import RateFunction
from .errors import ConfigurationError, CorrespondenceError, DomainError
from .kernel import ConstantRateKernel
from .processes import flow_ledger
from .solver import InitialCondition, aged_service_mass, extended_rate, solve


def _table(x, v, what):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim != 1 or x.shape != v.shape or x.size < 2:
        raise ConfigurationError(f"{what} needs matching 1-d knot and value arrays")
    if x[0] != 0 or np.any(np.diff(x) <= 0):
        raise ConfigurationError(f"{what} knots must start at 0 and increase")
    if np.any(v < 0):
        raise ConfigurationError(f"{what} must be nonnegative")
    return x, v


@dataclass(frozen=True, eq=False)
class ElapsedInitialCondition:
    """Age densities at time 0: ``r0`` for the queue, ``z0`` for service.

    Both are piecewise linear between knots; ``None`` means no mass.
    """

    r0_x: np.ndarray = None
    r0: np.ndarray = None
    z0_x: np.ndarray = None
    z0: np.ndarray = None

    def __post_init__(self):
        if self.r0 is not None:
            x, v = _table(self.r0_x, self.r0, "r0")
            object.__setattr__(self, "r0_x", x)
            object.__setattr__(self, "r0", v)
        if self.z0 is not None:
            x, v = _table(self.z0_x, self.z0, "z0")
            object.__setattr__(self, "z0_x", x)
            object.__setattr__(self, "z0", v)
            if self.service_mass > 1 + 1e-12:
                raise ConfigurationError(f"initial service mass {self.service_mass} exceeds 1")

    @property
    def queue_mass(self):
        return 0.0 if self.r0 is None else float(np.trapezoid(self.r0, self.r0_x))

    @property
    def service_mass(self):
        return 0.0 if self.z0 is None else float(np.trapezoid(self.z0, self.z0_x))

    @property
    def w0(self):
        """Oldest queue age carrying mass."""
        if self.r0 is None or not np.any(self.r0 > 0):
            return 0.0
        last = np.flatnonzero(self.r0 > 0)[-1]
        return float(self.r0_x[min(last + 1, self.r0_x.size - 1)])

    def r0_at(self, x):
        if self.r0 is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.interp(x, self.r0_x, self.r0, right=0.0)

    def to_spec(self):
        out = {}
        if self.r0 is not None:
            out["r0"] = {"x": self.r0_x.tolist(), "values": self.r0.tolist()}
        if self.z0 is not None:
            out["z0"] = {"x": self.z0_x.tolist(), "values": self.z0.tolist()}
        return out

    @classmethod
    def from_spec(cls, spec):
        r = spec.get("r0")
        z = spec.get("z0")
        return cls(None if r is None else r["x"], None if r is None else r["values"],
                   None if z is None else z["x"], None if z is None else z["values"])


def to_residual_ic(eic, F, G):
    """Residual-form initial condition matching the age densities.

    The pre-zero rate is ``r0(x) / F^c(x)`` at ``-x`` for every ``r0`` knot
    (linear in between); the in-service complement is
    ``int G^c(s + x) / G^c(s) z0(s) ds``.
    """
    w0 = eic.w0
    pre = None
    if w0 > 0:
        xs = eic.r0_x[eic.r0_x <= w0 + 1e-12]
        sf = F.complement(xs)
        vals = eic.r0_at(xs)
        bad = (vals > 0) & (sf <= 0)
        if np.any(bad):
            raise CorrespondenceError(
                f"queue-age density is positive at age {xs[bad][0]:.6g} where the patience complement vanishes")
        lam = np.where(sf > 0, vals / np.where(sf > 0, sf, 1.0), 0.0)
        pre = RateFunction.linear((-xs)[::-1], lam[::-1])
    z_spec = {"kind": "empty"}
    if eic.z0 is not None and eic.service_mass > 0:
        sg = G.complement(eic.z0_x)
        bad = (eic.z0 > 0) & (sg <= 0)
        if np.any(bad):
            raise CorrespondenceError(
                f"service-age density is positive at age {eic.z0_x[bad][0]:.6g} beyond the service support")
        seg_pos = (eic.z0[:-1] > 0) | (eic.z0[1:] > 0)
        if np.any(seg_pos & (eic.z0_x[:-1] >= G.support_end)):
            raise CorrespondenceError("service-age density has mass beyond the service support")
        z_spec = {"kind": "elapsed", "x": eic.z0_x.tolist(), "values": eic.z0.tolist()}
    return InitialCondition(w0, pre, z_spec, G)


# ---------------------------------------------------------------------------
# age-side measures


def elapsed_queue_measure(sol, t, x):
    """Queue mass with age at most ``x``: ``int_0^x F^c(u) lambda(t - u) du``."""
    k = sol.index(t)
    t = sol.t[k]
    x = float(x)
    if x < 0:
        raise DomainError("age must be nonnegative")
    x = min(x, t - sol.rate.t_min)
    if x <= 0:
        return 0.0
    F, rate = sol.F, sol.rate
    f = lambda u: F.sf_ext(u) * rate(t - u)
    return _quad.integrate(f, 0.0, x, splits=[F.support_end, *(t - rate.times)], step=sol.h)


def _initial_service_aged(G, eic, t, x=np.inf):
    """``int_{s <= x - t} G^c(s + t) / G^c(s) z0(s) ds``."""
    if eic.z0 is None:
        return 0.0
    return float(aged_service_mass(G, eic.z0_x, eic.z0, np.array([t]), x - t)[0])


def elapsed_service_measure(sol, eic, t, x=np.inf):
    """In-service mass with service age at most ``x`` at node ``t``."""
    if sol.node_offset != 0:
        raise DomainError("age measures need a solution that starts at time 0")
    k = sol.index(t)
    t = sol.t[k]
    G = sol.G
    init = _initial_service_aged(G, eic, t, x)
    A = np.asarray(sol.a)[:k + 1]
    s = sol.t[:k + 1]
    lo = t - x
    a = np.maximum(s[:-1], lo)
    b = s[1:]
    keep = b > a
    if not np.any(keep):
        return init
    rate_cell = np.diff(A) / sol.h
    I = G.integrated_complement
    part = rate_cell[keep] * (I(t - a[keep]) - I(t - b[keep]))
    return init + float(part.sum())


def _inner_abandon(sol, k):
    om = float(sol.omega[k])
    if om <= 0:
        return 0.0
    t = sol.t[k]
    F, rate = sol.F, sol.rate

    def f(u):
        sf = F.sf_ext(u)
        hz = np.zeros_like(sf)
        pos = sf > 0
        hz[pos] = F.pdf_ext(u[pos]) / sf[pos]
        r = sf * rate(t - u)  # queue-age density r(t, u)
        return hz * r

    return _quad.integrate(f, 0.0, om, splits=[F.support_end, *(t - rate.times)], step=sol.h)


def elapsed_abandonment_path(sol):
    """Cumulative abandonment at every node from the hazard-weighted age density."""
    inner = np.array([_inner_abandon(sol, k) for k in range(sol.X.size)])
    return np.concatenate([[0.0], np.cumsum(0.5 * sol.h * (inner[1:] + inner[:-1]))])


def elapsed_abandonment(sol, eic, t):
    """``int_0^t int_0^omega(s) (f / F^c)(x) r(s, x) dx ds``."""
    k = sol.index(t)
    return float(elapsed_abandonment_path(_Prefix(sol, k))[-1])


class _Prefix:
    """Read-only view of the first ``k+1`` nodes of a solution."""

    def __init__(self, sol, k):
        self._sol = sol
        self.X = np.asarray(sol.X)[:k + 1]
        self.omega = np.asarray(sol.omega)[:k + 1]
        self.t = sol.t[:k + 1]

    def __getattr__(self, name):
        return getattr(self._sol, name)


# ---------------------------------------------------------------------------
# equivalence


@dataclass(frozen=True)
class EquivalenceReport:
    h: float
    max_Q: float
    max_Z: float
    max_L: float
    allowed: float
    constant_rate_gap: float = None

    @property
    def passed(self):
        ok = max(self.max_Q, self.max_Z, self.max_L) <= self.allowed
        if self.constant_rate_gap is not None:
            ok = ok and self.constant_rate_gap <= 1e-10
        return bool(ok)

    def as_dict(self):
        return {"h": self.h, "max_Q": self.max_Q, "max_Z": self.max_Z, "max_L": self.max_L,
                "allowed": self.allowed, "constant_rate_gap": self.constant_rate_gap, "passed": self.passed}


def equivalence(eic, rate, F, G, cfg):
    """Solve once and compare queue, service and abandonment between the two descriptions."""
    ic = to_residual_ic(eic, F, G)
    sol = solve(ic, rate, F, G, cfg)
    n = sol.X.size
    qa = np.array([elapsed_queue_measure(sol, sol.t[k], sol.omega[k]) for k in range(n)])
    za = np.array([elapsed_service_measure(sol, eic, sol.t[k]) for k in range(n)])
    La = elapsed_abandonment_path(sol)
    Lr = flow_ledger(sol, check=False).L
    lam = sol.sup_rate
    gap = None
    full = extended_rate(ic, rate)
    if full(0.0) > 0 and full.is_constant(tol=1e-9 * full.sup()):
        ck = ConstantRateKernel(cfg.grid, float(full(0.0)), F, ic.omega0)
        csol = solve(ic, rate, F, G, cfg, kernel=ck)
        gap = float(np.max(np.abs(np.asarray(csol.X) - np.asarray(sol.X))))
    rep = EquivalenceReport(cfg.grid.h, float(np.max(np.abs(qa - sol.Q))), float(np.max(np.abs(za - sol.Z))),
                            float(np.max(np.abs(La - Lr))), 10 * cfg.grid.h * (1 + lam), gap)
    return rep, sol


def equivalence_report(scenario):
    """Equivalence report for a scenario whose initial condition is in age form."""
    if scenario.elapsed is None:
        raise ConfigurationError("equivalence needs an elapsed-form initial condition")
    rep, _ = equivalence(scenario.elapsed, scenario.rate, scenario.F, scenario.G, scenario.solver_config())
    return rep
