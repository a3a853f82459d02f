"""Runtime checks of the structural properties every solved trajectory must satisfy."""

from dataclasses import asdict, dataclass

import numpy as np

from .processes import buffer_departures
from .solver import residual


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    allowed: float

    @property
    def passed(self):
        return bool(self.measured <= self.allowed)

    def as_dict(self):
        return {**asdict(self), "passed": self.passed}


def _max_drop(v):
    """Largest ``v_i - v_j`` over ``i < j`` (0 for a nondecreasing sequence)."""
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return 0.0
    return float(max(0.0, np.max(np.maximum.accumulate(v)[:-1] - v[1:])))


def check_invariants(sol):
    """All runtime checks with measured values and allowances."""
    h = sol.h
    lam = sol.sup_rate
    X = np.asarray(sol.X)
    Q = np.asarray(sol.Q)
    Z = np.asarray(sol.Z)
    t = sol.t
    mu = sol.G.mu
    out = [
        Check("key_equation_residual", residual(sol), sol.config.picard_tol),
        Check("nonidling_split", float(max(np.max(np.abs(Q - np.maximum(X - 1, 0))),
                                           np.max(np.abs(Z - np.minimum(X, 1))))), 0.0),
        Check("nonnegative_content", float(max(0.0, -X.min())), 0.0),
        Check("entered_service_monotone", _max_drop(sol.a), 10 * h * lam),
        Check("queue_below_max", float(max(0.0, np.max(Q - np.asarray(sol.n_f)))), 10 * h * lam),
        Check("arrival_epoch_monotone", _max_drop(t - np.asarray(sol.omega)), 10 * h),
        Check("bounded_increments", float(np.max(np.abs(np.diff(X)))) if X.size > 1 else 0.0,
              (lam + 2 * mu + 1) * h),
        Check("queue_only_when_full", float(np.max(Q * (1 - Z))), 10 * h),
        Check("buffer_outflow_monotone", _max_drop(buffer_departures(sol)), 10 * h * lam),
    ]
    return out


def violations(checks):
    return [c for c in checks if not c.passed]
