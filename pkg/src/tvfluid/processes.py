"""Processes derived from a solved fluid content: waiting time, residual measures, flow ledger."""

from dataclasses import dataclass

import numpy as np

from . import _quad
from .errors import DomainError, InternalConsistencyError
from .solver import _conv_sum


def _origin(sol):
    if sol.node_offset != 0:
        raise DomainError("derived processes need a solution that starts at time 0")


def waiting_time(sol):
    """``omega(t) = F_{d,t}^{-1}(Q(t))`` at every node (capped at ``min(t + omega0, S_F)``)."""
    return np.array(sol.omega)


def virtual_buffer_measure(sol, t, x):
    """Virtual-buffer mass with residual patience above ``x``: ``int_0^omega F^c(x + u) lambda(t - u) du``."""
    k = sol.index(t)
    t = sol.t[k]
    om = float(sol.omega[k])
    F, rate = sol.F, sol.rate
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(xs.size)
    bps = t - rate.times
    for i, xi in enumerate(xs):
        if om <= 0 or xi >= F.support_end:
            out[i] = 0.0
            continue
        f = lambda u, xi=xi: F.sf_ext(xi + u) * rate(t - u)
        out[i] = _quad.integrate(f, 0.0, om, splits=[-xi, F.support_end - xi, *bps], step=sol.h)
    return out if np.ndim(x) else float(out[0])


def buffer_departures(sol):
    """``B(t) = E(t - omega(t))`` with ``E`` signed from time 0."""
    return sol.rate.E(sol.t - np.asarray(sol.omega))


def _check_increments(sol, B):
    dB = np.diff(B)
    slack = 10 * sol.h * sol.sup_rate
    if dB.size and dB.min() < -slack:
        i = int(np.argmin(dB))
        raise InternalConsistencyError(
            f"buffer outflow decreases by {-dB[i]:.3g} between t={sol.t[i]:.6g} and t={sol.t[i + 1]:.6g} "
            f"(allowed {slack:.3g})")
    return dB


def in_service_measure(sol, t, x):
    """In-service mass with residual service above ``x`` at node ``t``."""
    _origin(sol)
    k = sol.index(t)
    G, F = sol.G, sol.F
    B = buffer_departures(sol)
    dB = _check_increments(sol, B[:k + 1])
    s = sol.t[:k + 1]
    adm = F.sf_ext(np.asarray(sol.omega[:k + 1]))
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise DomainError("residual service must be nonnegative")
    out = np.empty(xs.size)
    for i, xi in enumerate(xs):
        w = adm * G.complement(xi + s[k] - s)
        out[i] = sol.ic.z0_complement(xi + s[k]) + float(np.sum(0.5 * (w[1:] + w[:-1]) * dB))
    return out if np.ndim(x) else float(out[0])


@dataclass(frozen=True, eq=False)
class FlowLedger:
    """Cumulative flows at the nodes: left buffer ``B``, entered service ``A``,
    abandoned ``L``, completed ``S`` and arrived ``E``."""

    t: np.ndarray
    B: np.ndarray
    A: np.ndarray
    L: np.ndarray
    S: np.ndarray
    E: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in ("t", "B", "A", "L", "S", "E")}


def flow_ledger(sol, check=True):
    """Balance-equation flows; raises if a flow decreases by more than ``10 h sup(lambda)``."""
    _origin(sol)
    h = sol.h
    t = sol.t
    A = np.array(sol.a)
    ft = np.asarray(sol.f_omega)
    L = np.concatenate([[0.0], np.cumsum(0.5 * h * (ft[1:] + ft[:-1]))])
    dA = np.zeros(A.size)
    dA[1:] = 0.5 * np.diff(A)
    z0c = sol.ic.z0_complement(t)
    S = (z0c[0] - z0c) + _conv_sum(dA, sol.G.cdf(t))
    E = sol.rate.E(t)
    B = buffer_departures(sol)
    led = FlowLedger(t, B, A, L, S, E)
    if check:
        slack = 10 * h * sol.sup_rate
        for name in ("B", "A", "L", "S", "E"):
            d = np.diff(getattr(led, name))
            if d.size and d.min() < -slack:
                raise InternalConsistencyError(f"flow {name} decreases by {-d.min():.3g} (allowed {slack:.3g})")
    return led


def balance_residuals(sol, ledger):
    """``(queue, system)`` maximum node residuals of the two balance equations."""
    Q = np.asarray(sol.Q)
    X = np.asarray(sol.X)
    qres = np.abs(Q - (Q[0] + ledger.E - ledger.L - ledger.A))
    xres = np.abs(X - (X[0] + ledger.E - ledger.L - ledger.S))
    return float(qres.max()), float(xres.max())


def abandonment_crosscheck(sol):
    """``E(t) - int_0^t H_s(Q(s)) ds`` computed from node values of ``H`` (trapezoid)."""
    H = np.asarray(sol.H)
    integ = np.concatenate([[0.0], np.cumsum(0.5 * sol.h * (H[1:] + H[:-1]))])
    return sol.rate.E(sol.t) - integ
