"""Discrete-event simulation of the n-server queue with abandonment.

Arrivals are a nonhomogeneous Poisson process at rate ``n lambda(t)``
(thinning), service is FCFS, and a waiting customer leaves once its
patience runs out before service starts. Each replication draws from its
own Philox stream keyed by ``(seed, replication)``.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .dist import DistributionModel, RateFunction
from .errors import ConfigurationError, DomainError, InternalConsistencyError
from .kernel import Grid
from .solver import InitialCondition, extended_rate


@dataclass(frozen=True, eq=False)
class SimScenario:
    n: int
    rate: RateFunction
    F: DistributionModel
    G: DistributionModel
    initial: InitialCondition
    grid: Grid
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"server count must be a positive integer, got {self.n}")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigurationError(f"replications must be a positive integer, got {self.replications}")


@dataclass(frozen=True, eq=False)
class SimEnsemble:
    """Scaled paths ``X_n/n``, ``Q_n/n``, ``Z_n/n`` on the grid, one row per replication."""

    t: np.ndarray
    n: int
    X: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    stats: list = field(default_factory=list)

    @property
    def mean_X(self):
        return self.X.mean(axis=0)

    @property
    def mean_Q(self):
        return self.Q.mean(axis=0)

    @property
    def mean_Z(self):
        return self.Z.mean(axis=0)

    @property
    def var_X(self):
        return self.X.var(axis=0, ddof=1) if self.X.shape[0] > 1 else np.zeros(self.t.size)

    @classmethod
    def from_fluid(cls, sol):
        """Noise-free stand-in built from a fluid trajectory (the large-``n`` limit)."""
        row = lambda v: np.asarray(v, dtype=float)[None, :].copy()
        return cls(np.asarray(sol.t), math.inf, row(sol.X), row(sol.Q), row(sol.Z))


# ---------------------------------------------------------------------------
# sampling helpers


def _inverse_table(x, cdf, u):
    """Smallest ``x`` with ``cdf(x) >= u`` with linear interpolation inside a cell."""
    j = np.searchsorted(cdf, u, side="left")
    j = np.clip(j, 1, x.size - 1)
    c0, c1 = cdf[j - 1], cdf[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        th = np.where(c1 > c0, (u - c0) / (c1 - c0), 1.0)
    return x[j - 1] + np.clip(th, 0.0, 1.0) * (x[j] - x[j - 1])


def _arrivals(rng, rate, n, T):
    lam_max = rate.sup(0.0, T)
    if not math.isfinite(lam_max):
        raise ConfigurationError("arrival rate must be bounded on the horizon")
    if lam_max <= 0:
        return np.empty(0)
    m = rng.poisson(n * lam_max * T)
    t = np.sort(rng.random(m)) * T
    keep = rng.random(m) * lam_max < rate(t)
    return t[keep]


class _InitialSampler:
    """Tabulated inverse transforms for the initial waiters and in-service customers."""

    def __init__(self, ic, rate, F, T, points=4001):
        self.ic = ic
        self.F = F
        self.Q0 = ic.queue_mass(F)
        self.Z0 = ic.Z0
        if self.Q0 > 0:
            xs = np.linspace(0.0, ic.omega0, points)
            dens = F.sf_ext(xs) * rate(-xs)
            cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(xs) * (dens[1:] + dens[:-1]))])
            self.age_x, self.age_cdf = xs, cum / cum[-1]
        if self.Z0 > 0:
            xs = np.linspace(0.0, T, max(points, int(T * 1000) + 1))
            self.res_x = xs
            self.res_cdf = 1.0 - ic.z0_complement(xs) / self.Z0
            self.T = T

    def waiters(self, rng, n):
        k = int(math.floor(n * self.Q0 + 1e-9))
        if k == 0:
            return np.empty(0), np.empty(0)
        ages = _inverse_table(self.age_x, self.age_cdf, rng.random(k))
        pat = self.F.sample_beyond(rng, ages)
        order = np.argsort(-ages, kind="stable")  # oldest first
        return -ages[order], pat[order]

    def in_service(self, rng, n):
        k = int(math.floor(n * self.Z0 + 1e-9))
        if k == 0:
            return np.empty(0)
        u = rng.random(k)
        res = _inverse_table(self.res_x, self.res_cdf, u)
        return np.where(u > self.res_cdf[-1], np.inf, res)


def _replication(scn, sampler, full_rate, rep, kernels):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(scn.seed), int(rep)])))
    n = int(scn.n)
    T = scn.grid.N * scn.grid.h
    busy = sampler.in_service(rng, n) if sampler.Z0 > 0 else np.empty(0)
    w_arr, w_pat = sampler.waiters(rng, n) if sampler.Q0 > 0 else (np.empty(0), np.empty(0))
    arr_new = _arrivals(rng, scn.rate, n, T)
    pat_new = scn.F.sample(rng, arr_new.size)
    arr = np.concatenate([w_arr, arr_new])
    pat = np.concatenate([w_pat, pat_new])
    svc = scn.G.sample(rng, arr.size)
    free = np.sort(np.concatenate([busy, np.zeros(n - busy.size)]))
    start, depart, served = kernels.fcfs(arr, pat, svc, free)

    t = scn.grid.nodes
    cnt = lambda v: np.searchsorted(np.sort(v), t, side="right")
    init_busy = busy.size - cnt(busy)
    X = init_busy + cnt(arr) - cnt(depart)
    st = start[served]
    Z = init_busy + cnt(st) - cnt(depart[served])
    Q = X - Z

    if np.any(Z > n) or np.any(Z < 0) or np.any(Q < 0):
        raise InternalConsistencyError(f"replication {rep}: occupancy out of range")
    if np.any((Q > 0) & (Z < n)):
        raise InternalConsistencyError(f"replication {rep}: customers wait while a server idles")
    arrived = int(np.sum(arr <= T))
    entered = int(np.sum(st <= T))
    abandoned = int(np.sum(~served & (depart <= T)))
    if arrived != entered + abandoned + int(Q[-1]):
        raise InternalConsistencyError(f"replication {rep}: arrivals do not balance")
    stats = {"replication": rep, "arrived": arrived, "entered": entered, "abandoned": abandoned,
             "waiting_at_T": int(Q[-1])}
    return X / n, Q / n, Z / n, stats


def _threads():
    env = os.environ.get("TVFLUID_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate(scn, threads=None):
    """Run all replications and collect the scaled grid paths."""
    full = extended_rate(scn.initial, scn.rate)
    T = scn.grid.N * scn.grid.h
    if scn.rate.t_max < T - 1e-9:
        raise ConfigurationError("arrival rate must cover the horizon")
    sampler = _InitialSampler(scn.initial, full, scn.F, T)
    kernels = _backend.kernels
    reps = range(int(scn.replications))
    workers = min(threads or _threads(), len(reps))
    run = lambda r: _replication(scn, sampler, full, r, kernels)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(run, reps))
    else:
        out = [run(r) for r in reps]
    X, Q, Z, stats = zip(*out)
    return SimEnsemble(scn.grid.nodes, int(scn.n), np.array(X), np.array(Q), np.array(Z), list(stats))


def compare(sol, ens):
    """Sup-over-grid gaps between ensemble means and the fluid trajectories."""
    t = np.asarray(sol.t)
    if t.shape != ens.t.shape or np.max(np.abs(t - ens.t)) > 1e-9:
        raise DomainError("fluid solution and ensemble are on different grids")
    return {"n": ens.n,
            "sup_X": float(np.max(np.abs(ens.mean_X - sol.X))),
            "sup_Q": float(np.max(np.abs(ens.mean_Q - sol.Q))),
            "sup_Z": float(np.max(np.abs(ens.mean_Z - sol.Z)))}
