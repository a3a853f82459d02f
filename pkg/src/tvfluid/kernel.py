"""Time-varying kernels ``F_t``, ``F_{d,t}``, its inverse, ``N_{F,t}`` and ``H_t``.

For a grid node ``t`` the functions of the lag ``x`` are

    F_{d,t}(x) = int_0^x F^c(s) lambda(t - s) ds
    F_t(x)     = int_0^x f(s) lambda(t - s) ds

with ``x`` ranging over ``[0, t + omega0]``. On each lag cell the rate is
linear, so the tables below are exact at lag nodes: the cell integrals
reduce to the moments ``int F^c``, ``int (s-a) F^c``, ``int dF`` and
``int (s-a) dF`` of the distribution, which come from closed forms.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _backend
from .dist import DistributionModel, RateFunction
from .errors import ConfigurationError, DomainError


class KernelClampWarning(UserWarning):
    """An ``x`` argument beyond ``t + omega0`` was clamped to the domain edge."""


@dataclass(frozen=True)
class Grid:
    """Uniform nodes ``t_i = i h`` on ``[0, T]``."""

    h: float
    T: float

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigurationError(f"grid step must be positive, got {self.h}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        if self.h > self.T:
            raise ConfigurationError(f"grid step {self.h} exceeds horizon {self.T}")

    @property
    def N(self):
        """Index of the last node."""
        return int(math.floor(self.T / self.h + 1e-9))

    @property
    def n_nodes(self):
        return self.N + 1

    @property
    def nodes(self):
        return np.arange(self.n_nodes) * self.h

    def index(self, t):
        """Node index of time ``t``; raises if ``t`` is not a node."""
        k = int(round(t / self.h))
        if k < 0 or k > self.N or abs(k * self.h - t) > 1e-9 * max(self.h, abs(t)):
            raise DomainError(f"t={t} is not a node of the grid (h={self.h}, T={self.T})")
        return k

    def steps_for(self, length, what="length"):
        """Number of steps spanning ``length``; must be a whole multiple of ``h``."""
        k = int(round(length / self.h))
        if abs(k * self.h - length) > 1e-9 * max(1.0, length):
            raise ConfigurationError(f"{what} {length} is not a multiple of the grid step {self.h}")
        return k

    def refine(self, factor=2):
        return Grid(self.h / factor, self.T)


class KernelCache:
    """Tabulated kernels for every node of a grid.

    ``rate`` must be defined on ``[-omega0, T]``; ``omega0`` must be a
    multiple of ``h``. Only the O(T/h) per-cell coefficients are stored;
    node tables are rebuilt on demand (cheap, compiled).
    """

    def __init__(self, grid, rate, F, omega0=0.0):
        if not isinstance(rate, RateFunction):
            raise ConfigurationError("rate must be a RateFunction")
        if not isinstance(F, DistributionModel):
            raise ConfigurationError("F must be a DistributionModel")
        F.validate_role("patience")
        self.grid = grid
        self.rate = rate
        self.F = F
        self.omega0 = float(omega0)
        h = grid.h
        self.K0 = grid.steps_for(self.omega0, "omega0") if self.omega0 > 0 else 0
        N = grid.N
        if rate.t_min > -self.K0 * h + 1e-9 or rate.t_max < N * h - 1e-9:
            raise ConfigurationError(
                f"rate must cover [{-self.K0 * h}, {N * h}], got [{rate.t_min}, {rate.t_max}]")
        ncell = N + self.K0
        tedges = (np.arange(ncell + 1) - self.K0) * h
        self.lamL, self.lamR = (np.ascontiguousarray(v) for v in rate.cell_limits(tedges))
        lag = np.arange(ncell + 1) * h
        self.M0, self.M1 = F.cell_moments(lag)
        sf = F.complement(lag)
        self.m0 = sf[:-1] - sf[1:]
        self.m1 = self.M0 - h * sf[1:]
        t = grid.nodes
        # H enters the trapezoid sums as the left limit at a cell end and the
        # right limit at a cell start; nodes carry the left limit (the right
        # limit at t = 0) and the jump is kept separately
        lam = np.empty(N + 1)
        jump = np.zeros(N + 1)
        lam[0] = rate(0.0)
        lam[N] = rate.left_limit(t[N])
        if N > 1:
            inner = rate._snap(t[1:N])
            lam[1:N] = rate.left_limit(inner)
            jump[1:N] = rate(inner) - lam[1:N]
        self.lam_node = lam
        self.lam_jump = jump
        self.cap = np.minimum(t + self.omega0, F.support_end)
        self.kernels = _backend.kernels

    # -- node tables ------------------------------------------------------
    def _args(self):
        return (self.K0, self.lamL, self.lamR, self.M0, self.M1, self.m0, self.m1, self.grid.h)

    def table_node(self, k):
        """Which node's table serves node ``k`` (identity here)."""
        return k

    def tables(self, k):
        """``(F_{d,t_k}, F_{t_k})`` at lag nodes ``0, h, ..., t_k + omega0``."""
        return self.kernels.build_tables(self.table_node(k), *self._args())

    def window_tables(self, k0, k1):
        return self.kernels.window_tables(k0, k1, *self._args())

    def node_sweep(self, q, k_first):
        """``H``, waiting time, ``F_t`` at it and ``N_F`` for nodes ``k_first..``."""
        return self.kernels.node_sweep(np.ascontiguousarray(q, dtype=float), k_first, *self._args(),
                                       self.lam_node, self.cap)

    def n_f(self, t):
        """Maximum queue mass ``N_{F,t}``."""
        Fd, _ = self.tables(self.grid.index(t))
        return float(Fd[-1])

    # -- exact evaluation at arbitrary lag ---------------------------------
    def _partial(self, k, x):
        """Exact ``(F_{d,t}(x), F_t(x))`` for one lag ``x`` in ``[0, t_k + omega0]``."""
        Fd, Ft = self.tables(k)
        h = self.grid.h
        c = min(int(x // h), Fd.size - 2)
        if c < 0:
            return 0.0, 0.0
        a = c * h
        u = x - a
        if u <= 0.0:
            return float(Fd[c]), float(Ft[c])
        ti = self.table_node(k) + self.K0 - 1 - c
        lr = self.lamR[ti]
        dl = (self.lamL[ti] - lr) / h
        P0, P1 = self.F.cell_moments(np.array([a, x]))
        sfa, sfx = self.F.complement(np.array([a, x]))
        p0 = sfa - sfx
        p1 = P0[0] - u * sfx
        return float(Fd[c] + lr * P0[0] + dl * P1[0]), float(Ft[c] + lr * p0 + dl * p1)

    def _clamp(self, k, x):
        x = float(x)
        if x < 0:
            raise DomainError(f"lag must be nonnegative, got {x}")
        top = (self.table_node(k) + self.K0) * self.grid.h
        if x > top * (1 + 1e-12):
            warnings.warn(f"lag {x} beyond t+omega0={top}; clamped", KernelClampWarning, stacklevel=3)
            x = top
        return x

    def f_dt(self, t, x):
        k = self.grid.index(t)
        return self._partial(k, self._clamp(k, x))[0]

    def f_t(self, t, x):
        k = self.grid.index(t)
        return self._partial(k, self._clamp(k, x))[1]

    def f_dt_inverse(self, t, y, method="exact"):
        """Generalised inverse ``inf{x >= 0 : F_{d,t}(x) >= y}``, capped at ``min(t+omega0, S_F)``.

        ``method="linear"`` interpolates the node table (the solver's
        discretisation); ``"exact"`` refines inside the bracketing cell.
        """
        k = self.grid.index(t)
        y = float(y)
        if y < 0:
            raise DomainError(f"mass must be nonnegative, got {y}")
        if y == 0:
            return 0.0
        Fd, _ = self.tables(k)
        if y >= Fd[-1]:
            return float(self.cap[k])
        j, th = self.kernels.lookup(Fd, Fd.size, y)
        if j == 0:
            return 0.0
        h = self.grid.h
        x_lin = (j - 1 + th) * h
        if method == "linear":
            return x_lin
        if method != "exact":
            raise ValueError(method)
        a, b = (j - 1) * h, j * h
        return float(optimize.brentq(lambda s: self._partial(k, s)[0] - y, a, b, xtol=1e-15, rtol=1e-15))

    def h_t(self, t, y, method="exact"):
        """``H_t(y) = lambda(t) - F_t(F_{d,t}^{-1}(y))`` with the truncation above ``N_{F,t}``."""
        k = self.grid.index(t)
        y = float(y)
        if y < 0:
            raise DomainError(f"mass must be nonnegative, got {y}")
        Fd, Ft = self.tables(k)
        lam = self.lam_node[k] + self.lam_jump[k]
        if method == "linear":
            return float(self.kernels.h_value(Fd, Ft, Fd.size, lam, y))
        if y >= Fd[-1]:
            return float(lam - Ft[-1])
        x = self.f_dt_inverse(t, y, method)
        return float(lam - self._partial(k, x)[1])


class ConstantRateKernel(KernelCache):
    """Kernel of a constant rate ``lambda0`` using the untruncated constant-rate ``F_d``.

    Every node shares the table of the last node, i.e. ``lambda0 F_d`` on
    ``[0, T + omega0]``, so ``H_t(y) = lambda0 H(y / lambda0)`` and the
    discretisation matches ``KernelCache`` node for node below ``N_{F,t}``.
    """

    def __init__(self, grid, lambda0, F, omega0=0.0):
        if not lambda0 > 0:
            raise ConfigurationError("constant rate must be positive")
        self.lambda0 = float(lambda0)
        rate = RateFunction.constant(lambda0, -float(omega0), grid.N * grid.h)
        super().__init__(grid, rate, F, omega0)
        self.cap = np.full(grid.n_nodes, min(grid.N * grid.h + self.omega0, F.support_end))

    def table_node(self, k):
        return self.grid.N

    def window_tables(self, k0, k1):
        Fd, Ft = self.tables(k0)
        m = k1 - k0
        return (np.ascontiguousarray(np.tile(Fd, (m, 1))), np.ascontiguousarray(np.tile(Ft, (m, 1))),
                np.full(m, Fd.size, dtype=np.int64))

    def node_sweep(self, q, k_first):
        Fd, Ft = self.tables(k_first)
        L = Fd.size
        h = self.grid.h
        q = np.asarray(q, dtype=float)
        H, om, ft = (np.empty(q.size) for _ in range(3))
        for i, qi in enumerate(q):
            j, th = self.kernels.lookup(Fd, L, qi)
            x = 0.0 if j == 0 else (j - 1 + th) * h
            fx = Ft[0] if j == 0 else Ft[j - 1] + th * (Ft[j] - Ft[j - 1])
            H[i] = self.lam_node[k_first + i] - fx
            ft[i] = fx
            om[i] = self.cap[k_first + i] if qi >= Fd[-1] and qi > 0.0 else x
        return H, om, ft, np.full(q.size, Fd[-1])


def constant_rate_h(y, lambda0, F):
    """``lambda0 F^c(F_d^{-1}(y / lambda0))`` with ``F_d(x) = int_0^x F^c``; zero once ``y >= lambda0 E[F]``."""
    if not lambda0 > 0:
        raise DomainError("lambda0 must be positive")
    y = float(y)
    if y < 0:
        raise DomainError(f"mass must be nonnegative, got {y}")
    u = y / lambda0
    if u >= F.mean:
        return 0.0
    if u == 0.0:
        return float(lambda0)
    if F.family == "exponential":
        return float(lambda0 - F.params["rate"] * y)
    hi = min(F.support_end, max(1.0, 2 * F.mean))
    while F.integrated_complement(hi) < u:
        hi *= 2.0
    x = optimize.brentq(lambda s: F.integrated_complement(s) - u, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return float(lambda0 * F.complement(x))
