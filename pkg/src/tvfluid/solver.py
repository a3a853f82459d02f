"""Windowed Picard solver for the key convolution equation of the fluid content ``X``.

The equation is discretised with product-trapezoid Stieltjes sums on the
uniform grid; writing ``a_j = (G_e(t_j) - G_e(t_{j-1})) / (2 mu)`` and
``g_j = (G(t_j) - G(t_{j-1})) / 2`` the node equations read

    X_n = Z0c(t_n) + Q0 G^c(t_n)
          + sum_{j=1}^n a_j (H_{n-j+1} + H_{n-j}) + g_j (q_{n-j+1} + q_{n-j})

with ``q = (X - 1)^+`` and ``H_k = H_{t_k}(q_k)``. The unknowns are solved
window by window; each window is a contraction when its length keeps
``kappa = (L/mu) G_e(b) + G(b)`` below the target.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._quad import _GL_W, _GL_X
from .dist import DistributionModel, RateFunction
from .errors import ConfigurationError, DivergenceError, DomainError
from .kernel import Grid, KernelCache

_MAX_WINDOW_NODES = 256


# ---------------------------------------------------------------------------
# inputs


class InitialCondition:
    """State at time 0 in residual form.

    ``omega0`` is the waiting time of the oldest fluid in the virtual
    buffer, ``pre_rate`` the arrival rate on ``[-omega0, 0]`` and
    ``z0_complement(t)`` the in-service mass with residual service above
    ``t``. ``z0_spec`` describes the latter in scenario-file form.
    """

    def __init__(self, omega0=0.0, pre_rate=None, z0_spec=None, G=None):
        self.omega0 = float(omega0)
        if self.omega0 < 0:
            raise ConfigurationError("omega0 must be nonnegative")
        if self.omega0 > 0 and pre_rate is None:
            raise ConfigurationError("omega0 > 0 needs a pre_rate on [-omega0, 0]")
        if pre_rate is not None and self.omega0 > 0:
            if pre_rate.t_min > -self.omega0 + 1e-9 or pre_rate.t_max < -1e-9:
                raise ConfigurationError(f"pre_rate must cover [-{self.omega0}, 0]")
            pre_rate = pre_rate.restrict(-self.omega0, 0.0)
        self.pre_rate = pre_rate if self.omega0 > 0 else None
        self.z0_spec = dict(z0_spec) if z0_spec else {"kind": "empty"}
        self._z0 = _z0_function(self.z0_spec, G)
        z = self.z0_complement(np.array([0.0]))[0]
        if not (0.0 <= z <= 1.0 + 1e-12):
            raise ConfigurationError(f"initial in-service mass must lie in [0, 1], got {z}")

    @classmethod
    def empty(cls):
        return cls()

    def z0_complement(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("z0_complement needs t >= 0")
        return self._z0(t)

    @property
    def Z0(self):
        return float(self.z0_complement(np.array([0.0]))[0])

    def queue_mass(self, F):
        """``Q(0) = int_0^omega0 F^c(s) lambda(-s) ds`` (exact for piecewise-linear rates)."""
        if self.omega0 == 0:
            return 0.0
        r = self.pre_rate
        edges = np.unique(np.concatenate([[0.0], -r.times[::-1]]))
        edges = edges[(edges >= 0) & (edges <= self.omega0)]
        # lag cells run backwards in time: the rate at a lag-cell start is the time-cell end value
        at_tstart, at_tend = r.cell_limits(-edges[::-1])
        at_lag_end, at_lag_start = at_tstart[::-1], at_tend[::-1]
        M0, M1 = F.cell_moments(edges)
        w = np.diff(edges)
        return float(np.sum(at_lag_start * M0 + (at_lag_end - at_lag_start) / w * M1))

    def to_spec(self):
        out = {"omega0": self.omega0, "z0": dict(self.z0_spec)}
        if self.pre_rate is not None:
            out["pre_rate"] = self.pre_rate.spec or {
                "kind": "linear", "times": self.pre_rate.times.tolist(),
                "left": self.pre_rate.left.tolist(), "right": self.pre_rate.right.tolist()}
        return out

    def validate(self, F, tol=1e-9):
        q0 = self.queue_mass(F)
        if q0 > tol and abs(self.Z0 - 1.0) > tol:
            raise ConfigurationError(
                f"positive initial queue ({q0:.6g}) requires full initial occupancy, got Z(0)={self.Z0:.6g}")
        if self.z0_spec["kind"] == "table":
            v = np.asarray(self.z0_spec["values"], dtype=float)
            if np.any(np.diff(v) > tol):
                raise ConfigurationError("tabulated initial in-service complement must be nonincreasing")
        return q0


def _z0_function(spec, G):
    kind = spec.get("kind", "empty")
    if kind == "empty":
        return lambda t: np.zeros_like(t)
    if kind == "exponential":
        mass, r = float(spec["mass"]), float(spec["rate"])
        return lambda t: mass * np.exp(-r * t)
    if kind == "equilibrium":
        if G is None:
            raise ConfigurationError("z0 kind 'equilibrium' needs the service distribution")
        mass = float(spec["mass"])
        return lambda t: mass * (1.0 - G.equilibrium_cdf(t))
    if kind == "table":
        ts = np.asarray(spec["t"], dtype=float)
        vs = np.asarray(spec["values"], dtype=float)
        if ts.size < 2 or ts[0] != 0 or np.any(np.diff(ts) <= 0):
            raise ConfigurationError("z0 table needs increasing times starting at 0")
        if vs[-1] != 0 and spec.get("tail", "zero") == "zero":
            raise ConfigurationError("z0 table must end at 0 (no mass beyond its last time)")
        return lambda t: np.interp(t, ts, vs, right=vs[-1])
    if kind == "elapsed":
        if G is None:
            raise ConfigurationError("z0 kind 'elapsed' needs the service distribution")
        zx = np.asarray(spec["x"], dtype=float)
        zv = np.asarray(spec["values"], dtype=float)
        return lambda t: aged_service_mass(G, zx, zv, t)
    raise ConfigurationError(f"unknown z0 kind {kind!r}")


def aged_service_mass(G, zx, zv, t, upto=np.inf):
    """``int_0^upto G^c(s + t) / G^c(s) z(s) ds`` for each ``t``; ``z`` piecewise linear on ``zx``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    hi = min(float(upto), float(zx[-1]))
    if hi <= 0:
        return np.zeros(t.shape)
    edges = np.append(zx[zx < hi], hi)
    a, b = edges[:-1], edges[1:]
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    s = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    g0 = G.complement(s)
    dens = np.where(g0 > 0, np.interp(s, zx, zv) / np.where(g0 > 0, g0, 1.0), 0.0) * w
    flat = t.ravel()
    out = np.empty(flat.size)
    for i0 in range(0, flat.size, 512):
        blk = flat[i0:i0 + 512]
        out[i0:i0 + 512] = G.complement(s[None, :] + blk[:, None]) @ dens
    return out.reshape(t.shape)


def extended_rate(ic, rate):
    """Arrival rate on ``[-omega0, T]``, joining the pre-zero history when needed."""
    if ic.omega0 == 0 or rate.t_min <= -ic.omega0 + 1e-12:
        return rate
    if abs(rate.t_min) > 1e-12:
        raise ConfigurationError("rate must start at 0 when the history comes from the initial condition")
    return ic.pre_rate.concat(rate)


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation and iteration controls.

    ``window_cap`` is the constant ``M`` bounding the lag range on which
    the Lipschitz constant of ``H`` is taken. ``None`` picks the ``M``
    that gives the longest window; ``"horizon"`` uses ``M = T``.
    """

    grid: Grid
    picard_tol: float = 1e-10
    max_iters: int = 500
    window_cap: object = None
    kappa_target: float = 0.5
    initial_guess: str = "previous"

    def __post_init__(self):
        if not self.picard_tol > 0:
            raise ConfigurationError("picard_tol must be positive")
        if not 0 < self.kappa_target < 1:
            raise ConfigurationError("kappa_target must lie in (0, 1)")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if self.initial_guess not in ("previous", "zero", "high"):
            raise ConfigurationError(f"unknown initial_guess {self.initial_guess!r}")

    def with_grid(self, grid):
        return SolverConfig(grid, self.picard_tol, self.max_iters, self.window_cap, self.kappa_target,
                            self.initial_guess)


# ---------------------------------------------------------------------------
# window length


def window_length(F, G, cfg):
    """``(b, kappa, M, L)`` for the Picard window."""
    kt = cfg.kappa_target
    SF = F.support_end
    LF = F.lipschitz

    def for_cap(M):
        half = min(SF, M) / 2.0
        sf = float(F.complement(half))
        if sf <= 0:
            return 0.0, math.inf, math.inf
        L = LF / sf
        kap = lambda b: L / G.mu * G.equilibrium_cdf(b) + G.cdf(b) - kt
        hi = 1.0
        while kap(hi) < 0 and hi < 1e6:
            hi *= 2
        b2 = hi if kap(hi) < 0 else optimize.brentq(kap, 0.0, hi, xtol=1e-14)
        return min(half, b2), L, b2

    M = cfg.window_cap
    if M is None:
        top = SF if math.isfinite(SF) else max(cfg.grid.T, 20 * F.mean)
        cands = np.geomspace(cfg.grid.h, top, 200)
        bs = [for_cap(m)[0] for m in cands]
        M = float(cands[int(np.argmax(bs))])
    elif M == "horizon":
        M = cfg.grid.T
    b, L, b2 = for_cap(float(M))
    kappa = L / G.mu * float(G.equilibrium_cdf(b)) + float(G.cdf(b))
    if not b >= cfg.grid.h:
        raise ConfigurationError(
            f"Picard window b={b:.3g} is shorter than the grid step h={cfg.grid.h} "
            f"(M={M:.4g}, L_F={LF:.4g}, L={L:.4g}, mu={G.mu:.4g}, kappa_target={kt})")
    return b, kappa, M, L


# ---------------------------------------------------------------------------
# output


@dataclass(frozen=True, eq=False)
class FluidSolution:
    """Solved trajectories on the nodes ``t0 + i h``.

    ``node_offset`` is the index of the first node in the kernel's grid
    (nonzero for time-shifted solutions).
    """

    grid: Grid
    X: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    omega: np.ndarray
    a: np.ndarray
    H: np.ndarray
    n_f: np.ndarray
    f_omega: np.ndarray
    base: np.ndarray
    diagnostics: dict
    ic: InitialCondition
    rate: RateFunction
    F: DistributionModel
    G: DistributionModel
    config: SolverConfig
    kernel: KernelCache
    node_offset: int = 0
    coeffs: tuple = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("X", "Q", "Z", "omega", "a", "H", "n_f", "f_omega", "base"):
            getattr(self, name).setflags(write=False)

    @property
    def h(self):
        return self.grid.h

    @property
    def t0(self):
        return self.node_offset * self.grid.h

    @property
    def t(self):
        return self.t0 + np.arange(self.X.size) * self.grid.h

    @property
    def Q0(self):
        return float(self.Q[0])

    def index(self, t):
        k = self.grid.index(t)
        if k < self.node_offset:
            raise DomainError(f"t={t} precedes the start of this solution ({self.t0})")
        return k - self.node_offset

    @property
    def sup_rate(self):
        return self.rate.sup(self.t0, self.grid.N * self.grid.h)


# ---------------------------------------------------------------------------
# discrete operator


def _coefficients(G, grid, n):
    t = np.arange(n) * grid.h
    Ge = G.equilibrium_cdf(t)
    Gd = G.cdf(t)
    aw = np.zeros(n)
    gw = np.zeros(n)
    aw[1:] = 0.5 * np.diff(Ge) / G.mu
    gw[1:] = 0.5 * np.diff(Gd)
    return aw, gw


def _conv_sum(w, v):
    """``sum_{j=1}^n w_j (v_{n-j+1} + v_{n-j})`` for every ``n`` (``w_0`` ignored)."""
    n = v.size
    c = w[:n].copy()
    c[0] = 0.0
    part2 = np.convolve(c, v)[:n]
    d = c[1:]
    part1 = np.zeros(n)
    if d.size:
        full = np.convolve(d, v)[:n]
        part1[:] = full
        m = min(n, d.size)
        part1[:m] -= d[:m] * v[0]
    return part1 + part2


def _jump_term(aw, jump):
    """``sum_{j=1}^n a_j d_{n-j}``: rate jumps at cell starts, where ``H`` takes its right limit."""
    c = aw[:jump.size].copy()
    c[0] = 0.0
    return np.convolve(c, jump)[:jump.size]


def apply_operator(base, aw, gw, H, q):
    """Right-hand side of the node equations for given ``H`` and ``q``."""
    return base + _conv_sum(aw, H) + _conv_sum(gw, q)


def residual(sol):
    """Maximum node residual of the key equation at the solution."""
    aw, gw = sol.coeffs
    rhs = apply_operator(sol.base, aw, gw, np.asarray(sol.H), np.asarray(sol.Q))
    return float(np.max(np.abs(np.asarray(sol.X) - rhs)))


@dataclass(frozen=True, eq=False)
class WindowContext:
    """Everything the map ``Psi`` needs on nodes ``m0+1..m1`` (local indices)."""

    m0: int
    m1: int
    Hv: np.ndarray
    qv: np.ndarray
    base: np.ndarray
    aw: np.ndarray
    gw: np.ndarray
    tables: tuple
    lam: np.ndarray
    kernels: object


def window_context(sol, k0, k1):
    """Context for re-applying ``Psi`` on nodes ``k0+1..k1`` of a solved trajectory."""
    if not 0 <= k0 < k1 < sol.X.size:
        raise DomainError("window must satisfy 0 <= k0 < k1 <= last node")
    aw, gw = sol.coeffs
    off = sol.node_offset
    return WindowContext(k0, k1, np.array(sol.H), np.array(sol.Q), sol.base, aw, gw,
                         sol.kernel.window_tables(off + k0 + 1, off + k1 + 1),
                         sol.kernel.lam_node[off + k0 + 1:off + k1 + 1].copy(), sol.kernel.kernels)


def picard_step(x, ctx):
    """One application of ``Psi`` to the window trajectory ``x``."""
    x = np.ascontiguousarray(x, dtype=float)
    Fd2, Ft2, lens = ctx.tables
    out = ctx.kernels.picard_window(ctx.m0, ctx.m1, ctx.Hv, ctx.qv, ctx.base, ctx.aw, ctx.gw,
                                    Fd2, Ft2, lens, ctx.lam, x, 0.0, 1)
    return out[0]


# ---------------------------------------------------------------------------
# driver


def _march(kernel, offset, base, aw, gw, cfg, b, kappa_fn):
    """Solve the node equations for local nodes ``1..n-1`` given ``X_0 = base_0``."""
    n = base.size
    X = np.empty(n)
    q = np.zeros(n)
    Hv = np.zeros(n)
    X[0] = base[0]
    q[0] = max(X[0] - 1.0, 0.0)
    Hv[0] = kernel.node_sweep(q[:1], offset)[0][0]
    h = kernel.grid.h
    width = max(1, min(int(math.floor(b / h + 1e-9)), _MAX_WINDOW_NODES))
    # windows stop at half the tolerance so summation-order roundoff in the
    # global residual check cannot push a node over picard_tol
    windows = []
    kb = kernel.kernels
    m0 = 0
    while m0 < n - 1:
        w = min(width, n - 1 - m0)
        while True:
            m1 = m0 + w
            Fd2, Ft2, lens = kernel.window_tables(offset + m0 + 1, offset + m1 + 1)
            lam = kernel.lam_node[offset + m0 + 1:offset + m1 + 1].copy()
            if cfg.initial_guess == "zero":
                x0 = np.zeros(w)
            elif cfg.initial_guess == "high":
                x0 = np.full(w, 2.0 * X[0] + 1.0)
            else:
                x0 = np.full(w, X[m0])
            x, Hx, qx, it, diff, ratio = kb.picard_window(m0, m1, Hv, q, base, aw, gw, Fd2, Ft2, lens, lam,
                                                          x0, 0.5 * cfg.picard_tol, cfg.max_iters)
            if diff < cfg.picard_tol:
                break
            if w == 1:
                raise DivergenceError(
                    f"Picard iteration did not converge at node {offset + m1} after {it} sweeps", diff)
            w = max(1, w // 2)
        X[m0 + 1:m1 + 1] = x
        Hv[m0 + 1:m1 + 1] = Hx
        q[m0 + 1:m1 + 1] = qx
        windows.append({"k0": offset + m0, "k1": offset + m1, "b": w * h,
                        "kappa": kappa_fn(w * h),
                        "iterations": int(it), "final_diff": float(diff), "contraction": float(ratio)})
        m0 = m1
    return X, q, Hv, windows


def _assemble(kernel, offset, base, aw, gw, X, q, Hv, windows, ic, rate, F, G, cfg, extra):
    H, om, ft, nf = kernel.node_sweep(q, offset)
    h = kernel.grid.h
    # int H_s ds = int lambda - int F_s(omega(s)) ds; the rate part is integrated exactly
    t = (offset + np.arange(q.size)) * h
    lost = np.concatenate([[0.0], np.cumsum(0.5 * h * (ft[1:] + ft[:-1]))])
    a = (rate.E(t) - rate.E(t[0])) - lost - q + q[0]
    diags = {"windows": windows, **extra}
    sol = FluidSolution(kernel.grid, X, q.copy(), np.minimum(X, 1.0), om, a, H, nf, ft, base, diags,
                        ic, rate, F, G, cfg, kernel, offset, (aw, gw))
    diags["residual"] = residual(sol)
    return sol


def solve(ic, rate, F, G, cfg, kernel=None):
    """Solve the key equation on ``cfg.grid`` and return all node trajectories."""
    F.validate_role("patience")
    G.validate_role("service")
    grid = cfg.grid
    full = extended_rate(ic, rate)
    if kernel is None:
        kernel = KernelCache(grid, full, F, ic.omega0)
    Q0 = ic.validate(F)
    b, kappa, M, L = window_length(F, G, cfg)
    n = grid.n_nodes
    t = grid.nodes
    aw, gw = _coefficients(G, grid, n)
    base = ic.z0_complement(t) + Q0 * G.complement(t) + _jump_term(aw, kernel.lam_jump[:n])
    kappa_fn = lambda s: L / G.mu * float(G.equilibrium_cdf(s)) + float(G.cdf(s))
    X, q, Hv, windows = _march(kernel, 0, base, aw, gw, cfg, b, kappa_fn)
    extra = {"b": b, "kappa": kappa, "M": M, "L": L, "Q0": Q0, "kappa_fn": kappa_fn}
    return _assemble(kernel, 0, base, aw, gw, X, q, Hv, windows, ic, full, F, G, cfg, extra)


def time_shift(sol, tau):
    """Restart the solve at node ``tau`` with the state carried by ``sol``.

    Terms of the node equations that only involve nodes up to ``tau`` are
    folded into the shifted in-service complement ``Z(tau)(C_t)`` (stored
    in ``diagnostics["z_shift"]``); ``Q(tau)`` ages out through ``G^c``
    and the kernels are the original ones read from ``tau`` on.
    """
    p = sol.index(tau)
    n_all = sol.X.size
    if p >= n_all - 1:
        raise DomainError("shift time must precede the horizon")
    if p == 0:
        return sol
    aw, gw = sol.coeffs
    Hm = np.array(sol.H)
    qm = np.array(sol.Q)
    Hm[p + 1:] = 0.0
    qm[p + 1:] = 0.0
    m = n_all - p
    past = (_conv_sum(aw, Hm) + _conv_sum(gw, qm))[p:]
    past -= aw[:m] * Hm[p] + gw[:m] * qm[p]
    hist = np.asarray(sol.base)[p:] + past
    hist[0] = sol.X[p]
    Qt = float(sol.Q[p])
    z_tau = hist - Qt * sol.G.complement(np.arange(m) * sol.h)
    d = sol.diagnostics
    X, q, Hv, windows = _march(sol.kernel, sol.node_offset + p, hist, aw, gw, sol.config, d["b"], d["kappa_fn"])
    extra = {k: d[k] for k in ("b", "kappa", "M", "L", "kappa_fn")}
    extra.update(Q0=Qt, z_shift=z_tau, shifted_from=sol.t0)
    return _assemble(sol.kernel, sol.node_offset + p, hist, aw, gw, X, q, Hv, windows, sol.ic, sol.rate,
                     sol.F, sol.G, sol.config, extra)


# ---------------------------------------------------------------------------
# renewal cross-check


def renewal_function(G, grid, tol=1e-10):
    """``U_G = sum_n G^{n*}`` at the grid nodes by repeated trapezoid convolution."""
    n = grid.n_nodes
    Gd = G.cdf(grid.nodes)
    gw = np.zeros(n)
    gw[1:] = 0.5 * np.diff(Gd)
    U = np.ones(n)
    term = np.ones(n)
    limit = max(10, int(math.ceil(10 * grid.T / G.mean)))
    for _ in range(limit):
        term = _conv_sum(gw, term)
        U += term
        if term.max() < tol:
            return U
    raise DivergenceError(f"renewal series still above {tol} after {limit} terms", float(term.max()))


def renewal_integral(phi, U):
    """``phi(t) U(0) + int_{(0,t]} phi(t - s) dU(s)`` on the nodes."""
    dU = np.zeros(U.size)
    dU[1:] = 0.5 * np.diff(U)
    return phi * U[0] + _conv_sum(dU, phi)


def overloaded_prefix(sol):
    """Number of leading nodes with ``X >= 1``."""
    below = np.flatnonzero(np.asarray(sol.X) < 1.0)
    return int(below[0]) if below.size else sol.X.size


def overloaded_prefix_check(sol, U):
    """Sup gap between ``a`` and its renewal representation on the overloaded prefix."""
    m = overloaded_prefix(sol)
    if m == 0:
        return 0.0
    phi = 1.0 - sol.ic.z0_complement(sol.t[:m] - sol.t0)
    ref = renewal_integral(phi, np.asarray(U)[:m])
    return float(np.max(np.abs(np.asarray(sol.a)[:m] - ref)))
