"""Lifetime distributions and piecewise arrival-rate functions.

Distributions expose the closed-form pieces the kernels need: the
complement ``F^c``, its tail integrals ``int_x^inf F^c`` and
``int_x^inf s F^c(s) ds``, and from those exact per-cell moments.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError

__all__ = ["DistributionModel", "RateFunction"]


def _as_array(x):
    return np.asarray(x, dtype=float)


def _check_nonneg(x):
    arr = _as_array(x)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("lifetime argument must be nonnegative")
    return arr


def _scalar_or_array(template, value):
    if np.ndim(template) == 0:
        return float(value)
    return value


# --------------------------------------------------------------------------
# family implementations; all accept x >= 0 arrays


class _Exponential:
    def __init__(self, rate):
        self.rate = float(rate)
        if not self.rate > 0:
            raise ConfigurationError("exponential rate must be positive")

    def sf(self, x):
        return np.exp(-self.rate * x)

    def pdf(self, x):
        return self.rate * np.exp(-self.rate * x)

    def tail0(self, x):
        return np.exp(-self.rate * x) / self.rate

    def tail1(self, x):
        r = self.rate
        return np.exp(-r * x) * (1.0 + r * x) / (r * r)

    def isf(self, p):
        return -np.log(p) / self.rate

    @property
    def mean(self):
        return 1.0 / self.rate

    support_end = math.inf

    @property
    def lipschitz(self):
        return self.rate


class _Erlang:
    def __init__(self, shape, rate):
        if int(shape) != shape or shape < 1:
            raise ConfigurationError("erlang shape must be a positive integer")
        if not rate > 0:
            raise ConfigurationError("erlang rate must be positive")
        self.k = int(shape)
        self.rate = float(rate)

    def sf(self, x):
        return special.gammaincc(self.k, self.rate * x)

    def pdf(self, x):
        r, k = self.rate, self.k
        return r * np.exp(special.xlogy(k - 1, r * x) - r * x - math.lgamma(k))

    def tail0(self, x):
        z = self.rate * x
        return sum(special.gammaincc(m + 1, z) for m in range(self.k)) / self.rate

    def tail1(self, x):
        z = self.rate * x
        return sum((m + 1) * special.gammaincc(m + 2, z) for m in range(self.k)) / self.rate ** 2

    def isf(self, p):
        return special.gammainccinv(self.k, p) / self.rate

    @property
    def mean(self):
        return self.k / self.rate

    support_end = math.inf

    @property
    def lipschitz(self):
        k = self.k
        if k == 1:
            return self.rate
        return self.rate * math.exp((k - 1) * math.log(k - 1) - (k - 1) - math.lgamma(k))


class _HyperExponential:
    def __init__(self, probs, rates):
        self.p = np.asarray(probs, dtype=float)
        self.r = np.asarray(rates, dtype=float)
        if self.p.shape != self.r.shape or self.p.ndim != 1 or self.p.size == 0:
            raise ConfigurationError("hyperexponential probs/rates must be equal-length lists")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12 or np.any(self.r <= 0):
            raise ConfigurationError("hyperexponential needs probabilities summing to 1 and positive rates")

    def _mix(self, x, fn):
        x = _as_array(x)
        return sum(pi * fn(ri, x) for pi, ri in zip(self.p, self.r))

    def sf(self, x):
        return self._mix(x, lambda r, x: np.exp(-r * x))

    def pdf(self, x):
        return self._mix(x, lambda r, x: r * np.exp(-r * x))

    def tail0(self, x):
        return self._mix(x, lambda r, x: np.exp(-r * x) / r)

    def tail1(self, x):
        return self._mix(x, lambda r, x: np.exp(-r * x) * (1.0 + r * x) / (r * r))

    def isf(self, p):
        return _bisect_isf(self.sf, p, 1.0 / self.r.min())

    @property
    def mean(self):
        return float(np.sum(self.p / self.r))

    support_end = math.inf

    @property
    def lipschitz(self):
        return float(np.sum(self.p * self.r))


class _Weibull:
    def __init__(self, shape, scale):
        if not (shape > 0 and scale > 0):
            raise ConfigurationError("weibull shape and scale must be positive")
        self.k = float(shape)
        self.s = float(scale)

    def sf(self, x):
        return np.exp(-((x / self.s) ** self.k))

    def pdf(self, x):
        k, s = self.k, self.s
        z = x / s
        with np.errstate(divide="ignore"):
            return (k / s) * z ** (k - 1) * np.exp(-(z ** k))

    def tail0(self, x):
        k, s = self.k, self.s
        return s / k * math.gamma(1 / k) * special.gammaincc(1 / k, (x / s) ** k)

    def tail1(self, x):
        k, s = self.k, self.s
        return s * s / k * math.gamma(2 / k) * special.gammaincc(2 / k, (x / s) ** k)

    def isf(self, p):
        return self.s * (-np.log(p)) ** (1.0 / self.k)

    @property
    def mean(self):
        return self.s * math.gamma(1 + 1 / self.k)

    support_end = math.inf

    @property
    def lipschitz(self):
        k, s = self.k, self.s
        if k < 1:
            return math.inf
        if k == 1:
            return 1.0 / s
        xm = s * ((k - 1) / k) ** (1 / k)
        return float(self.pdf(np.array(xm)))


class _PiecewiseLinear:
    """Continuous CDF that is linear between knots; zero density past the last knot."""

    def __init__(self, xs, cdf):
        xs = np.asarray(xs, dtype=float)
        cs = np.asarray(cdf, dtype=float)
        if xs.ndim != 1 or xs.shape != cs.shape or xs.size < 2:
            raise ConfigurationError("piecewise-linear CDF needs matching knot arrays")
        if xs[0] != 0.0 or cs[0] != 0.0 or abs(cs[-1] - 1.0) > 1e-12:
            raise ConfigurationError("CDF knots must start at (0, 0) and end at probability 1")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(cs) < 0):
            raise ConfigurationError("CDF knots must be strictly increasing in x and nondecreasing in F")
        cs = cs.copy()
        cs[-1] = 1.0
        self.xs = xs
        self.v = 1.0 - cs
        dx = np.diff(xs)
        self.k = np.diff(self.v) / dx
        seg0 = (self.v[:-1] + self.v[1:]) * 0.5 * dx
        seg1 = xs[:-1] * self.v[:-1] * dx + (xs[:-1] * self.k + self.v[:-1]) * dx ** 2 / 2 + self.k * dx ** 3 / 3
        self.i0 = np.concatenate([[0.0], np.cumsum(seg0)])
        self.i1 = np.concatenate([[0.0], np.cumsum(seg1)])

    def _seg(self, x):
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.xs.size - 2)
        return i, x - self.xs[i]

    def sf(self, x):
        x = _as_array(x)
        i, d = self._seg(x)
        out = self.v[i] + self.k[i] * d
        return np.where(x >= self.xs[-1], 0.0, np.clip(out, 0.0, 1.0))

    def pdf(self, x):
        x = _as_array(x)
        i, _ = self._seg(x)
        return np.where(x >= self.xs[-1], 0.0, -self.k[i])

    def _i0(self, x):
        x = np.minimum(_as_array(x), self.xs[-1])
        i, d = self._seg(x)
        return self.i0[i] + self.v[i] * d + self.k[i] * d * d / 2

    def _i1(self, x):
        x = np.minimum(_as_array(x), self.xs[-1])
        i, d = self._seg(x)
        xi, vi, ki = self.xs[i], self.v[i], self.k[i]
        return self.i1[i] + xi * vi * d + (xi * ki + vi) * d * d / 2 + ki * d ** 3 / 3

    def tail0(self, x):
        return self.i0[-1] - self._i0(x)

    def tail1(self, x):
        return self.i1[-1] - self._i1(x)

    def isf(self, p):
        p = _as_array(p)
        return np.interp(p, self.v[::-1], self.xs[::-1])

    @property
    def mean(self):
        return float(self.i0[-1])

    @property
    def support_end(self):
        return float(self.xs[-1])

    @property
    def lipschitz(self):
        return float(np.max(-self.k))


def _bisect_isf(sf, p, scale):
    p = np.atleast_1d(_as_array(p))
    lo = np.zeros_like(p)
    hi = np.full_like(p, scale)
    while np.any(sf(hi) > p):
        hi = np.where(sf(hi) > p, hi * 2.0, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        big = sf(mid) > p
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1.0)):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------


_FAMILIES = ("exponential", "erlang", "hyperexponential", "uniform", "weibull-continuous", "empirical-smooth")


@dataclass(frozen=True)
class DistributionModel:
    """A nonnegative lifetime distribution (patience ``F`` or service ``G``).

    Build through the classmethods; ``params`` holds the family parameters
    exactly as they appear in scenario files.
    """

    family: str
    params: dict
    _impl: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = self.params
        fam = self.family
        if fam == "exponential":
            impl = _Exponential(p["rate"])
        elif fam == "erlang":
            impl = _Erlang(p["shape"], p["rate"])
        elif fam == "hyperexponential":
            impl = _HyperExponential(p["probs"], p["rates"])
        elif fam == "uniform":
            lo, hi = float(p["low"]), float(p["high"])
            if not (0 <= lo < hi):
                raise ConfigurationError("uniform needs 0 <= low < high")
            impl = _PiecewiseLinear([0.0, lo, hi] if lo > 0 else [0.0, hi], [0.0, 0.0, 1.0] if lo > 0 else [0.0, 1.0])
        elif fam == "weibull-continuous":
            impl = _Weibull(p["shape"], p["scale"])
        elif fam == "empirical-smooth":
            impl = _PiecewiseLinear(p["x"], p["cdf"])
            declared = p.get("lipschitz")
            if declared is None:
                raise ConfigurationError("empirical-smooth distributions must declare 'lipschitz'")
            if declared < impl.lipschitz * (1 - 1e-12):
                raise ConfigurationError(
                    f"declared lipschitz {declared} is below the knot-slope maximum {impl.lipschitz}")
        else:
            raise ConfigurationError(f"unknown distribution family {fam!r}; expected one of {_FAMILIES}")
        object.__setattr__(self, "_impl", impl)

    # constructors -----------------------------------------------------
    @classmethod
    def exponential(cls, rate):
        return cls("exponential", {"rate": float(rate)})

    @classmethod
    def erlang(cls, shape, rate):
        return cls("erlang", {"shape": int(shape), "rate": float(rate)})

    @classmethod
    def hyperexponential(cls, probs, rates):
        return cls("hyperexponential", {"probs": [float(v) for v in probs], "rates": [float(v) for v in rates]})

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", {"low": float(low), "high": float(high)})

    @classmethod
    def weibull(cls, shape, scale):
        return cls("weibull-continuous", {"shape": float(shape), "scale": float(scale)})

    @classmethod
    def empirical(cls, x, cdf, lipschitz):
        return cls("empirical-smooth", {"x": [float(v) for v in x], "cdf": [float(v) for v in cdf],
                                        "lipschitz": float(lipschitz)})

    @classmethod
    def from_spec(cls, spec):
        spec = dict(spec)
        family = spec.pop("family")
        if family == "weibull":
            family = "weibull-continuous"
        return cls(family, spec)

    def to_spec(self):
        return {"family": self.family, **self.params}

    # scalar properties -------------------------------------------------
    @property
    def mean(self):
        return self._impl.mean

    @property
    def mu(self):
        """Rate ``1/mean``."""
        return 1.0 / self._impl.mean

    @property
    def support_end(self):
        return self._impl.support_end

    @property
    def lipschitz(self):
        if self.family == "empirical-smooth":
            return float(self.params["lipschitz"])
        return self._impl.lipschitz

    # pointwise functions -----------------------------------------------
    def cdf(self, x):
        arr = _check_nonneg(x)
        return _scalar_or_array(x, 1.0 - self._impl.sf(arr))

    def complement(self, x):
        arr = _check_nonneg(x)
        return _scalar_or_array(x, self._impl.sf(arr))

    def density(self, x):
        arr = _check_nonneg(x)
        return _scalar_or_array(x, self._impl.pdf(arr))

    def hazard(self, x):
        arr = _check_nonneg(x)
        sf = self._impl.sf(arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(sf > 0, self._impl.pdf(arr) / np.where(sf > 0, sf, 1.0), np.inf)
        return _scalar_or_array(x, out)

    def integrated_complement(self, x):
        """``int_0^x F^c(s) ds``."""
        arr = _check_nonneg(x)
        return _scalar_or_array(x, self._impl.mean - self._impl.tail0(arr))

    def equilibrium_cdf(self, x):
        arr = _check_nonneg(x)
        if not math.isfinite(self.mean):
            raise ConfigurationError("equilibrium distribution needs a finite mean")
        return _scalar_or_array(x, 1.0 - self._impl.tail0(arr) / self._impl.mean)

    # internal helpers used by the kernels ------------------------------
    def sf_ext(self, x):
        """Complement extended by 1 to negative arguments."""
        arr = _as_array(x)
        return self._impl.sf(np.maximum(arr, 0.0))

    def pdf_ext(self, x):
        arr = _as_array(x)
        return np.where(arr < 0, 0.0, self._impl.pdf(np.maximum(arr, 0.0)))

    def cell_moments(self, edges):
        """Exact ``int F^c`` and ``int (s - a) F^c(s) ds`` over each cell ``[a, b]``."""
        e = _as_array(edges)
        t0 = self._impl.tail0(e)
        t1 = self._impl.tail1(e)
        m0 = t0[:-1] - t0[1:]
        m1 = (t1[:-1] - t1[1:]) - e[:-1] * m0
        return m0, m1

    def isf(self, p):
        """Inverse complement: smallest ``x`` with ``F^c(x) <= p``."""
        return self._impl.isf(np.clip(_as_array(p), 0.0, 1.0))

    def sample(self, rng, size):
        u = rng.random(size)
        return self.isf(1.0 - u)

    def sample_beyond(self, rng, ages):
        """Lifetimes conditioned on exceeding ``ages`` (total length, not residual)."""
        ages = _as_array(ages)
        u = rng.random(ages.shape)
        out = self.isf((1.0 - u) * self._impl.sf(ages))
        return np.maximum(out, ages)

    def validate_role(self, role):
        if role == "service":
            if not math.isfinite(self.mean):
                raise ConfigurationError("service distribution must have finite mean")
        elif role == "patience":
            if not math.isfinite(self.lipschitz):
                raise ConfigurationError(
                    f"patience distribution {self.family} has unbounded density; Lipschitz CDF required")
        else:
            raise ValueError(role)


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateFunction:
    """Piecewise-linear arrival rate, possibly discontinuous at breakpoints.

    Segment ``i`` spans ``[times[i], times[i+1]]`` and runs linearly from
    ``left[i]`` (the right-limit at its start) to ``right[i]``.
    """

    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    spec: dict = field(default=None, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        lv = np.asarray(self.left, dtype=float)
        rv = np.asarray(self.right, dtype=float)
        if t.ndim != 1 or t.size < 2 or lv.shape != (t.size - 1,) or rv.shape != lv.shape:
            raise ConfigurationError("rate needs n+1 breakpoints and n segment values")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("rate breakpoints must be strictly increasing")
        if np.any(lv < 0) or np.any(rv < 0) or not np.all(np.isfinite(lv)) or not np.all(np.isfinite(rv)):
            raise ConfigurationError("arrival rate must be finite and nonnegative")
        dt = np.diff(t)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (lv + rv) * dt)])
        for name, val in (("times", t), ("left", lv), ("right", rv), ("_cum", cum)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    # constructors -------------------------------------------------------
    @classmethod
    def linear(cls, times, values, spec=None):
        v = np.asarray(values, dtype=float)
        return cls(np.asarray(times, dtype=float), v[:-1], v[1:], spec)

    @classmethod
    def step(cls, times, values, spec=None):
        v = np.asarray(values, dtype=float)
        return cls(np.asarray(times, dtype=float), v, v.copy(), spec)

    @classmethod
    def constant(cls, value, t0, t1):
        return cls.step([t0, t1], [value], {"kind": "constant", "value": float(value), "start": t0, "end": t1})

    @classmethod
    def sampled(cls, fn, t0, t1, step, spec=None):
        """Continuous piecewise-linear interpolant of ``fn`` on an even grid."""
        n = max(1, int(round((t1 - t0) / step)))
        ts = np.linspace(t0, t1, n + 1)
        vals = np.maximum(np.asarray(fn(ts), dtype=float), 0.0)
        return cls.linear(ts, vals, spec)

    # evaluation ---------------------------------------------------------
    @property
    def t_min(self):
        return float(self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1])

    def _check(self, t):
        arr = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, abs(self.t_min), abs(self.t_max))
        if np.any(arr < self.t_min - tol) or np.any(arr > self.t_max + tol):
            raise DomainError(f"time outside rate domain [{self.t_min}, {self.t_max}]")
        return np.clip(arr, self.t_min, self.t_max)

    def _eval(self, t, from_left):
        side = "left" if from_left else "right"
        i = np.clip(np.searchsorted(self.times, t, side=side) - 1, 0, self.left.size - 1)
        frac = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return self.left[i] + (self.right[i] - self.left[i]) * frac

    def __call__(self, t):
        """Right-continuous value (left-limit at the final breakpoint)."""
        arr = self._check(t)
        return _scalar_or_array(t, self._eval(arr, from_left=False))

    def left_limit(self, t):
        arr = self._check(t)
        return _scalar_or_array(t, self._eval(arr, from_left=True))

    def _prefix(self, t):
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.left.size - 1)
        d = t - self.times[i]
        slope = (self.right[i] - self.left[i]) / (self.times[i + 1] - self.times[i])
        return self._cum[i] + self.left[i] * d + 0.5 * slope * d * d

    def _snap(self, t):
        # grid nodes computed as i*h may miss a breakpoint by an ulp; jumps must not
        j = np.clip(np.searchsorted(self.times, t), 1, self.times.size - 1)
        near = np.where(np.abs(self.times[j] - t) < np.abs(self.times[j - 1] - t), self.times[j], self.times[j - 1])
        tol = 1e-10 * max(1.0, abs(self.t_min), abs(self.t_max))
        return np.where(np.abs(near - t) <= tol, near, t)

    def cumulative(self, t1, t2):
        """``int_{t1}^{t2} lambda(s) ds`` for ``t1 <= t2``."""
        a = self._check(t1)
        b = self._check(t2)
        if np.any(a > b):
            raise DomainError("cumulative needs t1 <= t2")
        return _scalar_or_array(np.add(t1, t2), self._prefix(b) - self._prefix(a))

    def E(self, t):
        """Signed cumulative arrivals from time 0 (negative for ``t < 0``)."""
        arr = self._check(t)
        return _scalar_or_array(t, self._prefix(arr) - self._prefix(np.array(0.0)))

    def sup(self, t0=None, t1=None):
        t0 = self.t_min if t0 is None else t0
        t1 = self.t_max if t1 is None else t1
        # piecewise linear: the sup sits at an end point or on either side of an inner breakpoint
        inner = self.times[(self.times > t0) & (self.times < t1)]
        cand = [self(t0), self.left_limit(t1)]
        if inner.size:
            cand += [np.max(self(inner)), np.max(self.left_limit(inner))]
        return float(max(cand))

    def breakpoints(self):
        return self.times

    def is_constant(self, tol=0.0):
        vals = np.concatenate([self.left, self.right])
        return bool(vals.max() - vals.min() <= tol)

    def cell_limits(self, edges):
        """Right-limit at each cell start and left-limit at each cell end."""
        e = self._snap(self._check(edges))
        return self._eval(e[:-1], from_left=False), self._eval(e[1:], from_left=True)

    def restrict(self, t0, t1):
        self._check(np.array([t0, t1]))
        inner = self.times[(self.times > t0) & (self.times < t1)]
        ts = np.concatenate([[t0], inner, [t1]])
        lv, rv = self.cell_limits(ts)
        return RateFunction(ts, lv, rv)

    def concat(self, other):
        """Join ``self`` on ``[a, b]`` with ``other`` on ``[b, c]``."""
        if abs(self.t_max - other.t_min) > 1e-12:
            raise ConfigurationError("rates to concatenate must meet at a common breakpoint")
        return RateFunction(np.concatenate([self.times, other.times[1:]]),
                            np.concatenate([self.left, other.left]),
                            np.concatenate([self.right, other.right]))
