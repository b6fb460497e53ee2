"""Atomless value distributions on bounded supports.

Every family exposes the same accessors (cdf, pdf, quantile, virtual value
and its inverse). All accessors accept scalars or numpy arrays. cdf clamps to
0/1 outside the support and pdf is zero there, so callers can pass
thresholds of +inf ("never buys") without special casing.

Regularity (a nondecreasing virtual value) is a property of the parameters
for the closed-form families and is checked numerically on a grid for
piecewise-linear CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, UnsupportedError

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200


def _finite(x):
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any():
        raise DomainError("argument is NaN")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


class Distribution:
    """Base class. Subclasses set lo/hi and the in-support formulas."""

    lo: float
    hi: float

    # subclasses override these on values already clipped into [lo, hi]
    def _cdf(self, v):
        raise NotImplementedError

    def _pdf(self, v):
        raise NotImplementedError

    def _quantile(self, q):
        raise NotImplementedError

    @property
    def regular(self) -> bool:
        return True

    def cdf(self, v):
        v = _finite(v)
        inside = self._cdf(np.clip(v, self.lo, self.hi))
        out = np.where(v <= self.lo, 0.0, np.where(v >= self.hi, 1.0, inside))
        return _out(out)

    def pdf(self, v):
        v = _finite(v)
        if np.isinf(v).any():
            raise DomainError("pdf argument must be finite")
        inside = self._pdf(np.clip(v, self.lo, self.hi))
        out = np.where((v < self.lo) | (v > self.hi), 0.0, inside)
        return _out(out)

    def quantile(self, q):
        q = _finite(q)
        if np.isinf(q).any():
            raise DomainError("quantile argument must be finite")
        if (q < 0).any() or (q > 1).any():
            raise DomainError("quantile argument must lie in [0, 1]")
        return _out(np.clip(self._quantile(q), self.lo, self.hi))

    def sample(self, seed: int) -> float:
        """One deterministic draw: quantile of a uniform variate seeded by `seed`."""
        return float(self.quantile(np.random.default_rng(seed).random()))

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.asarray(self.quantile(rng.random(size)))

    def virtual_value(self, v):
        """phi(v) = v - (1 - F(v)) / f(v); -inf where the density vanishes."""
        v = _finite(v)
        if np.isinf(v).any():
            raise DomainError("virtual value argument must be finite")
        if (v < self.lo).any() or (v > self.hi).any():
            raise DomainError(f"virtual value needs v in [{self.lo}, {self.hi}]")
        return _out(self._virtual_value(v))

    def _virtual_value(self, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = 1.0 - np.asarray(self._cdf(v), dtype=float)
            dens = np.asarray(self._pdf(v), dtype=float)
            ratio = np.where(tail <= 0.0, 0.0, tail / dens)
        return v - ratio

    def inverse_virtual_value(self, t):
        """Smallest v with phi(v) >= t, clamped to [lo, hi]."""
        if not self.regular:
            raise UnsupportedError("inverse virtual value needs a regular distribution")
        t = _finite(t)
        return _out(self._inverse_virtual_value(t))

    def _phi_scalar(self, v: float) -> float:
        return float(self._virtual_value(np.asarray(v)))

    def _inverse_scalar(self, t: float) -> float:
        lo, hi = float(self.lo), float(self.hi)
        if t <= self._phi_scalar(lo):
            return lo
        if t >= self._phi_scalar(hi):
            return hi
        for _ in range(BISECT_MAX_ITER):
            if hi - lo <= BISECT_TOL:
                break
            mid = 0.5 * (lo + hi)
            if self._phi_scalar(mid) >= t:
                hi = mid
            else:
                lo = mid
        return hi

    def _inverse_virtual_value(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return np.asarray(self._inverse_scalar(float(t)))
        return np.array([self._inverse_scalar(float(x)) for x in t.ravel()]).reshape(t.shape)

    def monopoly_price(self) -> tuple[float, float]:
        """(price, revenue) of the revenue-maximizing take-it-or-leave-it price."""
        if not self.regular:
            raise UnsupportedError("monopoly price needs a regular distribution")
        p = float(self._inverse_virtual_value(np.asarray(0.0)))
        return p, p * (1.0 - float(self.cdf(p)))

    def q_breakpoints(self) -> list[float]:
        """CDF values at kinks of the density (empty for smooth families)."""
        return []

    def to_literal(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError("uniform endpoints must be finite")
        if self.lo < 0 or not self.lo < self.hi:
            raise DomainError(f"uniform needs 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    def _cdf(self, v):
        return (v - self.lo) / (self.hi - self.lo)

    def _pdf(self, v):
        return np.full(np.shape(v), 1.0 / (self.hi - self.lo))

    def _quantile(self, q):
        return self.lo + q * (self.hi - self.lo)

    def _virtual_value(self, v):
        return 2.0 * v - self.hi

    def _inverse_virtual_value(self, t):
        return np.clip(0.5 * (np.asarray(t) + self.hi), self.lo, self.hi)

    def to_literal(self):
        return {"family": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class ShiftedPower(Distribution):
    """CDF (v / (1 + eps))**ell on [0, 1 + eps]."""

    ell: float = 1.0
    eps: float = 0.0

    def __post_init__(self):
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise DomainError("shifted_power needs ell > 0")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise DomainError("shifted_power needs eps >= 0")

    @property
    def lo(self):
        return 0.0

    @property
    def hi(self):
        return 1.0 + self.eps

    @property
    def regular(self):
        return self.ell >= 1.0

    def _cdf(self, v):
        return (v / self.hi) ** self.ell

    def _pdf(self, v):
        return self.ell * v ** (self.ell - 1.0) / self.hi**self.ell

    def _quantile(self, q):
        return self.hi * q ** (1.0 / self.ell)

    def _phi_scalar(self, v):
        if v <= 0.0:
            return super()._phi_scalar(v)
        c, ell = self.hi, self.ell
        return v - (c**ell - v**ell) / (ell * v ** (ell - 1.0))

    def _inverse_scalar(self, t: float) -> float:
        # phi is continuous and increasing on (0, hi] when ell >= 1
        lo, hi = 0.0, float(self.hi)
        if t <= self._phi_scalar(lo):
            return lo
        if t >= self._phi_scalar(hi):
            return hi
        a = min(BISECT_TOL, hi)
        if self._phi_scalar(a) >= t:
            return Distribution._inverse_scalar(self, t)
        return brentq(lambda v: self._phi_scalar(v) - t, a, hi, xtol=BISECT_TOL, maxiter=BISECT_MAX_ITER)

    def to_literal(self):
        return {"family": "shifted_power", "ell": self.ell, "eps": self.eps}


@dataclass(frozen=True)
class ComplementPower(Distribution):
    """CDF 1 - (1 - v)**k on [0, 1]."""

    k: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise DomainError("complement_power needs k > 0")

    @property
    def lo(self):
        return 0.0

    @property
    def hi(self):
        return 1.0

    def _cdf(self, v):
        with np.errstate(divide="ignore"):
            return -np.expm1(self.k * np.log1p(-v))

    def _pdf(self, v):
        return self.k * (1.0 - v) ** (self.k - 1.0)

    def _quantile(self, q):
        with np.errstate(divide="ignore"):
            return -np.expm1(np.log1p(-q) / self.k)

    def _virtual_value(self, v):
        # (1-F)/f = (1-v)/k
        return v - (1.0 - v) / self.k

    def _inverse_virtual_value(self, t):
        return np.clip((self.k * np.asarray(t) + 1.0) / (self.k + 1.0), 0.0, 1.0)

    def to_literal(self):
        return {"family": "complement_power", "k": self.k}


@dataclass(frozen=True)
class PiecewiseLinear(Distribution):
    """CDF interpolating the points (v_0, 0), ..., (v_m, 1)."""

    points: tuple = ()
    _regular: bool = field(default=True, init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(v), float(c)) for v, c in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise DomainError("piecewise needs at least two points")
        vs = np.array([p[0] for p in pts])
        fs = np.array([p[1] for p in pts])
        if not np.isfinite(vs).all() or vs[0] < 0:
            raise DomainError("piecewise values must be finite and nonnegative")
        if not (np.diff(vs) > 0).all():
            raise DomainError("piecewise values must be strictly increasing")
        if fs[0] != 0.0 or fs[-1] != 1.0:
            raise DomainError("piecewise CDF must start at 0 and end at 1")
        if not (np.diff(fs) > 0).all():
            raise DomainError("piecewise CDF must be strictly increasing (positive density)")
        object.__setattr__(self, "_regular", self._check_regular())

    @cached_property
    def _vs(self):
        return np.array([p[0] for p in self.points])

    @cached_property
    def _fs(self):
        return np.array([p[1] for p in self.points])

    @property
    def lo(self):
        return self.points[0][0]

    @property
    def hi(self):
        return self.points[-1][0]

    @property
    def regular(self):
        return self._regular

    @cached_property
    def _slope_arr(self):
        return np.diff(self._fs) / np.diff(self._vs)

    def _slopes(self):
        return self._slope_arr

    def _cdf(self, v):
        return np.interp(v, self._vs, self._fs)

    def _pdf(self, v):
        vs = self._vs
        idx = np.clip(np.searchsorted(vs, v, side="right") - 1, 0, len(vs) - 2)
        return self._slopes()[idx]

    def _quantile(self, q):
        return np.interp(q, self._fs, self._vs)

    def _inverse_scalar(self, t: float) -> float:
        # phi = 2v - v_k - (1 - F_k) / s_k on segment k
        pts, s = self.points, self._slope_arr
        for k in range(len(s)):
            vk, fk = pts[k]
            v = 0.5 * (t + vk + (1.0 - fk) / s[k])
            if v <= vk:
                return vk
            if v <= pts[k + 1][0]:
                return float(v)
        return pts[-1][0]

    def _check_regular(self):
        vs = self._vs
        grid = np.linspace(vs[0], vs[-1], 2001)
        phi = self._virtual_value(grid)
        if (np.diff(phi) < -1e-12).any():
            return False
        # the density may only step up at a kink, otherwise phi jumps down
        return bool((np.diff(self._slopes()) >= -1e-12 * self._slopes()[1:]).all())

    def q_breakpoints(self):
        return [float(c) for c in self._fs[1:-1]]

    def to_literal(self):
        return {"family": "piecewise", "points": [list(p) for p in self.points]}


def query(d: Distribution, kind: str, arg):
    """Uniform entry point used by the CLI: kind is cdf, pdf, quantile or sample."""
    if kind == "cdf":
        return d.cdf(arg)
    if kind == "pdf":
        return d.pdf(arg)
    if kind == "quantile":
        return d.quantile(arg)
    if kind == "sample":
        return d.sample(int(arg))
    raise DomainError(f"unknown query kind {kind!r}")


def virtual_value(d: Distribution, v):
    return d.virtual_value(v)


def inverse_virtual_value(d: Distribution, t):
    return d.inverse_virtual_value(t)


def monopoly_price(d: Distribution) -> tuple[float, float]:
    return d.monopoly_price()


def from_literal(lit: dict) -> Distribution:
    if not isinstance(lit, dict) or "family" not in lit:
        raise DomainError("distribution literal needs a 'family' field")
    fam = lit["family"]
    try:
        if fam == "uniform":
            return Uniform(float(lit.get("lo", 0.0)), float(lit.get("hi", 1.0)))
        if fam == "shifted_power":
            return ShiftedPower(float(lit["ell"]), float(lit.get("eps", 0.0)))
        if fam == "complement_power":
            return ComplementPower(float(lit["k"]))
        if fam == "piecewise":
            return PiecewiseLinear(tuple(tuple(p) for p in lit["points"]))
    except KeyError as exc:
        raise DomainError(f"{fam} literal is missing field {exc.args[0]!r}") from None
    raise DomainError(f"unknown distribution family {fam!r}")


def cdfs(dists: Sequence[Distribution], values) -> np.ndarray:
    """Vector of F_i(values_i)."""
    return np.array([float(d.cdf(v)) for d, v in zip(dists, values)])
