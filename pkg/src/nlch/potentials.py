"""Monotone graphs, Yosida regularization, and the coupling function ``g``.

The double-well derivative is split as ``F' = beta + pi`` with ``beta``
maximal monotone (possibly multivalued) and ``pi`` Lipschitz.  ``beta`` is
replaced by its Yosida approximation ``beta_eps(r) = (r - J_eps(r)) / eps``
where the resolvent ``J_eps(r)`` solves ``J + eps * beta(J) = r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CouplingError, OutsideDomainError, RootFindingError

GRAPH_KINDS = ("polynomial", "logarithmic", "obstacle")

_MAX_NEWTON = 200


@dataclass(frozen=True)
class MonotoneGraph:
    """Maximal monotone graph with ``0 in beta(0)``.

    ``polynomial``: ``beta(r) = coeff * |r|**(degree - 1) * r`` on the real line.
    ``logarithmic``: ``beta(r) = log((1 + r) / (1 - r))`` on ``(-1, 1)``.
    ``obstacle``: subdifferential of the indicator of ``[-1, 1]``.
    """

    kind: str
    degree: int = 3
    coeff: float = 1.0
    tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}; expected one of {GRAPH_KINDS}")
        if self.kind == "polynomial" and (self.degree < 1 or self.degree % 2 == 0 or self.coeff <= 0):
            raise ValueError("polynomial graph needs an odd degree >= 1 and positive coefficient")

    @property
    def domain(self) -> tuple[float, float]:
        """Closure of the effective domain."""
        if self.kind == "polynomial":
            return (-math.inf, math.inf)
        return (-1.0, 1.0)

    @property
    def bounded(self) -> bool:
        return self.kind != "polynomial"

    def in_domain(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "polynomial":
            return np.isfinite(r)
        if self.kind == "logarithmic":
            return np.abs(r) < 1.0
        return np.abs(r) <= 1.0

    def distance_to_domain(self, r) -> np.ndarray:
        lo, hi = self.domain
        r = np.asarray(r, dtype=float)
        return np.maximum(lo - r, 0.0) + np.maximum(r - hi, 0.0)

    # -- single-valued pieces ---------------------------------------------------

    def _beta(self, r):
        if self.kind == "polynomial":
            return self.coeff * np.abs(r) ** (self.degree - 1) * r
        return np.log1p(r) - np.log1p(-r)

    def minimal_section(self, r):
        r = np.asarray(r, dtype=float)
        if not np.all(self.in_domain(r)):
            raise OutsideDomainError(f"{self.kind} graph: value outside D(beta)")
        if self.kind == "obstacle":
            out = np.zeros_like(r)
        else:
            out = self._beta(r)
        return out[()] if out.ndim == 0 else out

    # -- resolvent and Yosida ---------------------------------------------------

    def resolvent(self, eps: float, r):
        """``J_eps(r)``, the unique solution of ``J + eps beta(J) = r``."""
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps}")
        r = np.asarray(r, dtype=float)
        if self.kind == "obstacle":
            out = np.clip(r, -1.0, 1.0)
        elif self.kind == "polynomial" and self.degree == 1:
            out = r / (1.0 + eps * self.coeff)
        elif self.kind == "polynomial":
            out = self._poly_resolvent(eps, r)
        else:
            out = np.tanh(0.5 * self._log_dual(eps, r))
        return out[()] if out.ndim == 0 else out

    def yosida(self, eps: float, r):
        r = np.asarray(r, dtype=float)
        out = (r - np.asarray(self.resolvent(eps, r))) / eps
        return out[()] if out.ndim == 0 else out

    def yosida_derivative(self, eps: float, r):
        """Slope of ``beta_eps``; lies in ``[0, 1/eps]``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "obstacle":
            return np.where(np.abs(r) > 1.0, 1.0 / eps, 0.0)
        J = np.asarray(self.resolvent(eps, r))
        if self.kind == "polynomial":
            b = self.coeff * self.degree * np.abs(J) ** (self.degree - 1)
        else:
            with np.errstate(divide="ignore"):
                b = 2.0 / np.maximum(1.0 - J * J, 0.0)
        with np.errstate(invalid="ignore"):
            out = np.where(np.isinf(b), 1.0 / eps, b / (1.0 + eps * b))
        return out

    def _poly_resolvent(self, eps, r):
        # J lies between 0 and r; f(J) = J + eps c |J|^(p-1) J - r is increasing
        c, p = self.coeff, self.degree
        lo = np.minimum(r, 0.0)
        hi = np.maximum(r, 0.0)
        J = r / (1.0 + eps * c * np.abs(r) ** (p - 1)) if p > 1 else r.copy()
        J = np.array(J, dtype=float)

        def f(x):
            return x + eps * c * np.abs(x) ** (p - 1) * x - r

        def df(x):
            return 1.0 + eps * c * p * np.abs(x) ** (p - 1)

        return _safeguarded_newton(f, df, J, lo, hi, self.tol)

    def _log_dual(self, eps, r):
        """Solve ``tanh(s/2) + eps s = r`` for ``s = beta_eps(r)``; smooth in ``s``."""
        lo = np.minimum(0.0, r / eps)
        hi = np.maximum(0.0, r / eps)
        # start from the obstacle limit, clipped into the bracket
        s0 = np.clip(np.sign(r) * np.maximum(np.abs(r) - 1.0, 0.0) / eps
                     + 2.0 * np.arctanh(np.clip(r, -0.999999, 0.999999)) * (np.abs(r) < 1.0),
                     lo, hi)

        def f(s):
            return np.tanh(0.5 * s) + eps * s - r

        def df(s):
            return 0.5 / np.cosh(0.5 * np.clip(s, -700, 700)) ** 2 + eps

        # accuracy on s translates to accuracy eps * ds <= tol on J
        return _safeguarded_newton(f, df, np.array(s0, dtype=float), lo, hi, self.tol / max(eps, 1e-300))


def _safeguarded_newton(f: Callable, df: Callable, x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        tol: float) -> np.ndarray:
    """Vectorized Newton iteration for increasing ``f`` with a bisection fallback."""
    x = np.array(x, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = np.clip(x, lo, hi)
    for _ in range(_MAX_NEWTON):
        fx = f(x)
        done = (fx == 0.0) | (hi - lo <= tol)
        lo = np.where(fx < 0.0, x, lo)
        hi = np.where(fx > 0.0, x, hi)
        step = fx / df(x)
        xn = x - step
        bad = ~((xn > lo) & (xn < hi)) | ~np.isfinite(xn)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        converged = done | (np.abs(xn - x) <= tol)
        x = np.where(done, x, xn)
        if np.all(converged):
            return x
    raise RootFindingError("resolvent root finder did not converge; check the graph definition")


def minimal_section(graph: MonotoneGraph, r):
    return graph.minimal_section(r)


def yosida(graph: MonotoneGraph, eps: float, r):
    return graph.yosida(eps, r)


def truncate(eps: float, r):
    """``T_eps(r) = max(-1/eps, min(1/eps, r))``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    out = np.clip(np.asarray(r, dtype=float), -1.0 / eps, 1.0 / eps)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class LipschitzPi:
    """Linear Lipschitz part ``pi(r) = slope * r``."""

    slope: float

    def __call__(self, r):
        return self.slope * np.asarray(r, dtype=float)

    @property
    def lipschitz(self) -> float:
        return abs(self.slope)


# -- coupling function g -------------------------------------------------------


@dataclass(frozen=True)
class GBase:
    """``g`` on the closure of D(beta): ``constant`` or ``parabolic`` ``g0 (1 - r^2)``."""

    kind: str
    g0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "parabolic"):
            raise CouplingError(f"unknown g kind {self.kind!r}")
        if self.kind == "constant" and self.g0 < 0:
            raise CouplingError("constant g must be nonnegative")
        if self.kind == "parabolic" and not 0 < self.g0 <= 0.5:
            raise CouplingError(f"parabolic g needs g0 in (0, 1/2], got {self.g0}")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.full_like(r, self.g0)
        return self.g0 * (1.0 - r * r)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros_like(r) if self.kind == "constant" else -2.0 * self.g0 * r

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros_like(r) if self.kind == "constant" else np.full_like(r, -2.0 * self.g0)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"


def _smoothstep_moments(x, delta):
    """First and second antiderivatives of ``1 - S(x/delta)``, ``S = 3u^2 - 2u^3``."""
    u = np.clip(x / delta, 0.0, 1.0)
    inside = x <= delta
    p1 = np.where(inside, x - delta * (u ** 3 - 0.5 * u ** 4), 0.5 * delta)
    p2 = np.where(inside, 0.5 * x * x - delta ** 2 * (0.25 * u ** 4 - 0.1 * u ** 5),
                  0.35 * delta ** 2 + 0.5 * delta * (x - delta))
    s = 1.0 - (3.0 * u ** 2 - 2.0 * u ** 3)
    return s, p1, p2


@dataclass(frozen=True)
class ConcaveExtension:
    """C^2 concave continuation of ``g`` beyond a bounded interval.

    Outside ``[a, b]`` the second derivative fades from its endpoint value to
    zero over a band of width ``delta``; past the band ``g`` is affine.
    """

    base: GBase
    a: float
    b: float
    delta: float

    def _parts(self, r):
        r = np.asarray(r, dtype=float)
        g, g1, g2 = self.base.value(np.clip(r, self.a, self.b)), self.base.d1(np.clip(r, self.a, self.b)), \
            self.base.d2(np.clip(r, self.a, self.b))
        xr = np.maximum(r - self.b, 0.0)
        xl = np.maximum(self.a - r, 0.0)
        sr, p1r, p2r = _smoothstep_moments(xr, self.delta)
        sl, p1l, p2l = _smoothstep_moments(xl, self.delta)
        gb, g1b, g2b = (float(f(self.b)) for f in (self.base.value, self.base.d1, self.base.d2))
        ga, g1a, g2a = (float(f(self.a)) for f in (self.base.value, self.base.d1, self.base.d2))
        right, left = r > self.b, r < self.a
        val = np.where(right, gb + g1b * xr + g2b * p2r, np.where(left, ga - g1a * xl + g2a * p2l, g))
        d1 = np.where(right, g1b + g2b * p1r, np.where(left, g1a - g2a * p1l, g1))
        d2 = np.where(right, g2b * sr, np.where(left, g2a * sl, g2))
        return val, d1, d2

    def value(self, r):
        return self._parts(r)[0]

    def d1(self, r):
        return self._parts(r)[1]

    def d2(self, r):
        return self._parts(r)[2]


@dataclass(frozen=True)
class FloorExtension:
    """Bounded C^1 continuation with ``1 + 2 g >= 1/3`` on the whole line.

    Beyond an endpoint, ``g = g(end) + s L tanh(x / L)`` where ``s`` is the
    outward slope; for decreasing continuations ``L`` is chosen so the
    asymptote is ``floor``.
    """

    base: GBase
    a: float
    b: float
    floor: float = -1.0 / 6.0

    def _length(self, end_value: float, slope: float) -> float:
        if slope < 0:
            return (end_value - self.floor) / (-slope)
        return self.b - self.a

    def _side(self, x, end_value, slope):
        if slope == 0.0:
            return np.full_like(x, end_value), np.zeros_like(x)
        L = self._length(end_value, slope)
        t = np.tanh(x / L)
        return end_value + slope * L * t, slope * (1.0 - t * t)

    def _parts(self, r):
        r = np.asarray(r, dtype=float)
        inner = np.clip(r, self.a, self.b)
        g, g1 = self.base.value(inner), self.base.d1(inner)
        gb, sb = float(self.base.value(self.b)), float(self.base.d1(self.b))
        ga, sa = float(self.base.value(self.a)), -float(self.base.d1(self.a))
        vr, dr = self._side(np.maximum(r - self.b, 0.0), gb, sb)
        vl, dl = self._side(np.maximum(self.a - r, 0.0), ga, sa)
        val = np.where(r > self.b, vr, np.where(r < self.a, vl, g))
        d1 = np.where(r > self.b, dr, np.where(r < self.a, -dl, g1))
        return val, d1

    def value(self, r):
        return self._parts(r)[0]

    def d1(self, r):
        return self._parts(r)[1]

    def supremum(self, base_sup: float) -> float:
        out = base_sup
        for end_value, slope in ((float(self.base.value(self.b)), float(self.base.d1(self.b))),
                                 (float(self.base.value(self.a)), -float(self.base.d1(self.a)))):
            if slope > 0:
                out = max(out, end_value + slope * self._length(end_value, slope))
        return out


@dataclass(frozen=True)
class _ConstantExtension:
    c: float

    def value(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.c)

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def d2(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CouplingG:
    """``g`` with the concave extension (order-parameter equation) and the
    floored extension (chemical-potential equation)."""

    base: GBase
    interval: tuple[float, float]
    sup_g: float
    ext_a: object
    ext_b: object

    @property
    def is_constant(self) -> bool:
        return self.base.is_constant

    @property
    def lip_dg(self) -> float:
        """Lipschitz constant of ``g'`` for the concave extension."""
        return 0.0 if self.is_constant else 2.0 * self.base.g0


def tangent_continuation(base: GBase, interval: tuple[float, float], r):
    """Plain tangent-line continuation of ``g`` past the interval ends."""
    a, b = interval
    r = np.asarray(r, dtype=float)
    inner = base.value(np.clip(r, a, b))
    right = float(base.value(b)) + float(base.d1(b)) * (r - b)
    left = float(base.value(a)) + float(base.d1(a)) * (r - a)
    return np.where(r > b, right, np.where(r < a, left, inner))


def build_extensions(base: GBase, graph: MonotoneGraph, samples: int = 2001) -> CouplingG:
    """Check ``g`` on the closure of D(beta) and build both extensions."""
    if not graph.bounded:
        if not base.is_constant:
            raise CouplingError("D(beta) is unbounded: g must be constant (the system then decouples)")
        ext = _ConstantExtension(base.g0)
        return CouplingG(base, graph.domain, base.g0, ext, ext)
    a, b = graph.domain
    r = np.linspace(a, b, samples)
    g = base.value(r)
    if np.min(g) < -1e-14:
        raise CouplingError("g must be nonnegative on the closure of D(beta)")
    second = np.diff(g, 2)
    if np.max(second) > 1e-12:
        raise CouplingError("g must be concave on the closure of D(beta)")
    sup_g = float(np.max(g))
    if base.is_constant:
        ext = _ConstantExtension(base.g0)
        return CouplingG(base, (a, b), sup_g, ext, ext)
    ext_a = ConcaveExtension(base, a, b, delta=1e-2 * (b - a))
    ext_b = FloorExtension(base, a, b)
    return CouplingG(base, (a, b), ext_b.supremum(sup_g), ext_a, ext_b)


# -- shipped systems -------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """``F' = beta + pi`` together with the coupling ``g``."""

    name: str
    graph: MonotoneGraph
    pi: LipschitzPi
    g: CouplingG
    c: float


def make_potential(name: str, c: float | None = None, g_kind: str = "constant",
                   g0: float = 0.0) -> PotentialSpec:
    """``regular``: F = (r^2 - 1)^2 / 4; ``logarithmic``: convex log part - c r^2;
    ``obstacle``: indicator of [-1, 1] - c r^2."""
    if name == "regular":
        graph, pi, c = MonotoneGraph("polynomial", degree=3), LipschitzPi(-1.0), 1.0 if c is None else c
        if c != 1.0:
            pi = LipschitzPi(-c)
    elif name == "logarithmic":
        c = 2.0 if c is None else c
        if not c > 1:
            raise ValueError("logarithmic potential needs c > 1")
        graph, pi = MonotoneGraph("logarithmic"), LipschitzPi(-2.0 * c)
    elif name == "obstacle":
        c = 1.0 if c is None else c
        if not c > 0:
            raise ValueError("double obstacle potential needs c > 0")
        graph, pi = MonotoneGraph("obstacle"), LipschitzPi(-2.0 * c)
    else:
        raise ValueError(f"unknown potential {name!r}")
    return PotentialSpec(name, graph, pi, build_extensions(GBase(g_kind, g0), graph), c)
