"""Radial kernels ``k(r)`` and their admissibility checks.

A kernel is admissible for the spatial nonlocal operators when it obeys the
power envelopes ``|k(r)| <= C1 r**-alpha_k`` with ``alpha_k < 3/2`` and
``|k'(r)| <= C2 r**-beta_k`` with ``beta_k < 5/2``.  The Newtonian potential
``C / r`` has ``alpha_k = 1`` and ``beta_k = 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidKernelError

KINDS = ("newtonian", "power_law", "gaussian", "zero", "custom_table")

ALPHA_GATE = 1.5
BETA_GATE = 2.5
ALPHA_CONTINUITY_GATE = 3.0

# surface measure of the unit sphere in R^d (two points when d = 1)
_SPHERE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}
_BALL = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    C1: float = 1.0
    alpha_k: float = 0.0
    C2: float = 0.0
    beta_k: float = 0.0
    width: float = 1.0
    table_r: tuple[float, ...] = field(default=(), repr=False)
    table_k: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidKernelError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "zero" and not (self.C1 > 0 and math.isfinite(self.C1)):
            raise InvalidKernelError(f"kernel amplitude C1 must be positive, got {self.C1}")
        if self.kind == "gaussian" and not self.width > 0:
            raise InvalidKernelError(f"gaussian width must be positive, got {self.width}")
        if self.kind == "custom_table":
            r = np.asarray(self.table_r, float)
            k = np.asarray(self.table_k, float)
            if r.size < 2 or r.size != k.size:
                raise InvalidKernelError("custom_table needs at least two (r, k) nodes")
            if np.any(np.diff(r) <= 0) or r[0] <= 0:
                raise InvalidKernelError("custom_table radii must be positive and increasing")
            if np.any(k <= 0) or not np.all(np.isfinite(k)):
                raise InvalidKernelError("custom_table values must be positive and finite")

    # -- evaluation -----------------------------------------------------------

    def __call__(self, r):
        return self.value(r)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)):
            raise ValueError("kernel radius must be positive")
        if self.kind == "zero":
            out = np.zeros_like(r)
        elif self.kind == "newtonian":
            out = self.C1 / r
        elif self.kind == "power_law":
            out = self.C1 * r ** (-self.alpha_k)
        elif self.kind == "gaussian":
            out = self.C1 * np.exp(-0.5 * (r / self.width) ** 2)
        else:
            out = self._table(r)[0]
        return out[()] if out.ndim == 0 else out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)):
            raise ValueError("kernel radius must be positive")
        if self.kind == "zero":
            out = np.zeros_like(r)
        elif self.kind == "newtonian":
            out = -self.C1 / r ** 2
        elif self.kind == "power_law":
            out = -self.alpha_k * self.C1 * r ** (-self.alpha_k - 1.0)
        elif self.kind == "gaussian":
            out = -self.C1 * r / self.width ** 2 * np.exp(-0.5 * (r / self.width) ** 2)
        else:
            val, slope = self._table(r)
            out = slope * val / r
        return out[()] if out.ndim == 0 else out

    def _table(self, r):
        """Log-log linear interpolation; end segments extrapolate their power law."""
        lr = np.log(np.asarray(self.table_r, float))
        lk = np.log(np.asarray(self.table_k, float))
        slopes = np.diff(lk) / np.diff(lr)
        x = np.log(r)
        i = np.clip(np.searchsorted(lr, x) - 1, 0, slopes.size - 1)
        s = slopes[i]
        return np.exp(lk[i] + s * (x - lr[i])), s

    # -- integrals ------------------------------------------------------------

    def ball_integral(self, dim: int, R: float) -> float:
        """``int_{|y| < R} k(|y|) dy`` in ``R^dim``, analytically."""
        S = _SPHERE[dim]
        if self.kind == "zero":
            return 0.0
        if self.kind in ("newtonian", "power_law"):
            a = 1.0 if self.kind == "newtonian" else self.alpha_k
            if a >= dim:
                raise InvalidKernelError(
                    f"kernel r^-{a:g} is not integrable near the origin in {dim}-D")
            return S * self.C1 * R ** (dim - a) / (dim - a)
        if self.kind == "gaussian":
            s = self.width
            z = R / (s * math.sqrt(2.0))
            e = math.exp(-z * z)
            if dim == 1:
                radial = s * math.sqrt(math.pi / 2.0) * math.erf(z)
            elif dim == 2:
                radial = s * s * (1.0 - e)
            else:
                radial = s ** 3 * math.sqrt(math.pi / 2.0) * math.erf(z) - s * s * R * e
            return S * self.C1 * radial
        return S * self._table_radial_moment(dim, R)

    def _table_radial_moment(self, dim: int, R: float) -> float:
        r = np.asarray(self.table_r, float)
        k = np.asarray(self.table_k, float)
        slopes = np.diff(np.log(k)) / np.diff(np.log(r))
        # segments: (0, r1) uses slope 0, (r_i, r_{i+1}) slope i, beyond uses the last
        edges = np.concatenate(([0.0], r[1:-1], [np.inf]))
        total = 0.0
        for i, s in enumerate(slopes):
            a, b = edges[i], min(edges[i + 1], R)
            if b <= a:
                break
            q = s + dim
            if i == 0 and q <= 0:
                raise InvalidKernelError("custom_table kernel is not integrable near the origin")
            c = k[i] * r[i] ** (-s)
            if abs(q) < 1e-14:
                total += c * math.log(b / a)
            else:
                total += c * (b ** q - a ** q) / q
        return float(total)


def newtonian(C: float = 1.0) -> KernelSpec:
    return KernelSpec("newtonian", C1=C, alpha_k=1.0, C2=C, beta_k=2.0)


def power_law(C1: float, alpha: float) -> KernelSpec:
    return KernelSpec("power_law", C1=C1, alpha_k=alpha, C2=abs(alpha) * C1, beta_k=alpha + 1.0)


def gaussian(amplitude: float = 1.0, width: float = 0.1) -> KernelSpec:
    # |k'(r)| peaks at r = width with value amplitude / (width sqrt(e))
    return KernelSpec("gaussian", C1=amplitude, alpha_k=0.0,
                      C2=amplitude / (width * math.sqrt(math.e)), beta_k=0.0, width=width)


def zero() -> KernelSpec:
    return KernelSpec("zero", C1=0.0, alpha_k=0.0, C2=0.0, beta_k=0.0)


def custom_table(r, k, alpha_k: float, beta_k: float) -> KernelSpec:
    """Tabulated kernel; envelope constants are fitted on the nodes."""
    r = np.asarray(r, float)
    k = np.asarray(k, float)
    tmp = KernelSpec("custom_table", C1=1.0, alpha_k=alpha_k, beta_k=beta_k,
                     table_r=tuple(r), table_k=tuple(k))
    C1 = float(np.max(np.abs(k) * r ** alpha_k))
    C2 = float(np.max(np.abs(tmp.derivative(r)) * r ** beta_k))
    return KernelSpec("custom_table", C1=C1, alpha_k=alpha_k, C2=C2, beta_k=beta_k,
                      table_r=tuple(r), table_k=tuple(k))


def newtonian_analog(dim: int, C: float = 1.0) -> KernelSpec:
    """``C / r`` in 3-D; in lower dimension ``C r**(-dim/3)``.

    ``1/r`` is not locally integrable on a line, so the 1-D and 2-D analogs
    keep the Newtonian ratio ``alpha_k / dim = 1/3`` instead.
    """
    if dim == 3:
        return newtonian(C)
    return power_law(C, dim / 3.0)


def eval_kernel(k: KernelSpec, r: float) -> float:
    if not r > 0:
        raise ValueError(f"kernel radius must be positive, got {r}")
    return float(k.value(r))


@dataclass(frozen=True)
class AdmissibilityReport:
    kind: str
    alpha_k: float
    beta_k: float
    alpha_pass: bool
    beta_pass: bool
    continuity_pass: bool
    envelope_pass: bool
    derivative_envelope_pass: bool
    worst_envelope_ratio: float
    worst_derivative_ratio: float

    @property
    def passed(self) -> bool:
        return self.alpha_pass and self.beta_pass and self.envelope_pass and self.derivative_envelope_pass

    def summary(self) -> str:
        def flag(ok):
            return "pass" if ok else "fail"
        return (f"alpha_k={self.alpha_k:g} {flag(self.alpha_pass)}, "
                f"beta_k={self.beta_k:g} {flag(self.beta_pass)}, "
                f"envelope {flag(self.envelope_pass)}, "
                f"derivative envelope {flag(self.derivative_envelope_pass)}, "
                f"alpha_k<3 {flag(self.continuity_pass)} (informational)")


def sample_radii(diameter: float, r_min: float | None = None, num: int = 400) -> np.ndarray:
    lo = diameter * 1e-4 if r_min is None else r_min
    return np.geomspace(lo, diameter, num)


def validate_admissible(k: KernelSpec, diameter: float = math.sqrt(3.0),
                        r_min: float | None = None) -> AdmissibilityReport:
    """Exponent gates plus sampled envelope checks over four decades of ``r``."""
    if k.kind == "zero":
        return AdmissibilityReport(k.kind, k.alpha_k, k.beta_k, True, True, True, True, True, 0.0, 0.0)
    r = np.asarray(k.table_r, float) if k.kind == "custom_table" else sample_radii(diameter, r_min)
    with np.errstate(all="ignore"):
        val = np.asarray(k.value(r))
        der = np.asarray(k.derivative(r))
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(der))):
        raise InvalidKernelError(f"kernel {k.kind} produced non-finite values on (0, {diameter}]")
    env = np.abs(val) / (k.C1 * r ** (-k.alpha_k))
    denv = np.abs(der) / (k.C2 * r ** (-k.beta_k)) if k.C2 > 0 else np.where(der == 0, 0.0, np.inf)
    slack = 1.0 + 1e-12
    return AdmissibilityReport(
        kind=k.kind, alpha_k=k.alpha_k, beta_k=k.beta_k,
        alpha_pass=k.alpha_k < ALPHA_GATE,
        beta_pass=k.beta_k < BETA_GATE,
        continuity_pass=k.alpha_k < ALPHA_CONTINUITY_GATE,
        envelope_pass=bool(np.max(env) <= slack),
        derivative_envelope_pass=bool(np.max(denv) <= slack),
        worst_envelope_ratio=float(np.max(env)),
        worst_derivative_ratio=float(np.max(denv)),
    )


def equal_volume_radius(dim: int, volume: float) -> float:
    return (volume / _BALL[dim]) ** (1.0 / dim)
