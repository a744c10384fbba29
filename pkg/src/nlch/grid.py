"""Uniform cell-centered grids, discrete fields and discrete function-space norms.

Space is a box split into ``cells`` equal cells per axis; fields live at cell
centers.  Time is ``[0, T]`` split into ``N`` steps.  Integrals over space use
the cell volume, integrals over time use the left rectangle rule, so a norm
over ``Q_t`` with ``t = t_n`` only sees snapshots ``0 .. n-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

SUPPORTED_P = (1.0, 2.0, 10.0 / 3.0, 6.0, np.inf)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    """Box ``prod(0, extent_i)`` times the interval ``(0, T)``."""

    dim: int
    cells: tuple[int, ...]
    extent: tuple[float, ...]
    T: float
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        cells = tuple(int(c) for c in np.broadcast_to(self.cells, (self.dim,)))
        extent = tuple(float(e) for e in np.broadcast_to(self.extent, (self.dim,)))
        if any(c < 1 for c in cells):
            raise ValueError(f"cells must be positive, got {cells}")
        if any(not np.isfinite(e) or e <= 0 for e in extent):
            raise ValueError(f"extent must be positive, got {extent}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"final time T must be positive, got {self.T}")
        if int(self.N) < 1:
            raise ValueError(f"number of time steps N must be positive, got {self.N}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def uniform(cls, dim: int = 1, cells: int = 64, extent: float = 1.0,
                T: float = 1.0, N: int = 100) -> "Domain":
        return cls(dim, (cells,) * dim, (extent,) * dim, T, N)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extent, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extent))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum(e * e for e in self.extent)))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def axes(self) -> list[np.ndarray]:
        return [(np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.h)]

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates, one array of ``shape`` per axis."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def refined(self, space: int = 2, time: int = 2) -> "Domain":
        return Domain(self.dim, tuple(c * space for c in self.cells), self.extent,
                      self.T, self.N * time)


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar cell-centered field at one time level."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.domain.ncells:
            raise ValueError(f"field has {v.size} values, domain has {self.domain.ncells} cells")
        v = v.reshape(self.domain.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, domain: Domain, f: Callable[..., np.ndarray]) -> "Field":
        return cls(domain, np.broadcast_to(f(*domain.centers()), domain.shape))

    @classmethod
    def constant(cls, domain: Domain, c: float) -> "Field":
        return cls(domain, np.full(domain.shape, float(c)))

    def with_values(self, values) -> "Field":
        return Field(self.domain, values)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """``N + 1`` snapshots at ``t_n = n dt``; ``values[n]`` is snapshot ``n``."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.domain.N + 1,) + self.domain.shape
        if v.size != int(np.prod(shape)):
            raise ValueError(f"trajectory needs {shape[0]} snapshots of {self.domain.ncells} cells")
        v = v.reshape(shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant_in_time(cls, f: Field) -> "Trajectory":
        d = f.domain
        return cls(d, np.broadcast_to(f.values, (d.N + 1,) + d.shape))

    @classmethod
    def zeros(cls, domain: Domain) -> "Trajectory":
        return cls(domain, np.zeros((domain.N + 1,) + domain.shape))

    def __len__(self) -> int:
        return self.values.shape[0]

    def snapshot(self, n: int) -> Field:
        return Field(self.domain, self.values[n])

    def flat(self) -> np.ndarray:
        """Read-only ``(N + 1, ncells)`` view."""
        return self.values.reshape(self.domain.N + 1, self.domain.ncells)


def check_same_domain(*objs) -> Domain:
    from .errors import DomainMismatchError

    d = objs[0].domain
    for o in objs[1:]:
        if o.domain != d:
            raise DomainMismatchError(f"domain mismatch: {o.domain} vs {d}")
    return d


# -- differential operators -------------------------------------------------


def _laplacian_array(domain: Domain, f: np.ndarray) -> np.ndarray:
    """Centered Laplacian with mirror ghost cells on arrays of trailing ``shape``."""
    lead = f.ndim - domain.dim
    out = np.zeros_like(f)
    for ax, h in enumerate(domain.h):
        a = lead + ax
        pad = [(0, 0)] * f.ndim
        pad[a] = (1, 1)
        g = np.pad(f, pad, mode="edge")
        n = f.shape[a]
        lo = np.take(g, np.arange(0, n), axis=a)
        hi = np.take(g, np.arange(2, n + 2), axis=a)
        out += (lo - 2.0 * f + hi) / (h * h)
    return out


def laplacian_neumann(f: Field) -> Field:
    """Discrete Laplacian with zero normal flux; constants map to zero."""
    return Field(f.domain, _laplacian_array(f.domain, f.values))


def _grad_components(domain: Domain, f: np.ndarray) -> list[np.ndarray]:
    """Forward differences across interior faces (boundary faces carry no flux)."""
    lead = f.ndim - domain.dim
    return [np.diff(f, axis=lead + ax) / h for ax, h in enumerate(domain.h)]


def _grad_dot(domain: Domain, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``int_Omega grad f . grad g`` per leading index."""
    lead = f.ndim - domain.dim
    sum_axes = tuple(range(lead, f.ndim))
    total = 0.0
    for a, b in zip(_grad_components(domain, f), _grad_components(domain, g)):
        total = total + np.sum(a * b, axis=sum_axes)
    return np.asarray(total) * domain.cell_volume


def grad_sq_norm(f: Field) -> float:
    """``int_Omega |grad f|^2`` by forward differences."""
    return float(_grad_dot(f.domain, f.values, f.values))


# -- norms --------------------------------------------------------------------


def _check_p(p: float) -> float:
    p = float(p)
    for q in SUPPORTED_P:
        if p == q or (np.isfinite(q) and abs(p - q) < 1e-12):
            return q
    raise ValueError(f"unsupported exponent p={p}; supported: 1, 2, 10/3, 6, inf")


def norm_L2_omega(f: Field) -> float:
    return float(np.sqrt(f.domain.cell_volume * np.sum(f.values ** 2)))


def norm_Lp_omega(f: Field, p: float) -> float:
    p = _check_p(p)
    if np.isinf(p):
        return float(np.max(np.abs(f.values)))
    return float((f.domain.cell_volume * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


def _upto(domain: Domain, upto: int | None) -> int:
    n = domain.N if upto is None else int(upto)
    if not 0 <= n <= domain.N:
        raise ValueError(f"upto must lie in [0, {domain.N}], got {upto}")
    return n


def norm_Lp_Q(u: Trajectory, p: float, upto: int | None = None) -> float:
    """``L^p(Q_t)`` norm with ``t = t_upto`` (default ``T``).

    For finite ``p`` the left rectangle rule uses snapshots ``0 .. upto-1``;
    for ``p = inf`` the maximum runs over snapshots ``0 .. upto``.
    """
    p = _check_p(p)
    d = u.domain
    n = _upto(d, upto)
    if np.isinf(p):
        return float(np.max(np.abs(u.values[: n + 1])))
    s = np.sum(np.abs(u.values[:n]) ** p)
    return float((d.dt * d.cell_volume * s) ** (1.0 / p))


def norm_L2_V(u: Trajectory, upto: int | None = None) -> float:
    """``L^2(0, t; H^1)`` norm; each time level contributes ``|f|^2 + |grad f|^2``."""
    d = u.domain
    n = _upto(d, upto)
    v = u.values[:n]
    s = d.cell_volume * np.sum(v ** 2) + float(np.sum(_grad_dot(d, v, v)))
    return float(np.sqrt(d.dt * s))


def norm_M(u: Trajectory, upto: int | None = None) -> float:
    """Norm of ``L^{10/3}(Q) cap L^2(0,T;V)``: max of the two constituents."""
    return max(norm_Lp_Q(u, 10.0 / 3.0, upto), norm_L2_V(u, upto))


def norm_Linf_L2(u: Trajectory, upto: int | None = None) -> float:
    d = u.domain
    n = _upto(d, upto)
    per = np.sqrt(d.cell_volume * np.sum(u.values[: n + 1] ** 2, axis=tuple(range(1, d.dim + 1))))
    return float(np.max(per))


def norm_Linf_V(u: Trajectory) -> float:
    d = u.domain
    v = u.values
    per = d.cell_volume * np.sum(v ** 2, axis=tuple(range(1, d.dim + 1))) + _grad_dot(d, v, v)
    return float(np.sqrt(np.max(per)))


def l2_in_space(domain: Domain, values: np.ndarray) -> np.ndarray:
    """``||values[n]||_{L^2(Omega)}`` for every leading index ``n``."""
    axes = tuple(range(values.ndim - domain.dim, values.ndim))
    return np.sqrt(domain.cell_volume * np.sum(values ** 2, axis=axes))
