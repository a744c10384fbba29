"""Discrete nonlocal operators acting on trajectories.

Three forms are supported:

``spatial_conv``  ``B[u](x, t) = int_Omega k(|y - x|) u(y, t) dy``
``affine_conv``   ``B[u](x, t) = int_Omega k(|y - x|) (1 - 2 u(y, t)) dy``
``time_conv``     ``B[u](x, t) = int_0^t k(t - s) u(x, s) ds``

Spatial weights are ``w(x, y) = |cell| k(|y - x|)`` off the diagonal; the
singular self-cell weight integrates ``k`` over the ball with the volume of a
cell.  The time form uses the left rectangle rule, so the value at ``t_n``
only reads snapshots ``m < n`` and causality holds bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.signal import fftconvolve

from .errors import DomainMismatchError, InadmissibleKernelError
from .grid import Domain, Trajectory, _grad_dot, l2_in_space, norm_Lp_Q
from .kernels import KernelSpec, equal_volume_radius, validate_admissible

FORMS = ("spatial_conv", "time_conv", "affine_conv")

DENSE_LIMIT = 4096
CERTIFY_LIMIT = 1024


@dataclass(frozen=True, eq=False)
class NonlocalOp:
    form: str
    kernel: KernelSpec
    domain: Domain
    C_B: float
    weights: np.ndarray | None = field(default=None, repr=False)
    offset_kernel: np.ndarray | None = field(default=None, repr=False)
    offset: np.ndarray | None = field(default=None, repr=False)
    row_sum_bound: float = 0.0
    notes: tuple[str, ...] = ()

    @property
    def is_spatial(self) -> bool:
        return self.form != "time_conv"

    @property
    def is_linear(self) -> bool:
        return self.form != "affine_conv"

    # -- application on flat arrays --------------------------------------------

    def _convolve(self, flat: np.ndarray) -> np.ndarray:
        """``W`` applied to every row of a ``(rows, ncells)`` array."""
        if self.weights is not None:
            return flat @ self.weights.T
        d = self.domain
        u = flat.reshape((flat.shape[0],) + d.shape)
        axes = tuple(range(1, d.dim + 1))
        K = self.offset_kernel[(None,) + (slice(None),) * d.dim]
        out = fftconvolve(K, u, mode="valid", axes=axes)
        return out.reshape(flat.shape[0], d.ncells)

    def apply_flat(self, flat: np.ndarray, rows=None) -> np.ndarray:
        """Apply to a full ``(N + 1, ncells)`` array, returning only ``rows``.

        Spatial forms act row by row; the time form reads earlier rows of
        ``flat`` as history.
        """
        if rows is None:
            rows = range(flat.shape[0])
        rows = np.asarray(rows, dtype=int)
        if self.form == "time_conv":
            out = np.zeros((rows.size, flat.shape[1]))
            for i, n in enumerate(rows):
                if n > 0:
                    out[i] = self.weights[n, :n] @ flat[:n]
            return out
        if self.kernel.kind == "zero":
            conv = np.zeros((rows.size, flat.shape[1]))
        else:
            conv = self._convolve(flat[rows])
        if self.form == "affine_conv":
            return self.offset[None, :] - 2.0 * conv
        return conv


def _offset_grid(kernel: KernelSpec, domain: Domain) -> np.ndarray:
    """``|cell| k(|offset|)`` on all index offsets, self-cell from the ball average."""
    d = domain
    axes = [np.arange(-(n - 1), n) * h for n, h in zip(d.cells, d.h)]
    grids = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    centre = tuple(n - 1 for n in d.cells)
    r[centre] = 1.0
    K = d.cell_volume * np.asarray(kernel.value(r), dtype=float)
    R = equal_volume_radius(d.dim, d.cell_volume)
    K[centre] = kernel.ball_integral(d.dim, R)
    return K


def _dense_from_offsets(K: np.ndarray, domain: Domain) -> np.ndarray:
    idx = np.indices(domain.shape).reshape(domain.dim, -1)
    diff = idx[:, :, None] - idx[:, None, :] + np.array(domain.cells)[:, None, None] - 1
    return K[tuple(diff)]


def _stiffness(domain: Domain) -> sparse.csr_matrix:
    """``|cell| * (-Delta_h)`` with zero-flux closure, so ``a^T G b = int grad a . grad b``."""
    mats = []
    for n, h in zip(domain.cells, domain.h):
        main = np.full(n, 2.0)
        if n > 1:
            main[0] = main[-1] = 1.0
        else:
            main[:] = 0.0
        off = -np.ones(n - 1)
        mats.append(sparse.diags([off, main, off], [-1, 0, 1]) / (h * h))
    eye = [sparse.identity(n) for n in domain.cells]
    total = None
    for ax in range(domain.dim):
        factors = [mats[i] if i == ax else eye[i] for i in range(domain.dim)]
        term = factors[0]
        for f in factors[1:]:
            term = sparse.kron(term, f)
        total = term if total is None else total + term
    return (domain.cell_volume * total).tocsr()


def neg_laplacian_matrix(domain: Domain) -> sparse.csr_matrix:
    """Sparse ``-Delta_h`` matching :func:`nlch.grid.laplacian_neumann`."""
    return (_stiffness(domain) / domain.cell_volume).tocsr()


def _certified_gradient_constant(op: NonlocalOp) -> float | None:
    """Smallest constant for the gradient inequality of a spatial form.

    Uses the generalized symmetric eigenproblem of the quadratic part
    against ``|v|^2 + |grad v|^2``; the affine offset adds a linear term.
    """
    d = op.domain
    if op.weights is None or d.ncells > CERTIFY_LIMIT:
        return None
    G = _stiffness(d).toarray()
    W = op.weights
    S = 0.5 * (W @ G + G @ W)
    Mass = d.cell_volume * np.eye(d.ncells) + G
    lam = linalg.eigh(S, Mass, eigvals_only=True)
    c = float(np.max(np.abs(lam)))
    if op.form == "affine_conv":
        o = op.offset
        c = 2.0 * c + 0.5 * math.sqrt(d.T) * math.sqrt(max(float(o @ G @ o), 0.0))
    return c


def build(form: str, kernel: KernelSpec, domain: Domain, *, certify_gradient: bool = True,
          dense_limit: int = DENSE_LIMIT) -> NonlocalOp:
    """Precompute quadrature weights and the Lipschitz bound ``C_B``.

    ``C_B`` is the largest absolute row (or column) sum of the weights,
    doubled for the affine form.  For small spatial grids the gradient
    inequality constant is computed exactly and ``C_B`` enlarged if needed.
    """
    if form not in FORMS:
        raise ValueError(f"unknown operator form {form!r}; expected one of {FORMS}")
    notes: list[str] = []
    if form == "time_conv":
        n = np.arange(domain.N + 1)
        lag = (n[:, None] - n[None, :]) * domain.dt
        Wt = np.zeros_like(lag)
        low = lag > 0
        if kernel.kind != "zero":
            Wt[low] = domain.dt * np.asarray(kernel.value(lag[low]))
        a = np.abs(Wt)
        bound = float(max(a.sum(axis=1).max(), a.sum(axis=0).max()))
        Wt.setflags(write=False)
        return NonlocalOp(form, kernel, domain, bound, weights=Wt, row_sum_bound=bound,
                          notes=("gradient bound certified: time convolution commutes with grad",))

    rep = validate_admissible(kernel, diameter=domain.diameter, r_min=0.5 * min(domain.h))
    if not rep.passed:
        raise InadmissibleKernelError(
            f"kernel not admissible for spatial operators (alpha_k < 3/2, beta_k < 5/2): {rep.summary()}")

    K = _offset_grid(kernel, domain)
    dense = _dense_from_offsets(K, domain) if domain.ncells <= dense_limit else None
    if dense is not None:
        signed = dense.sum(axis=1)
        rows = np.abs(dense).sum(axis=1)
    else:
        ones = np.ones((1,) + domain.shape)
        axes = tuple(range(1, domain.dim + 1))
        signed = fftconvolve(K[None], ones, mode="valid", axes=axes).ravel()
        rows = fftconvolve(np.abs(K)[None], ones, mode="valid", axes=axes).ravel()
        notes.append("fft application path")
    row_bound = float(rows.max())
    C_B = 2.0 * row_bound if form == "affine_conv" else row_bound
    offset = None
    if form == "affine_conv":
        offset = signed.copy()
        offset.setflags(write=False)
    if dense is not None:
        dense.setflags(write=False)
    K.setflags(write=False)
    op = NonlocalOp(form, kernel, domain, C_B, weights=dense, offset_kernel=K, offset=offset,
                    row_sum_bound=row_bound)

    if certify_gradient and kernel.kind != "zero":
        c = _certified_gradient_constant(op)
        if c is None:
            notes.append("gradient bound not certified: grid above certification limit")
        elif c > C_B:
            notes.append(f"C_B enlarged from row-sum {C_B:.6g} to gradient constant {c:.6g}")
            C_B = c
        else:
            notes.append(f"gradient bound certified with row-sum constant (exact {c:.6g})")
    return NonlocalOp(form, kernel, domain, C_B, weights=dense, offset_kernel=K, offset=offset,
                      row_sum_bound=row_bound, notes=tuple(notes))


def row_sums(op: NonlocalOp) -> np.ndarray:
    """Signed spatial row sums ``sum_y w(x, y)``, shaped like the grid."""
    if op.form == "time_conv":
        raise ValueError("row sums are defined for spatial forms only")
    if op.weights is not None:
        s = op.weights.sum(axis=1)
    else:
        d = op.domain
        s = fftconvolve(op.offset_kernel[None], np.ones((1,) + d.shape), mode="valid",
                        axes=tuple(range(1, d.dim + 1))).ravel()
    return s.reshape(op.domain.shape)


def _check_domain(op: NonlocalOp, *trajs: Trajectory):
    for u in trajs:
        if u.domain != op.domain:
            raise DomainMismatchError("trajectory domain differs from operator domain")


def apply(op: NonlocalOp, u: Trajectory) -> Trajectory:
    _check_domain(op, u)
    return Trajectory(op.domain, op.apply_flat(np.asarray(u.flat())))


def _cut_index(domain: Domain, t: float) -> int:
    n = int(math.floor(t / domain.dt + 1e-9))
    return min(max(n, 0), domain.N)


def check_causality(op: NonlocalOp, u: Trajectory, v: Trajectory, t_cut: float) -> bool:
    """True iff ``B[u]`` and ``B[v]`` agree bit for bit on ``[0, t_cut]``."""
    _check_domain(op, u, v)
    n = _cut_index(op.domain, t_cut)
    bu = op.apply_flat(np.asarray(u.flat()))[: n + 1]
    bv = op.apply_flat(np.asarray(v.flat()))[: n + 1]
    return bool(np.array_equal(bu, bv))


def check_lipschitz(op: NonlocalOp, u: Trajectory, v: Trajectory, t: float | None = None) -> float:
    """``||B[u] - B[v]||_{L^2(Q_t)} / ||u - v||_{L^2(Q_t)}``; should not exceed ``C_B``."""
    _check_domain(op, u, v)
    d = op.domain
    n = d.N if t is None else _cut_index(d, t)
    num = Trajectory(d, op.apply_flat(np.asarray(u.flat())) - op.apply_flat(np.asarray(v.flat())))
    den = norm_Lp_Q(Trajectory(d, u.values - v.values), 2, upto=n)
    if den == 0.0:
        raise ZeroDivisionError("u and v coincide on Q_t: Lipschitz ratio undefined")
    return norm_Lp_Q(num, 2, upto=n) / den


def check_gradient_bound(op: NonlocalOp, v: Trajectory, t: float | None = None) -> float:
    """``|int_{Q_t} grad B[v] . grad v| - C_B (1 + int_{Q_t} |v|^2 + |grad v|^2)``."""
    _check_domain(op, v)
    d = op.domain
    n = d.N if t is None else _cut_index(d, t)
    vals = np.asarray(v.values)
    bv = op.apply_flat(np.asarray(v.flat())).reshape(vals.shape)
    lhs = abs(d.dt * float(np.sum(_grad_dot(d, bv[:n], vals[:n]))))
    energy = d.dt * float(np.sum(l2_in_space(d, vals[:n]) ** 2 + _grad_dot(d, vals[:n], vals[:n])))
    return lhs - op.C_B * (1.0 + energy)


def lp_bound_constant(op: NonlocalOp, p: float, t: float | None = None) -> float:
    """``C_{B,p} = max(C_B, ||affine offset||_{L^p(Q_t)})``."""
    if op.form != "affine_conv":
        return op.C_B
    d = op.domain
    n = d.N if t is None else _cut_index(d, t)
    off = Trajectory(d, np.broadcast_to(op.offset.reshape(d.shape), (d.N + 1,) + d.shape))
    return max(op.C_B, norm_Lp_Q(off, p, upto=n))


def check_lp_bound(op: NonlocalOp, v: Trajectory, p: float, t: float | None = None) -> float:
    """``||B[v]||_p - C_{B,p} (1 + ||v||_p)`` on ``Q_t``; nonpositive when the bound holds."""
    _check_domain(op, v)
    d = op.domain
    n = d.N if t is None else _cut_index(d, t)
    bv = Trajectory(d, op.apply_flat(np.asarray(v.flat())))
    return norm_Lp_Q(bv, p, upto=n) - lp_bound_constant(op, p, t) * (1.0 + norm_Lp_Q(v, p, upto=n))
