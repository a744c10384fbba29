"""Order-parameter equation for a given chemical potential.

For fixed ``eps`` the regularized equation

    d_t rho + beta_eps(rho) + pi(rho) + B[rho] = T_eps(mu) g'(rho),  rho(0) = rho0

is solved as the fixed point of

    S[v](t_n) = rho0 + dt * sum_{m < n} (T_eps(mu) g'(v) - beta_eps(v) - pi(v) - B[v])(t_m),

iterated from ``v = rho0``.  The discrete fixed point is the forward Euler
trajectory.  ``eps`` is then decreased along a schedule until consecutive
solutions agree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConstraintBlowUpError, DivergenceError, OutsideDomainError,
                     PicardNonConvergenceError)
from .grid import Domain, Field, Trajectory, norm_Linf_L2, norm_Lp_Q, norm_M
from .nonlocal_op import NonlocalOp
from .potentials import CouplingG, LipschitzPi, MonotoneGraph, truncate

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)

# target for L_loc * (window length); keeps per-window Picard counts small
WINDOW_KAPPA = 2.0


@dataclass(frozen=True, eq=False)
class RhoProblem:
    mu: Trajectory
    rho0: Field
    op: NonlocalOp
    graph: MonotoneGraph
    pi: LipschitzPi
    g: CouplingG
    eps_schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    picard_tol: float = 1e-8
    picard_max_iter: int = 100
    continuation_tol: float = 1e-6

    def __post_init__(self):
        d = self.mu.domain
        if self.rho0.domain != d or self.op.domain != d:
            from .errors import DomainMismatchError
            raise DomainMismatchError("mu, rho0 and the operator must share one domain")
        if np.min(self.mu.values) < -1e-12:
            raise ValueError(f"mu must be nonnegative, min is {np.min(self.mu.values):.3e}")
        if not np.all(self.graph.in_domain(self.rho0.values) | (self.graph.distance_to_domain(self.rho0.values) == 0)):
            raise OutsideDomainError("rho0 must lie in the closure of D(beta)")
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"eps schedule must be positive and strictly decreasing, got {eps}")
        object.__setattr__(self, "eps_schedule", eps)
        if not self.picard_tol > 0 or self.picard_max_iter < 1:
            raise ValueError("picard_tol must be positive and picard_max_iter at least 1")

    @property
    def domain(self) -> Domain:
        return self.mu.domain


@dataclass
class FixedEpsResult:
    eps: float
    rho: np.ndarray  # (N + 1, ncells)
    iterations: int
    history: list[float]
    windows: int

    @property
    def ratios(self) -> list[float]:
        """``r_m = d_{m+1} / d_m`` with ``d_m = ||v^m - v^{m-1}||``; entry ``m - 1`` is ``r_m``."""
        h = self.history
        return [h[i + 1] / h[i] if h[i] > 0 else 0.0 for i in range(len(h) - 1)]


@dataclass
class RhoSolution:
    rho: Trajectory
    xi: Trajectory
    dt_rho: Trajectory
    eps: float
    report: dict = field(default_factory=dict)


# -- the operator S ----------------------------------------------------------------


def _integrand(problem: RhoProblem, eps: float, buf: np.ndarray, rows: np.ndarray,
               mu_t: np.ndarray) -> np.ndarray:
    """``T_eps(mu) g'(v) - beta_eps(v) - pi(v) - B[v]`` on ``rows`` of ``buf``."""
    v = buf[rows]
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = -problem.graph.yosida(eps, v) - problem.pi(v) - problem.op.apply_flat(buf, rows)
            if not problem.g.is_constant:
                out = out + mu_t[rows] * problem.g.ext_a.d1(v)
        except FloatingPointError as exc:
            raise DivergenceError(f"overflow in the Picard integrand at eps={eps:g}") from exc
    return out


def _truncated_mu(problem: RhoProblem, eps: float) -> np.ndarray:
    return np.asarray(truncate(eps, problem.mu.flat()))


def picard_map(problem: RhoProblem, eps: float, v: Trajectory) -> Trajectory:
    """One application of ``S`` with the left rectangle rule."""
    if v.domain != problem.domain:
        from .errors import DomainMismatchError
        raise DomainMismatchError("iterate lives on a different domain")
    d = problem.domain
    buf = np.array(v.flat())
    F = _integrand(problem, eps, buf, np.arange(d.N), _truncated_mu(problem, eps))
    out = np.empty_like(buf)
    out[0] = problem.rho0.values.ravel()
    out[1:] = out[0] + d.dt * np.cumsum(F, axis=0)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"Picard iterate is not finite at eps={eps:g}")
    return Trajectory(d, out)


def _window_sweeps(problem: RhoProblem, eps: float, buf: np.ndarray, n0: int, n1: int,
                   mu_t: np.ndarray, max_iter: int, history: list[float]) -> int:
    """Picard iteration for rows ``n0+1 .. n1`` with rows ``<= n0`` frozen.

    ``buf`` holds the initial iterate on the window and is updated in place.
    Returns the number of sweeps.
    """
    d = problem.domain
    w = d.dt * d.cell_volume
    rows = np.arange(n0, n1)
    for it in range(1, max_iter + 1):
        F = _integrand(problem, eps, buf, rows, mu_t)
        new = buf[n0] + d.dt * np.cumsum(F, axis=0)
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"Picard iterate is not finite at eps={eps:g}")
        diff = math.sqrt(w * float(np.sum((new - buf[n0 + 1: n1 + 1]) ** 2)))
        buf[n0 + 1: n1 + 1] = new
        history.append(diff)
        if diff <= problem.picard_tol:
            return it
    raise PicardNonConvergenceError(
        f"Picard iteration did not reach {problem.picard_tol:g} in {max_iter} sweeps at eps={eps:g}",
        history)


def solve_fixed_eps(problem: RhoProblem, eps: float, *, window: int | None = None,
                    initial: np.ndarray | None = None) -> FixedEpsResult:
    """Iterate ``S`` to its fixed point.

    With ``window=None`` the whole interval is iterated at once starting from
    ``v = rho0`` constant in time, and ``history`` holds
    ``||v^{k+1} - v^k||_{L^2(Q)}``.  A finite ``window`` marches through time
    in blocks of that many steps; the fixed point is the same.
    """
    d = problem.domain
    N = d.N
    W = N if window is None else max(1, min(int(window), N))
    buf = np.empty((N + 1, d.ncells))
    if initial is None:
        buf[:] = problem.rho0.values.ravel()
    else:
        buf[:] = initial
    buf[0] = problem.rho0.values.ravel()
    mu_t = _truncated_mu(problem, eps)
    history: list[float] = []
    iterations = 0
    windows = 0
    n0 = 0
    while n0 < N:
        n1 = min(n0 + W, N)
        if initial is None:
            buf[n0 + 1: n1 + 1] = buf[n0]
        iterations += _window_sweeps(problem, eps, buf, n0, n1, mu_t, problem.picard_max_iter, history)
        windows += 1
        n0 = n1
    return FixedEpsResult(eps, buf, iterations, history, windows)


def local_lipschitz(problem: RhoProblem, eps: float, v: np.ndarray) -> float:
    """Lipschitz estimate of the integrand of ``S`` around ``v``."""
    L = float(np.max(problem.graph.yosida_derivative(eps, v))) + problem.pi.lipschitz + problem.op.C_B
    if not problem.g.is_constant:
        L += float(np.max(_truncated_mu(problem, eps))) * problem.g.lip_dg
    return L


def _auto_window(problem: RhoProblem, eps: float, v: np.ndarray) -> int:
    d = problem.domain
    L = local_lipschitz(problem, eps, v)
    return max(1, min(d.N, int(WINDOW_KAPPA / (L * d.dt)) if L > 0 else d.N))


def _solve_windowed(problem: RhoProblem, eps: float, initial: np.ndarray) -> FixedEpsResult:
    """Windowed solve; the window is halved where a block fails to converge."""
    W = _auto_window(problem, eps, initial)
    while True:
        try:
            return solve_fixed_eps(problem, eps, window=W, initial=initial)
        except (PicardNonConvergenceError, DivergenceError):
            if W == 1:
                raise
            W = max(1, W // 2)
            log.debug("eps=%g: shrinking Picard window to %d", eps, W)


def forward_difference(domain: Domain, rho: np.ndarray) -> np.ndarray:
    """``(rho^{n+1} - rho^n) / dt`` with the last step repeated at ``t_N``."""
    out = np.empty_like(rho)
    out[:-1] = np.diff(rho, axis=0) / domain.dt
    out[-1] = out[-2]
    return out


def equation_residual(problem: RhoProblem, eps: float, rho: Trajectory) -> float:
    """``max_n ||(rho^{n+1} - rho^n)/dt + [beta_eps + pi + B - T_eps(mu) g'](rho^n)||_{L^2}``."""
    d = problem.domain
    buf = np.array(rho.flat())
    F = _integrand(problem, eps, buf, np.arange(d.N), _truncated_mu(problem, eps))
    res = np.diff(buf, axis=0) / d.dt - F
    return float(np.max(np.sqrt(d.cell_volume * np.sum(res ** 2, axis=1))))


def _record(problem: RhoProblem, fx: FixedEpsResult, prev: np.ndarray | None, mu_M: float) -> dict:
    d = problem.domain
    rho = fx.rho
    xi = np.asarray(problem.graph.yosida(fx.eps, rho))
    dist = float(np.max(problem.graph.distance_to_domain(rho)))
    sup_xi = float(np.max(np.abs(xi)))
    rho_T = Trajectory(d, rho)
    dtr = Trajectory(d, forward_difference(d, rho))
    xi_T = Trajectory(d, xi)
    p = 10.0 / 3.0
    norm_R = norm_Lp_Q(rho_T, p) + norm_Lp_Q(dtr, p)
    xi_p = norm_Lp_Q(xi_T, p)
    change = None
    if prev is not None:
        change = math.sqrt(d.dt * d.cell_volume * float(np.sum((rho[:-1] - prev[:-1]) ** 2)))
    return {
        "eps": fx.eps,
        "iterations": fx.iterations,
        "windows": fx.windows,
        "constraint_distance": dist,
        "sup_xi": sup_xi,
        # pointwise |rho - J_eps(rho)| = eps |beta_eps(rho)|, with round-off slack
        "constraint_identity": bool(dist <= fx.eps * sup_xi * (1.0 + 1e-12) + 1e-300),
        "norm_R": norm_R,
        "xi_L10_3": xi_p,
        "rho_Linf_L2": norm_Linf_L2(rho_T),
        "apriori_c": (norm_R + xi_p) / (1.0 + mu_M),
        "apriori_c_Linf_L2": norm_Linf_L2(rho_T) / (1.0 + mu_M),
        "change": change,
    }


def solve(problem: RhoProblem, *, window: str | int = "auto") -> RhoSolution:
    """Run the ``eps`` schedule, warm-starting each level from the previous one.

    Stops when consecutive levels differ by at most ``continuation_tol`` in
    ``L^2(Q)``, or when the schedule is exhausted.
    """
    d = problem.domain
    mu_M = norm_M(problem.mu)
    initial = np.broadcast_to(problem.rho0.values.ravel(), (d.N + 1, d.ncells)).copy()
    prev = None
    records: list[dict] = []
    growth_hits = 0
    fx = None
    for k, eps in enumerate(problem.eps_schedule):
        if window == "auto":
            fx = _solve_windowed(problem, eps, initial)
        else:
            w = None if window == "full" else int(window)
            fx = solve_fixed_eps(problem, eps, window=w, initial=None if w is None else initial)
        rec = _record(problem, fx, prev, mu_M)
        records.append(rec)
        log.debug("eps=%g iterations=%d change=%s", eps, fx.iterations, rec["change"])
        if k > 0:
            prev_rec = records[-2]
            shrink = problem.eps_schedule[k - 1] / eps
            if prev_rec["sup_xi"] > 0 and rec["sup_xi"] / prev_rec["sup_xi"] >= 0.9 * shrink:
                growth_hits += 1
            else:
                growth_hits = 0
            if growth_hits >= 2:
                raise ConstraintBlowUpError(
                    f"sup |xi| grows like 1/eps along the schedule ({prev_rec['sup_xi']:.3e} -> "
                    f"{rec['sup_xi']:.3e}); the constraint cannot be met")
            if rec["change"] <= problem.continuation_tol:
                break
        prev = fx.rho
        initial = fx.rho
    rho = fx.rho
    xi = np.asarray(problem.graph.yosida(fx.eps, rho))
    report = {
        "eps_final": fx.eps,
        "levels": records,
        "constraint_identity": all(r["constraint_identity"] for r in records),
        "apriori_c": records[-1]["apriori_c"],
        "residual": equation_residual(problem, fx.eps, Trajectory(d, rho)),
    }
    return RhoSolution(Trajectory(d, rho), Trajectory(d, xi),
                       Trajectory(d, forward_difference(d, rho)), fx.eps, report)
