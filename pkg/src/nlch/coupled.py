"""Outer fixed-point loop ``mu <- F2(F1(mu))`` and the experiments built on it.

``F1`` maps a nonnegative chemical potential to the order parameter
(:mod:`nlch.rho_solver`), ``F2`` maps the order parameter back to a chemical
potential (:mod:`nlch.mu_solver`).  The loop starts from ``mu0`` held constant
in time and stops when two iterates agree in the ``M`` norm.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mu_solver, rho_solver
from .errors import ConfigError, InvariantViolation, OuterNonConvergenceError, OutsideDomainError
from .grid import Domain, Field, Trajectory, l2_in_space, norm_Lp_Q, norm_M
from .kernels import KernelSpec
from .nonlocal_op import NonlocalOp, build
from .potentials import PotentialSpec, truncate

log = logging.getLogger(__name__)

CLIP_FLOOR = -1e-12


@dataclass(frozen=True, eq=False)
class SystemConfig:
    domain: Domain
    kernel: KernelSpec
    form: str
    potential: PotentialSpec
    mu0: Field
    rho0: Field
    eps_schedule: tuple[float, ...] = rho_solver.DEFAULT_SCHEDULE
    picard_tol: float = 1e-8
    picard_max_iter: int = 100
    continuation_tol: float = 1e-6
    outer_tol: float = 1e-8
    outer_max_iter: int = 50
    omega: float = 1.0
    C0: float | None = None
    linear_solver: str = "direct"
    linear_tol: float = 1e-10
    max_halvings: int = 10
    energy_tol: float = 1e-6
    window: str | int = "auto"

    def __post_init__(self):
        d = self.domain
        if self.mu0.domain != d or self.rho0.domain != d:
            raise ConfigError("initial data must live on the configured domain")
        if np.min(self.mu0.values) < 0:
            raise ConfigError("mu0 must be nonnegative")
        graph = self.potential.graph
        rho = self.rho0.values
        if np.any(graph.distance_to_domain(rho) > 0):
            raise OutsideDomainError("rho0 must lie in the closure of D(beta)")
        # integrability of rho0 |beta0(rho0)|^{7/3}: the discrete sum must be finite
        if graph.kind == "logarithmic" and np.any(np.abs(rho) >= 1.0):
            raise OutsideDomainError("logarithmic potential needs |rho0| < 1 so that beta0(rho0) is finite")
        if not 0 < self.omega <= 1:
            raise ConfigError(f"omega must lie in (0, 1], got {self.omega}")
        if self.outer_max_iter < 0:
            raise ConfigError("outer_max_iter must be nonnegative")

    def refined(self, space: int = 2, time: int = 2) -> "SystemConfig":
        """Same problem on a grid refined ``space`` times per axis and ``time`` times in ``t``.

        Initial data are prolonged by repetition, so cell averages are kept.
        """
        d = self.domain.refined(space, time)
        def prolong(f: Field) -> Field:
            v = f.values
            for ax in range(self.domain.dim):
                v = np.repeat(v, space, axis=ax)
            return Field(d, v)
        return replace(self, domain=d, mu0=prolong(self.mu0), rho0=prolong(self.rho0))


@dataclass(frozen=True)
class MembershipReport:
    norm: float
    radius: float
    min_value: float
    within_radius: bool
    nonnegative: bool

    @property
    def passed(self) -> bool:
        return self.within_radius and self.nonnegative


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    ledger: list[dict] = field(default_factory=list)
    omega_final: float = 1.0
    radius: float = 0.0
    radius_kind: str = "energy"
    operator_notes: tuple[str, ...] = ()
    C_B: float = 0.0
    rho: dict = field(default_factory=dict)
    mu: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)


@dataclass
class SystemSolution:
    mu: Trajectory
    rho: Trajectory
    xi: Trajectory
    dt_rho: Trajectory
    eps: float
    history: list[float]
    membership: list[MembershipReport]
    report: SolveReport


def check_membership(mu: Trajectory, radius: float) -> MembershipReport:
    """``||mu||_M <= radius`` and ``mu >= -1e-12``."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    n = norm_M(mu)
    m = float(np.min(mu.values))
    return MembershipReport(n, float(radius), m, bool(n <= radius), bool(m >= CLIP_FLOOR))


def membership_radius(config: SystemConfig) -> tuple[float, str]:
    """Radius of the admissible set.

    With ``C0`` given this is ``C0 (3 + 6 sup g)^{1/2} ||mu0||``.  Otherwise
    the energy bound alone gives ``||mu||_{L^2(0,T;V)} <= (1 + T)^{1/2}
    (3 + 6 sup g)^{1/2} ||mu0||``, which is used as the surrogate.
    """
    g = config.potential.g
    if config.C0 is not None:
        return mu_solver.m0_radius(g, config.mu0, config.C0), "C0"
    base = math.sqrt(3.0 + 6.0 * g.sup_g) * float(l2_in_space(config.domain, config.mu0.values))
    return math.sqrt(1.0 + config.domain.T) * base, "energy"


def build_operator(config: SystemConfig) -> NonlocalOp:
    return build(config.form, config.kernel, config.domain)


def _rho_problem(config: SystemConfig, op: NonlocalOp, mu: Trajectory) -> rho_solver.RhoProblem:
    p = config.potential
    return rho_solver.RhoProblem(mu, config.rho0, op, p.graph, p.pi, p.g, config.eps_schedule,
                                 config.picard_tol, config.picard_max_iter, config.continuation_tol)


def _mu_problem(config: SystemConfig, rs: rho_solver.RhoSolution) -> mu_solver.MuProblem:
    return mu_solver.MuProblem(rs.rho, rs.dt_rho, config.mu0, config.potential.g, config.linear_solver,
                               config.linear_tol, config.max_halvings, config.energy_tol)


def apply_map(config: SystemConfig, op: NonlocalOp, mu: Trajectory):
    """One evaluation of ``F = F2 o F1``; returns both partial solutions."""
    rs = rho_solver.solve(_rho_problem(config, op, mu), window=config.window)
    ms = mu_solver.solve(_mu_problem(config, rs))
    return rs, ms


def digest(u: Trajectory) -> str:
    """Short content hash of a trajectory, for bit-exact comparisons in ledgers."""
    return hashlib.sha256(np.ascontiguousarray(u.values).tobytes()).hexdigest()[:16]


def _clip(mu: Trajectory) -> tuple[Trajectory, float]:
    """Cut round-off negatives to zero; returns the largest magnitude removed."""
    v = mu.values
    neg = float(-np.min(v)) if np.min(v) < 0 else 0.0
    if neg == 0.0:
        return mu, 0.0
    return Trajectory(mu.domain, np.maximum(v, 0.0)), neg


def outer_solve(config: SystemConfig, op: NonlocalOp | None = None) -> SystemSolution:
    """Iterate ``mu <- (1 - omega) mu + omega F(mu)`` until the ``M``-norm change is below ``outer_tol``.

    ``omega`` drops to ``1/2`` after two consecutive residual increases.
    """
    op = build_operator(config) if op is None else op
    d = config.domain
    radius, kind = membership_radius(config)
    report = SolveReport(radius=radius, radius_kind=kind, operator_notes=op.notes, C_B=op.C_B,
                         omega_final=config.omega)
    mu = Trajectory.constant_in_time(config.mu0)
    membership = [check_membership(mu, radius) if radius > 0 else MembershipReport(0.0, 0.0, 0.0, True, True)]
    omega = config.omega
    history: list[float] = []
    for k in range(1, config.outer_max_iter + 1):
        mu_in, clipped = _clip(mu)
        if clipped > -CLIP_FLOOR:
            raise InvariantViolation(f"outer iterate {k - 1} has a negative value {-clipped:.3e}")
        rs, ms = apply_map(config, op, mu_in)
        new_vals = ms.mu.values if omega == 1.0 else (1.0 - omega) * mu.values + omega * ms.mu.values
        new = Trajectory(d, new_vals)
        res = norm_M(Trajectory(d, new.values - mu.values))
        history.append(res)
        mem = check_membership(new, radius) if radius > 0 else MembershipReport(0.0, 0.0, 0.0, True, True)
        membership.append(mem)
        report.ledger.append({
            "iterate": k,
            "residual": res,
            "omega": omega,
            "norm_M": mem.norm,
            "min_mu": mem.min_value,
            "clip": clipped,
            "energy_slack": ms.bound - ms.report["energy_worst"],
            "within_radius": mem.within_radius,
            "eps": rs.eps,
            "picard_iterations": sum(r["iterations"] for r in rs.report["levels"]),
            "rho_digest": digest(rs.rho),
        })
        log.info("outer iterate %d: residual %.3e", k, res)
        mu = new
        if res <= config.outer_tol:
            report.iterations = k
            report.residuals = history
            report.omega_final = omega
            report.rho = rs.report
            report.mu = ms.report
            report.final = final_norms(ms.mu, rs)
            return SystemSolution(ms.mu if omega == 1.0 else new, rs.rho, rs.xi, rs.dt_rho, rs.eps,
                                  history, membership, report)
        if len(history) >= 3 and history[-1] > history[-2] > history[-3] and omega > 0.5:
            omega = 0.5
            log.info("outer residual increased twice; relaxing with omega=0.5")
    raise OuterNonConvergenceError(
        f"outer iteration did not reach {config.outer_tol:g} in {config.outer_max_iter} iterates", history)


def final_norms(mu: Trajectory, rs: rho_solver.RhoSolution) -> dict:
    return {
        "mu_sup": float(np.max(np.abs(mu.values))),
        "mu_min": float(np.min(mu.values)),
        "mu_M": norm_M(mu),
        "rho_Linf_L2": float(np.max(l2_in_space(mu.domain, rs.rho.values))),
        "dt_rho_L6": norm_Lp_Q(rs.dt_rho, 6),
        "xi_L6": norm_Lp_Q(rs.xi, 6),
        "eps": rs.eps,
    }


def equation_residuals(config: SystemConfig, op: NonlocalOp, sol: SystemSolution) -> dict:
    """Discrete residuals of both equations evaluated on the returned triplet."""
    d = config.domain
    g = config.potential.g
    rho = sol.rho.flat()
    mu = sol.mu.flat()
    xi = sol.xi.flat()
    pi = config.potential.pi
    B = op.apply_flat(np.asarray(rho), np.arange(d.N))
    mu_t = np.asarray(truncate(sol.eps, mu[:-1]))
    forcing = mu_t * g.ext_a.d1(rho[:-1]) if not g.is_constant else 0.0
    r1 = np.diff(rho, axis=0) / d.dt + xi[:-1] + pi(rho[:-1]) + B - forcing
    a = 1.0 + 2.0 * g.ext_b.value(rho[:-1])
    s = g.ext_b.d1(rho[:-1]) * sol.dt_rho.flat()[:-1]
    lap = -np.asarray((mu_solver.neg_laplacian_matrix(d) @ mu[1:].T).T)
    r2 = a * np.diff(mu, axis=0) / d.dt + s * mu[1:] - lap
    l2 = lambda r: float(np.max(np.sqrt(d.cell_volume * np.sum(r ** 2, axis=1))))
    return {"rho": l2(r1), "mu": l2(r2)}


# -- continuous dependence -----------------------------------------------------------


@dataclass
class PerturbationReport:
    times: np.ndarray
    distance: np.ndarray  # ||rho1 - rho2||_{L^2(Omega)} at each t_n
    mu_gap: np.ndarray  # int_{Q_t} |mu1 - mu2|^2 at each t_n
    A: float
    Lambda: float
    delta_norm: float


def fit_envelope(times: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """Fit ``d(t) <= A exp(Lambda t)``.

    ``Lambda`` is the least-squares slope of ``log d``; ``A`` is the smallest
    amplitude for which the envelope covers every sample.
    """
    mask = d > 0
    if not np.any(mask):
        return 0.0, 0.0
    t, y = times[mask], np.log(d[mask])
    if t.size == 1:
        lam = 0.0
    else:
        lam = float(np.polyfit(t, y, 1)[0])
    A = float(np.max(d[mask] * np.exp(-lam * t)))
    return A, lam


def perturbation_experiment(config: SystemConfig, delta_rho: Field | None = None,
                            delta_mu: Field | None = None, op: NonlocalOp | None = None,
                            base: SystemSolution | None = None) -> PerturbationReport:
    """Solve with the original and the perturbed data and fit a Gronwall envelope."""
    d = config.domain
    op = build_operator(config) if op is None else op
    s1 = outer_solve(config, op) if base is None else base
    rho0 = config.rho0 if delta_rho is None else Field(d, config.rho0.values + delta_rho.values)
    mu0 = config.mu0 if delta_mu is None else Field(d, config.mu0.values + delta_mu.values)
    s2 = outer_solve(replace(config, rho0=rho0, mu0=mu0), op)
    dist = l2_in_space(d, s1.rho.values - s2.rho.values)
    gap = l2_in_space(d, s1.mu.values - s2.mu.values) ** 2
    mu_gap = np.concatenate(([0.0], d.dt * np.cumsum(gap[:-1])))
    A, lam = fit_envelope(d.times, dist)
    dn = 0.0
    for f in (delta_rho, delta_mu):
        if f is not None:
            dn = math.hypot(dn, float(l2_in_space(d, f.values)))
    return PerturbationReport(d.times, dist, mu_gap, A, lam, dn)


# -- regularity surrogates ---------------------------------------------------------------


@dataclass
class RegularityReport:
    mu_sup: float
    dt_rho_L6: float
    xi_L6: float
    ratios: dict | None = None

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.mu_sup, self.dt_rho_L6, self.xi_L6))

    @property
    def stable(self) -> bool | None:
        if self.ratios is None:
            return None
        return all(0.5 <= r <= 2.0 for r in self.ratios.values())


def _surrogates(sol: SystemSolution) -> dict:
    return {
        "mu_sup": float(np.max(np.abs(sol.mu.values))),
        "dt_rho_L6": norm_Lp_Q(sol.dt_rho, 6),
        "xi_L6": norm_Lp_Q(sol.xi, 6),
    }


def regularity_probe(solution: SystemSolution, refined: SystemSolution | None = None) -> RegularityReport:
    """``sup |mu|``, ``||d_t rho||_{L^6(Q)}`` and ``||xi||_{L^6(Q)}``, with refinement ratios."""
    a = _surrogates(solution)
    ratios = None
    if refined is not None:
        b = _surrogates(refined)
        ratios = {}
        for key in a:
            if a[key] == 0.0 and b[key] == 0.0:
                ratios[key] = 1.0
            elif a[key] == 0.0:
                ratios[key] = math.inf
            else:
                ratios[key] = b[key] / a[key]
    return RegularityReport(a["mu_sup"], a["dt_rho_L6"], a["xi_L6"], ratios)


def regularity_study(config: SystemConfig) -> tuple[RegularityReport, SystemSolution, SystemSolution]:
    """Solve on the configured grid and on one dyadic refinement."""
    coarse = outer_solve(config)
    fine = outer_solve(config.refined())
    return regularity_probe(coarse, fine), coarse, fine
