"""Chemical-potential equation for a given order parameter.

Solves ``(1 + 2 g(rho)) d_t mu + g'(rho) d_t rho mu - Delta mu = 0`` with zero
normal flux, using the floored extension of ``g`` so that the time coefficient
never drops below ``1/3``.  Each step is implicit in ``mu`` with coefficients
frozen at ``t_n``:

    [a^n / dt + s^n] mu^{n+1} - Delta_h mu^{n+1} = a^n / dt * mu^n,
    a^n = 1 + 2 g(rho^n),  s^n = g'(rho^n) d_t rho^n.

When ``a^n / dt + s^n`` is not positive the step is split into ``2^j`` equal
sub-steps.  The system matrix is then an M-matrix, and the solution of a
nonnegative right-hand side is nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import DomainMismatchError, EnergyBoundViolation, LinearSolveError, StepRejectedError
from .grid import Domain, Field, Trajectory, _grad_dot, l2_in_space
from .nonlocal_op import neg_laplacian_matrix
from .potentials import CouplingG

SOLVERS = ("direct", "cg")


@dataclass(frozen=True, eq=False)
class MuProblem:
    rho: Trajectory
    dt_rho: Trajectory
    mu0: Field
    g: CouplingG
    solver: str = "direct"
    linear_tol: float = 1e-10
    max_halvings: int = 10
    energy_tol: float = 1e-6
    check_energy: bool = True

    def __post_init__(self):
        d = self.rho.domain
        if self.dt_rho.domain != d or self.mu0.domain != d:
            raise DomainMismatchError("rho, dt_rho and mu0 must share one domain")
        if np.min(self.mu0.values) < 0:
            raise ValueError(f"mu0 must be nonnegative, min is {np.min(self.mu0.values):.3e}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown linear solver {self.solver!r}; expected one of {SOLVERS}")

    @property
    def domain(self) -> Domain:
        return self.rho.domain

    def coefficients(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``a^n = 1 + 2 g(rho^n)`` and ``s^n = g'(rho^n) d_t rho^n`` as flat arrays."""
        r = self.rho.flat()[n]
        a = 1.0 + 2.0 * np.asarray(self.g.ext_b.value(r))
        s = np.asarray(self.g.ext_b.d1(r)) * self.dt_rho.flat()[n]
        return a, s


@dataclass
class MuSolution:
    mu: Trajectory
    energy: np.ndarray
    dissipation: np.ndarray
    min_mu: np.ndarray
    substeps: np.ndarray
    bound: float
    report: dict = field(default_factory=dict)


class _Stepper:
    """Holds ``-Delta_h`` and a one-entry factorization cache."""

    def __init__(self, problem: MuProblem):
        self.problem = problem
        self.A = neg_laplacian_matrix(problem.domain).tocsc()
        self._key = None
        self._lu = None

    def _solve(self, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        p = self.problem
        M = (self.A + sparse.diags(diag)).tocsc()
        if p.solver == "cg":
            # symmetric positive definite; Jacobi preconditioner
            pre = sparse.diags(1.0 / M.diagonal())
            x, info = spla.cg(M, rhs, rtol=p.linear_tol, atol=0.0, M=pre, maxiter=10 * rhs.size + 100)
            if info != 0:
                raise LinearSolveError(f"conjugate gradients stopped with info={info}")
            return x
        key = diag.tobytes()
        if key != self._key:
            # no pivoting: the LU factors of an M-matrix keep the sign pattern,
            # so substitution never subtracts and nonnegativity is exact
            self._lu = spla.splu(M, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
            self._key = key
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("direct solve produced non-finite values")
        return x

    def advance(self, mu: np.ndarray, n: int) -> tuple[np.ndarray, int]:
        p = self.problem
        dt = p.domain.dt
        a, s = p.coefficients(n)
        for j in range(p.max_halvings + 1):
            m = 2 ** j
            tau = dt / m
            reaction = a / tau + s
            if np.all(reaction > 0):
                break
        else:
            raise StepRejectedError(
                f"step {n}: reaction coefficient stays nonpositive after {p.max_halvings} halvings")
        for _ in range(m):
            mu = self._solve(reaction, a / tau * mu)
        return mu, m


def step(problem: MuProblem, mu_n: Field, n: int) -> Field:
    """Advance ``mu`` from ``t_n`` to ``t_{n+1}``."""
    if mu_n.domain != problem.domain:
        raise DomainMismatchError("mu_n lives on a different domain")
    out, _ = _Stepper(problem).advance(mu_n.values.ravel().copy(), n)
    return Field(problem.domain, out)


def energy_bound(g: CouplingG, mu0: Field) -> float:
    """``3 (1 + 2 sup g) ||mu0||^2``."""
    return 3.0 * (1.0 + 2.0 * g.sup_g) * float(l2_in_space(mu0.domain, mu0.values)) ** 2


def m0_radius(g: CouplingG, mu0: Field, C0: float) -> float:
    """``C0 (3 + 6 sup g)^{1/2} ||mu0||``."""
    if not C0 > 0:
        raise ValueError(f"C0 must be positive, got {C0}")
    return C0 * math.sqrt(3.0 + 6.0 * g.sup_g) * float(l2_in_space(mu0.domain, mu0.values))


def solve(problem: MuProblem) -> MuSolution:
    """March all steps, filling the energy, dissipation and positivity ledgers."""
    d = problem.domain
    stepper = _Stepper(problem)
    mu = np.empty((d.N + 1, d.ncells))
    mu[0] = problem.mu0.values.ravel()
    subs = np.zeros(d.N, dtype=int)
    for n in range(d.N):
        mu[n + 1], subs[n] = stepper.advance(mu[n], n)
    vals = mu.reshape((d.N + 1,) + d.shape)
    a = 1.0 + 2.0 * np.asarray(problem.g.ext_b.value(problem.rho.values))
    energy = d.cell_volume * np.sum(a * vals ** 2, axis=tuple(range(1, d.dim + 1)))
    grad = _grad_dot(d, vals, vals)
    dissipation = np.concatenate(([0.0], d.dt * np.cumsum(grad[1:])))
    l2sq = l2_in_space(d, vals) ** 2
    bound = energy_bound(problem.g, problem.mu0)
    worst = float(max(np.max(l2sq), np.max(dissipation)))
    slack = 1.0 + problem.energy_tol
    dissipative = bool(np.all(energy + dissipation <= energy[0] * slack + 1e-300))
    report = {
        "energy_bound": bound,
        "energy_worst": worst,
        "energy_bound_ok": bool(worst <= bound * slack),
        "dissipative": dissipative,
        "min_mu": float(np.min(mu)),
        "max_substeps": int(np.max(subs)) if subs.size else 1,
        "mu_Linf_V": float(np.sqrt(np.max(l2sq + grad))),
        "mu_H1_L2": float(np.sqrt(d.dt * np.sum(l2sq[:-1])
                                  + d.dt * np.sum(l2_in_space(d, np.diff(vals, axis=0) / d.dt) ** 2))),
    }
    sol = MuSolution(Trajectory(d, mu), energy, dissipation, np.min(mu, axis=1), subs, bound, report)
    if problem.check_energy and not report["energy_bound_ok"]:
        ledger = np.column_stack([np.arange(d.N + 1), l2sq, energy, dissipation])
        raise EnergyBoundViolation(
            f"max(||mu^n||^2, D^n) = {worst:.6e} exceeds 3(1 + 2 sup g)||mu0||^2 = {bound:.6e}", ledger)
    return sol
