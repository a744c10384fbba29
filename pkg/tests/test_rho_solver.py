import math
from dataclasses import replace

import numpy as np
import pytest

from nlch import fixtures, kernels
from nlch.errors import (ConstraintBlowUpError, DomainMismatchError, OutsideDomainError,
                         PicardNonConvergenceError)
from nlch.grid import Domain, Field, Trajectory, norm_Linf_L2, norm_M
from nlch.nonlocal_op import build
from nlch.potentials import GBase, LipschitzPi, MonotoneGraph, build_extensions, CouplingG, make_potential
from nlch.rho_solver import (RhoProblem, equation_residual, forward_difference, local_lipschitz, picard_map,
                             solve, solve_fixed_eps)

LINEAR = MonotoneGraph("polynomial", degree=1)


def plain_problem(rho0_values, graph=LINEAR, d=None, eps=(1e-9,), mu=None, **kw):
    d = d or Domain.uniform(1, 8, 1.0, 1.0, 50)
    op = build("spatial_conv", kernels.zero(), d)
    g = build_extensions(GBase("constant", 0.0), graph)
    mu = mu if mu is not None else Trajectory.zeros(d)
    return RhoProblem(mu, Field(d, rho0_values), op, graph, LipschitzPi(0.0), g, eps, **kw)


# -- picard_map ---------------------------------------------------------------------


def test_picard_map_zero_problem():
    d = Domain.uniform(1, 8, 1.0, 1.0, 10)
    p = plain_problem(np.linspace(-1, 1, 8), d=d)
    u = picard_map(p, 1e-9, Trajectory.zeros(d))
    assert np.all(u.values == p.rho0.values[None])


def test_picard_map_initial_value_and_rectangle_sum():
    d = Domain.uniform(1, 4, 1.0, 1.0, 10)
    rho0 = np.array([0.1, -0.2, 0.3, 0.4])
    p = plain_problem(rho0, d=d)
    eps = 0.5
    v = Trajectory.constant_in_time(p.rho0)
    u = picard_map(p, eps, v).values
    assert np.array_equal(u[0], rho0)
    rate = 1.0 / (1.0 + eps)  # beta_eps(r) = r / (1 + eps) for beta = identity
    expect = rho0[None] - d.times[:, None] * rate * rho0[None]
    assert np.allclose(u, expect, rtol=0, atol=1e-15)


def test_picard_map_rejects_other_domain():
    p = plain_problem(np.zeros(8))
    with pytest.raises(DomainMismatchError):
        picard_map(p, 0.1, Trajectory.zeros(Domain.uniform(1, 9, 1.0, 1.0, 50)))


# -- solve_fixed_eps ----------------------------------------------------------------


def test_fully_zero_problem_one_iteration():
    p = plain_problem(np.zeros(8))
    fx = solve_fixed_eps(p, 1e-9)
    assert fx.iterations == 1
    assert np.all(fx.rho == 0.0)


def test_ode_reduction_exponential_decay_first_order():
    errs = []
    for N in (20, 40, 80, 160):
        d = Domain.uniform(1, 4, 1.0, 1.0, N)
        rho0 = np.array([0.5, -0.25, 0.1, 1.0])
        p = plain_problem(rho0, d=d, picard_tol=1e-13, picard_max_iter=400)
        fx = solve_fixed_eps(p, 1e-9, window=10)
        exact = rho0[None] * np.exp(-d.times[:, None])
        errs.append(float(np.max(np.abs(fx.rho - exact))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 0.9), orders


def test_non_convergence_carries_history():
    p = fixtures.contraction_problem()
    p = replace(p, picard_max_iter=2)
    with pytest.raises(PicardNonConvergenceError) as info:
        solve_fixed_eps(p, 1e-2)
    assert len(info.value.history) == 2
    assert info.value.category == "picard-non-convergence"


def test_contraction_ratios_decrease():
    p = fixtures.contraction_problem()
    fx = solve_fixed_eps(p, 1e-2)
    r = fx.ratios
    assert fx.iterations <= 30
    assert all(a > b for a, b in zip(r[2:], r[3:]))


def test_windowed_matches_full_fixed_point():
    p = fixtures.contraction_problem(picard_tol=1e-12)
    full = solve_fixed_eps(p, 1e-2).rho
    initial = np.broadcast_to(p.rho0.values.ravel(), full.shape).copy()
    for W in (1, 7, 50):
        win = solve_fixed_eps(p, 1e-2, window=W, initial=initial).rho
        assert np.max(np.abs(win - full)) < 1e-10


def test_fixed_point_residual_per_step():
    p = fixtures.contraction_problem()
    fx = solve_fixed_eps(p, 1e-2)
    d = p.domain
    assert equation_residual(p, 1e-2, Trajectory(d, fx.rho)) <= p.picard_tol / d.dt
    # the fixed point is invariant under one more application of S
    again = picard_map(p, 1e-2, Trajectory(d, fx.rho)).values
    assert math.sqrt(d.dt * d.cell_volume * np.sum((again - fx.rho) ** 2)) <= p.picard_tol


def test_local_lipschitz_components():
    p = fixtures.contraction_problem()
    v = np.zeros((p.domain.N + 1, p.domain.ncells))
    L = local_lipschitz(p, 1e-2, v)
    # beta_eps'(0) = 2 / (1 + 2 eps) for the log graph
    expect = 2 / 1.02 + p.pi.lipschitz + p.op.C_B + np.max(p.mu.values) * p.g.lip_dg
    assert L == pytest.approx(expect, rel=1e-12)


# -- solve ----------------------------------------------------------------------------


def test_obstacle_constraint_identity_and_monotone_decrease():
    sol = solve(fixtures.obstacle_problem())
    levels = sol.report["levels"]
    assert sol.report["constraint_identity"]
    dist = [r["constraint_distance"] for r in levels]
    assert len(dist) == 4
    assert all(b <= a + 1e-10 for a, b in zip(dist, dist[1:]))
    assert dist[-1] <= 1e-2
    for r in levels:
        assert r["constraint_distance"] <= r["eps"] * r["sup_xi"] * (1 + 1e-12)


def test_interior_data_xi_matches_minimal_section():
    d = Domain.uniform(1, 16, 1.0, 0.05, 50)
    graph = MonotoneGraph("logarithmic")
    rho0 = fixtures.cosine(d, 0.0, 0.6, 1).values
    p = plain_problem(rho0, graph=graph, d=d, eps=(1e-8,), picard_tol=1e-8)
    sol = solve(p)
    assert np.all(graph.in_domain(sol.rho.values))
    beta0 = graph.minimal_section(sol.rho.values)
    assert np.max(np.abs(sol.xi.values - beta0)) <= 10 * p.picard_tol


def test_solve_is_deterministic():
    a = solve(fixtures.contraction_problem())
    b = solve(fixtures.contraction_problem())
    assert np.array_equal(a.rho.values, b.rho.values)
    assert np.array_equal(a.xi.values, b.xi.values)


def test_solve_report_and_derivative():
    p = fixtures.contraction_problem()
    sol = solve(p)
    rep = sol.report
    assert rep["eps_final"] == sol.eps == p.eps_schedule[-1]
    assert rep["constraint_identity"]
    assert rep["apriori_c"] > 0 and math.isfinite(rep["apriori_c"])
    d = p.domain
    assert np.array_equal(sol.dt_rho.values, forward_difference(d, sol.rho.values))
    assert np.array_equal(sol.dt_rho.values[-1], sol.dt_rho.values[-2])
    assert np.all(np.isfinite(sol.xi.values))


def test_apriori_constant_stable_under_refinement():
    cs = []
    for n, N in ((32, 100), (64, 200)):
        d = Domain.uniform(1, n, 1.0, 0.5, N)
        pot = make_potential("logarithmic", g_kind="parabolic", g0=0.5)
        op = build("spatial_conv", fixtures.kernel("newtonian"), d)
        mu = Trajectory.constant_in_time(fixtures.cosine(d, 1.0, 0.5, 1))
        p = RhoProblem(mu, fixtures.cosine(d, 0.0, 0.5, 2), op, pot.graph, pot.pi, pot.g, (1e-2,))
        sol = solve(p)
        cs.append(norm_Linf_L2(sol.rho) / (1 + norm_M(mu)))
    assert 0.5 <= cs[1] / cs[0] <= 2.0


def test_gronwall_envelope_for_initial_perturbation():
    p = fixtures.contraction_problem(picard_tol=1e-12)
    d = p.domain
    delta = fixtures.perturbation_shape(d, 1e-3, 3)
    q = replace(p, rho0=Field(d, p.rho0.values + delta.values))
    a, b = solve(p).rho.values, solve(q).rho.values
    eps = p.eps_schedule[-1]
    Lam = p.pi.lipschitz + p.op.C_B + np.max(p.mu.values) * p.g.lip_dg + 1 / eps
    dist = np.sqrt(d.cell_volume * np.sum((a - b) ** 2, axis=1))
    assert np.all(dist <= np.exp(Lam * d.times) * 1e-3 * (1 + 1e-6))


def test_continuation_stops_early():
    p = replace(fixtures.contraction_problem(), eps_schedule=(1e-1, 1e-2, 1e-3), continuation_tol=1.0)
    sol = solve(p)
    assert sol.eps == 1e-2 and len(sol.report["levels"]) == 2


class _Outward:
    """Coupling slope pointing away from zero, so the forcing pushes past the obstacle."""

    def value(self, r):
        return np.abs(np.asarray(r, dtype=float))

    def d1(self, r):
        return np.sign(np.asarray(r, dtype=float))


def test_constraint_blow_up_detected():
    d = Domain.uniform(1, 16, 1.0, 0.05, 200)
    graph = MonotoneGraph("obstacle")
    g = CouplingG(GBase("parabolic", 0.5), (-1.0, 1.0), 1.0, _Outward(), _Outward())
    op = build("spatial_conv", kernels.zero(), d)
    mu = Trajectory.constant_in_time(Field.constant(d, 1e6))
    p = RhoProblem(mu, fixtures.cosine(d, 0.0, 0.95, 1), op, graph, LipschitzPi(0.0), g, (1e-1, 1e-2, 1e-3),
                   continuation_tol=0.0)
    with pytest.raises(ConstraintBlowUpError):
        solve(p)


def test_problem_validation():
    d = Domain.uniform(1, 8, 1.0, 1.0, 10)
    with pytest.raises(ValueError):
        plain_problem(np.zeros(8), d=d, mu=Trajectory(d, -np.ones((11, 8))))
    with pytest.raises(ValueError):
        plain_problem(np.zeros(8), d=d, eps=(1e-2, 1e-1))
    with pytest.raises(OutsideDomainError):
        plain_problem(np.full(8, 1.5), graph=MonotoneGraph("obstacle"), d=d)
    with pytest.raises(OutsideDomainError):
        plain_problem(np.full(8, -1.2), graph=MonotoneGraph("logarithmic"), d=d)
    # the closure of D(beta) is admissible
    plain_problem(np.full(8, 1.0), graph=MonotoneGraph("logarithmic"), d=d)
