import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlch.errors import DomainMismatchError, EnergyBoundViolation, StepRejectedError
from nlch.grid import Domain, Field, Trajectory, l2_in_space
from nlch.mu_solver import MuProblem, energy_bound, m0_radius, solve, step
from nlch.potentials import GBase, MonotoneGraph, build_extensions

OBST = MonotoneGraph("obstacle")
G_ZERO = build_extensions(GBase("constant", 0.0), OBST)
G_PARA = build_extensions(GBase("parabolic", 0.5), OBST)


def heat_problem(d, mu0, g=G_ZERO, rho=None, dt_rho=None, **kw):
    rho = rho if rho is not None else Trajectory.zeros(d)
    dt_rho = dt_rho if dt_rho is not None else Trajectory.zeros(d)
    return MuProblem(rho, dt_rho, mu0, g, **kw)


def cos_data(d):
    return Field.from_function(d, lambda x: 1.0 + np.cos(np.pi * x))


def heat_error(cells, N, T=0.1):
    d = Domain.uniform(1, cells, 1.0, T, N)
    sol = solve(heat_problem(d, cos_data(d)))
    exact = 1.0 + math.exp(-math.pi ** 2 * T) * np.cos(np.pi * d.centers()[0])
    return float(l2_in_space(d, sol.mu.values[-1] - exact))


# -- step and solve examples ----------------------------------------------------------


def test_constant_is_steady_state():
    d = Domain.uniform(2, 6, 1.0, 0.5, 10)
    sol = solve(heat_problem(d, Field.constant(d, 2.5)))
    assert np.allclose(sol.mu.values, 2.5, rtol=0, atol=1e-13)


def test_zero_data_gives_zero():
    d = Domain.uniform(1, 16, 1.0, 0.5, 20)
    sol = solve(heat_problem(d, Field.constant(d, 0.0), g=G_PARA,
                             rho=Trajectory(d, np.random.default_rng(0).uniform(-1, 1, (21, 16)))))
    assert np.all(sol.mu.values == 0.0)


def test_heat_temporal_order():
    errs = [heat_error(512, N) for N in (10, 20, 40, 80)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 0.9), orders


def test_heat_spatial_order():
    errs = [heat_error(c, c * c // 4) for c in (8, 16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9), orders


def test_step_matches_solve():
    d = Domain.uniform(1, 16, 1.0, 0.5, 5)
    p = heat_problem(d, cos_data(d), g=G_PARA, rho=Trajectory(d, np.full((6, 16), 0.3)))
    sol = solve(p)
    mu = p.mu0
    for n in range(d.N):
        mu = step(p, mu, n)
        assert np.array_equal(mu.values, sol.mu.values[n + 1])


def test_step_rejects_other_domain():
    d = Domain.uniform(1, 16, 1.0, 0.5, 5)
    with pytest.raises(DomainMismatchError):
        step(heat_problem(d, cos_data(d)), Field.constant(Domain.uniform(1, 8), 1.0), 0)


def _stiff_problem(d, halvings):
    # s = g'(0.5) * 400 = -200 while a / dt = 1.75 / 0.05 = 35, so full steps are rejected
    rho = Trajectory(d, np.full((d.N + 1, d.ncells), 0.5))
    dt_rho = Trajectory(d, np.full((d.N + 1, d.ncells), 400.0))
    return heat_problem(d, cos_data(d), g=G_PARA, rho=rho, dt_rho=dt_rho, max_halvings=halvings,
                        check_energy=False)


def test_step_rejection_and_substeps():
    d = Domain.uniform(1, 8, 1.0, 0.5, 10)
    with pytest.raises(StepRejectedError):
        solve(_stiff_problem(d, 0))
    sol = solve(_stiff_problem(d, 10))
    assert sol.report["max_substeps"] > 1
    assert sol.report["min_mu"] >= 0.0


def test_cg_agrees_with_direct():
    d = Domain.uniform(2, 8, 1.0, 0.2, 10)
    rng = np.random.default_rng(3)
    rho = Trajectory(d, rng.uniform(-1, 1, (11, 8, 8)))
    dt_rho = Trajectory(d, rng.normal(size=(11, 8, 8)))
    mu0 = Field(d, rng.uniform(0, 2, (8, 8)))
    a = solve(heat_problem(d, mu0, g=G_PARA, rho=rho, dt_rho=dt_rho, check_energy=False))
    b = solve(heat_problem(d, mu0, g=G_PARA, rho=rho, dt_rho=dt_rho, check_energy=False, solver="cg"))
    assert np.max(np.abs(a.mu.values - b.mu.values)) < 1e-8


def test_problem_validation():
    d = Domain.uniform(1, 4, 1.0, 0.5, 5)
    with pytest.raises(ValueError):
        heat_problem(d, Field(d, [1.0, -1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        heat_problem(d, Field.constant(d, 1.0), solver="gmres")


# -- energy ------------------------------------------------------------------------


def test_energy_bound_with_zero_g():
    d = Domain.uniform(1, 32, 1.0, 1.0, 50)
    sol = solve(heat_problem(d, cos_data(d)))
    l2sq = l2_in_space(d, sol.mu.values) ** 2
    mu0sq = float(l2_in_space(d, cos_data(d).values)) ** 2
    assert sol.bound == pytest.approx(3 * mu0sq)
    assert np.max(l2sq) <= 3 * mu0sq
    assert np.max(sol.dissipation) <= 3 * mu0sq
    assert sol.report["energy_bound_ok"]


def test_energy_dissipation_frozen_coefficients():
    d = Domain.uniform(1, 32, 1.0, 0.5, 50)
    rho = Trajectory.constant_in_time(Field.from_function(d, lambda x: np.sin(3 * x)))
    sol = solve(heat_problem(d, cos_data(d), g=G_PARA, rho=rho))
    total = sol.energy + sol.dissipation
    assert np.all(np.diff(total) <= 1e-8 * total[0])
    assert sol.report["dissipative"]


def test_energy_violation_is_reported_with_ledger():
    d = Domain.uniform(1, 8, 1.0, 0.5, 10)
    p = _stiff_problem(d, 10)
    # strong growth from the reaction term, outside the frozen-coefficient regime
    assert not solve(p).report["energy_bound_ok"]
    with pytest.raises(EnergyBoundViolation) as info:
        solve(MuProblem(p.rho, p.dt_rho, p.mu0, p.g, max_halvings=10))
    assert info.value.ledger.shape == (d.N + 1, 4)


def test_m0_radius_examples():
    d = Domain.uniform(1, 4)
    one = Field.constant(d, 1.0)
    assert m0_radius(G_ZERO, one, 1.0) == pytest.approx(math.sqrt(3))
    half = build_extensions(GBase("constant", 0.5), OBST)
    assert m0_radius(half, Field.constant(d, 2.0), 1.0) == pytest.approx(2 * math.sqrt(6))
    assert m0_radius(G_PARA, Field.constant(d, 0.0), 3.0) == 0.0
    with pytest.raises(ValueError):
        m0_radius(G_ZERO, one, 0.0)
    assert energy_bound(half, one) == pytest.approx(6.0)


# -- properties ------------------------------------------------------------------------


def random_inputs(seed, d):
    rng = np.random.default_rng(seed)
    shape = (d.N + 1,) + d.shape
    rho = Trajectory(d, rng.uniform(-1, 1, shape))
    dt_rho = Trajectory(d, rng.normal(scale=20.0, size=shape))
    mu0 = Field(d, rng.uniform(0, 3, d.shape) * (rng.uniform(size=d.shape) > 0.3))
    return rho, dt_rho, mu0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), dim=st.integers(1, 2))
def test_nonnegativity_property(seed, dim):
    d = Domain.uniform(dim, 6, 1.0, 0.2, 8)
    rho, dt_rho, mu0 = random_inputs(seed, d)
    sol = solve(MuProblem(rho, dt_rho, mu0, G_PARA, check_energy=False))
    assert sol.report["min_mu"] >= -1e-12
    assert np.all(1 + 2 * G_PARA.ext_b.value(rho.values) >= 1 / 3)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_linearity_in_initial_data(seed):
    d = Domain.uniform(1, 10, 1.0, 0.2, 8)
    rho, dt_rho, a = random_inputs(seed, d)
    b = Field(d, np.random.default_rng(seed + 1).uniform(0, 1, d.shape))
    sa, sb, sab = (solve(MuProblem(rho, dt_rho, f, G_PARA, check_energy=False)).mu.values
                   for f in (a, b, Field(d, a.values + b.values)))
    assert np.allclose(sa + sb, sab, rtol=1e-10, atol=1e-12)


def test_solve_is_bit_reproducible():
    d = Domain.uniform(2, 6, 1.0, 0.2, 8)
    rho, dt_rho, mu0 = random_inputs(5, d)
    a = solve(MuProblem(rho, dt_rho, mu0, G_PARA, check_energy=False))
    b = solve(MuProblem(rho, dt_rho, mu0, G_PARA, check_energy=False))
    assert np.array_equal(a.mu.values, b.mu.values)
