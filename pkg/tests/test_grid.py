import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nlch.errors import DomainMismatchError
from nlch.grid import (Domain, Field, Trajectory, check_same_domain, grad_sq_norm, laplacian_neumann,
                       norm_L2_omega, norm_L2_V, norm_Linf_L2, norm_Lp_omega, norm_Lp_Q, norm_M)

# values away from the subnormal range, where squares and powers underflow
scales = st.one_of(st.just(0.0), st.floats(1e-3, 4.0), st.floats(-4.0, -1e-3))
entries = st.one_of(st.just(0.0), st.floats(1e-3, 10.0), st.floats(-10.0, -1e-3))


def test_domain_derived_quantities():
    d = Domain(2, (4, 8), (1.0, 2.0), 0.5, 10)
    assert d.h == (0.25, 0.25)
    assert d.cell_volume == pytest.approx(1 / 16)
    assert d.ncells == 32
    assert d.dt == pytest.approx(0.05)
    assert d.times[-1] == pytest.approx(0.5)
    assert d.measure == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs", [dict(dim=4), dict(cells=0), dict(extent=-1.0), dict(T=-1.0), dict(N=0)])
def test_domain_rejects_invalid(kwargs):
    args = dict(dim=1, cells=4, extent=1.0, T=1.0, N=4) | kwargs
    with pytest.raises(ValueError):
        Domain.uniform(**args)


def test_field_is_immutable_and_finite():
    d = Domain.uniform(1, 4)
    f = Field(d, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        f.values[0] = 5.0
    with pytest.raises(ValueError):
        Field(d, [1, 2, np.nan, 4])
    with pytest.raises(ValueError):
        Field(d, [1, 2, 3])


def test_trajectory_shape_and_snapshots():
    d = Domain.uniform(1, 3, N=5)
    u = Trajectory(d, np.arange(18.0))
    assert len(u) == 6
    assert np.array_equal(u.snapshot(2).values, [6.0, 7.0, 8.0])
    with pytest.raises(ValueError):
        Trajectory(d, np.zeros(15))


def test_domain_mismatch():
    a = Field.constant(Domain.uniform(1, 4), 1.0)
    b = Field.constant(Domain.uniform(1, 5), 1.0)
    with pytest.raises(DomainMismatchError):
        check_same_domain(a, b)


# -- Laplacian ---------------------------------------------------------------------


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_laplacian_of_constant_is_zero(dim):
    d = Domain.uniform(dim, 6)
    assert np.all(laplacian_neumann(Field.constant(d, 3.7)).values == 0.0)


def test_laplacian_cosine_second_order():
    errs = []
    for n in (16, 32, 64, 128):
        d = Domain.uniform(1, n)
        f = Field.from_function(d, lambda x: np.cos(np.pi * x))
        exact = -np.pi ** 2 * np.cos(np.pi * d.centers()[0])
        errs.append(np.max(np.abs(laplacian_neumann(f).values - exact)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9)


def test_laplacian_matches_hand_stencil():
    d = Domain.uniform(1, 4, extent=4.0)
    f = Field(d, [1.0, 4.0, 9.0, 16.0])
    # mirror ghosts: f_-1 = f_0, f_4 = f_3
    assert np.array_equal(laplacian_neumann(f).values, [3.0, 2.0, 2.0, -7.0])


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(1, 3), n=st.integers(1, 7), seed=st.integers(0, 2 ** 31))
def test_laplacian_zero_flux_conservation(dim, n, seed):
    d = Domain.uniform(dim, n)
    f = Field(d, np.random.default_rng(seed).normal(size=d.shape))
    s = abs(float(np.sum(laplacian_neumann(f).values)))
    assert s <= 1e-10 * max(norm_L2_omega(f), 1.0) * n ** 2


# -- gradient ---------------------------------------------------------------------


def test_grad_sq_norm_linear_function():
    d = Domain.uniform(1, 200)
    assert grad_sq_norm(Field.from_function(d, lambda x: x)) == pytest.approx(1.0, rel=1e-2)
    assert grad_sq_norm(Field.constant(d, 2.0)) == 0.0


@settings(max_examples=40, deadline=None)
@given(v=arrays(np.float64, 12, elements=entries), a=scales)
def test_grad_sq_norm_homogeneous_and_nonnegative(v, a):
    d = Domain.uniform(1, 12)
    f = Field(d, v)
    g0 = grad_sq_norm(f)
    assert g0 >= 0
    assert grad_sq_norm(Field(d, a * v)) == pytest.approx(a * a * g0, rel=1e-12, abs=1e-12)
    if np.ptp(v) > 0:
        assert g0 > 0


# -- norms ---------------------------------------------------------------------


def test_norms_of_zero_and_unit():
    d = Domain.uniform(1, 8, 1.0, 1.0, 10)
    z = Trajectory.zeros(d)
    one = Trajectory.constant_in_time(Field.constant(d, 1.0))
    for p in (1, 2, 10 / 3, 6, math.inf):
        assert norm_Lp_Q(z, p) == 0.0
        assert norm_Lp_Q(one, p) == pytest.approx(1.0, rel=1e-14)
    assert norm_L2_V(z) == 0.0 and norm_M(z) == 0.0


def test_norm_M_is_max_of_constituents():
    d = Domain.uniform(1, 16, 1.0, 1.0, 8)
    rng = np.random.default_rng(0)
    u = Trajectory(d, rng.normal(size=(9, 16)))
    v = u.values
    lp = (d.dt * d.cell_volume * np.sum(np.abs(v[:-1]) ** (10 / 3))) ** 0.3
    grad = np.sum(np.diff(v[:-1], axis=1) ** 2) / d.h[0] ** 2 * d.cell_volume
    l2v = math.sqrt(d.dt * (d.cell_volume * np.sum(v[:-1] ** 2) + grad))
    assert norm_Lp_Q(u, 10 / 3) == pytest.approx(lp, rel=1e-12)
    assert norm_L2_V(u) == pytest.approx(l2v, rel=1e-12)
    assert norm_M(u) == max(norm_Lp_Q(u, 10 / 3), norm_L2_V(u))


def test_unsupported_exponent():
    d = Domain.uniform(1, 4)
    with pytest.raises(ValueError):
        norm_Lp_Q(Trajectory.zeros(d), 3)
    with pytest.raises(ValueError):
        norm_Lp_omega(Field.constant(d, 1.0), 5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=scales)
def test_norm_homogeneity_and_nesting(seed, a):
    d = Domain.uniform(1, 6, 1.0, 1.0, 7)
    u = Trajectory(d, np.random.default_rng(seed).normal(size=(8, 6)))
    au = Trajectory(d, a * u.values)
    for p in (1, 2, 10 / 3, 6, math.inf):
        assert norm_Lp_Q(au, p) == pytest.approx(abs(a) * norm_Lp_Q(u, p), rel=1e-12, abs=1e-300)
        vals = [norm_Lp_Q(u, p, upto=n) for n in range(d.N + 1)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))
    assert norm_L2_V(au) == pytest.approx(abs(a) * norm_L2_V(u), rel=1e-12, abs=1e-300)
    vals = [norm_L2_V(u, upto=n) for n in range(d.N + 1)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
    vals = [norm_Linf_L2(u, upto=n) for n in range(d.N + 1)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
