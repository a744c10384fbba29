import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nlch import kernels
from nlch.errors import InvalidKernelError


def test_eval_examples():
    assert kernels.eval_kernel(kernels.newtonian(1.0), 2.0) == 0.5
    assert kernels.eval_kernel(kernels.zero(), 3.0) == 0.0
    assert kernels.eval_kernel(kernels.power_law(3.0, 0.5), 4.0) == pytest.approx(1.5)


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_eval_rejects_nonpositive_radius(r):
    with pytest.raises(ValueError):
        kernels.eval_kernel(kernels.newtonian(), r)


def test_newtonian_passes_both_gates():
    rep = kernels.validate_admissible(kernels.newtonian())
    assert (rep.alpha_k, rep.beta_k) == (1.0, 2.0)
    assert rep.alpha_pass and rep.beta_pass and rep.passed
    assert rep.summary().startswith("alpha_k=1 pass, beta_k=2 pass")


def test_power_law_alpha_two_fails_gate():
    rep = kernels.validate_admissible(kernels.power_law(1.0, 2.0))
    assert not rep.alpha_pass
    assert not rep.passed


def test_zero_kernel_passes_with_any_exponents():
    k = kernels.KernelSpec("zero", C1=0.0, alpha_k=7.0, beta_k=9.0)
    assert kernels.validate_admissible(k).passed


def test_validate_is_deterministic():
    k = kernels.gaussian(2.0, 0.3)
    assert kernels.validate_admissible(k) == kernels.validate_admissible(k)


def test_non_finite_kernel_rejected():
    k = kernels.KernelSpec("power_law", C1=1e300, alpha_k=1e3, C2=1.0, beta_k=1.0)
    with pytest.raises(InvalidKernelError):
        kernels.validate_admissible(k)


def test_unknown_kind_and_bad_table():
    with pytest.raises(InvalidKernelError):
        kernels.KernelSpec("yukawa")
    with pytest.raises(InvalidKernelError):
        kernels.custom_table([1.0], [1.0], 0.0, 0.0)
    with pytest.raises(InvalidKernelError):
        kernels.custom_table([2.0, 1.0], [1.0, 1.0], 0.0, 0.0)


@pytest.mark.parametrize("k", [kernels.newtonian(2.0), kernels.power_law(1.5, 0.7), kernels.gaussian(1.0, 0.2),
                               kernels.zero()])
def test_envelopes_on_dyadic_radii(k):
    h = 1 / 32
    r = h / 2 * 2.0 ** np.arange(0, 8)
    r = r[r <= math.sqrt(3)]
    assert np.all(np.abs(k.value(r)) <= k.C1 * r ** (-k.alpha_k) * (1 + 1e-12))
    if k.kind != "zero":
        assert np.all(np.abs(k.derivative(r)) <= k.C2 * r ** (-k.beta_k) * (1 + 1e-12))


def test_derivatives_match_finite_differences():
    r = np.array([0.05, 0.3, 1.2])
    tab = kernels.custom_table([0.01, 0.1, 1.0, 2.0], [50.0, 8.0, 1.0, 0.6], 1.0, 2.0)
    for k in (kernels.newtonian(), kernels.power_law(2.0, 0.4), kernels.gaussian(1.0, 0.5), tab):
        hstep = 1e-6
        fd = (k.value(r + hstep) - k.value(r - hstep)) / (2 * hstep)
        assert np.allclose(k.derivative(r), fd, rtol=1e-5)


def test_custom_table_interpolates_log_log():
    k = kernels.custom_table([0.1, 1.0], [10.0, 1.0], 1.0, 2.0)
    # exact 1/r between the nodes
    assert k.value(0.5) == pytest.approx(2.0)
    assert kernels.validate_admissible(k).passed


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("k", [kernels.power_law(1.3, 0.4), kernels.gaussian(0.8, 0.3)])
def test_ball_integral_against_quadrature(dim, k):
    R = 0.7
    surface = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[dim]
    ref, _ = integrate.quad(lambda s: surface * s ** (dim - 1) * float(k.value(s)), 0, R)
    assert k.ball_integral(dim, R) == pytest.approx(ref, rel=1e-8)


def test_ball_integral_table_matches_quadrature():
    k = kernels.custom_table([0.05, 0.2, 1.0], [4.0, 2.0, 0.5], 0.5, 1.5)
    ref, _ = integrate.quad(lambda s: 4 * math.pi * s * s * float(k.value(s)), 0, 0.6, points=[0.05, 0.2])
    assert k.ball_integral(3, 0.6) == pytest.approx(ref, rel=1e-8)


def test_newtonian_not_integrable_in_one_dimension():
    with pytest.raises(InvalidKernelError):
        kernels.newtonian().ball_integral(1, 0.1)
    k = kernels.newtonian_analog(1)
    assert k.alpha_k == pytest.approx(1 / 3)
    assert kernels.newtonian_analog(3) == kernels.newtonian()


@settings(max_examples=50, deadline=None)
@given(C=st.floats(0.01, 100), alpha=st.floats(-1.0, 2.9))
def test_power_law_envelope_property(C, alpha):
    k = kernels.power_law(C, alpha)
    rep = kernels.validate_admissible(k)
    assert rep.envelope_pass and rep.derivative_envelope_pass
    assert rep.alpha_pass == (alpha < 1.5)
    assert rep.continuity_pass
