"""Standard problem setups shared by the tests, the acceptance suite and examples.

All choices here (initial profiles, ``g``, constants) are test fixtures,
not model data.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .coupled import SystemConfig
from .grid import Domain, Field, Trajectory
from .nonlocal_op import build
from .potentials import make_potential
from .rho_solver import RhoProblem

KERNEL_CHOICES = ("newtonian", "gaussian")
G_CHOICES = ("constant", "parabolic")
POTENTIALS = ("regular", "logarithmic", "obstacle")


def kernel(name: str, dim: int = 1) -> kernels.KernelSpec:
    if name == "newtonian":
        return kernels.newtonian_analog(dim, 1.0)
    if name == "gaussian":
        return kernels.gaussian(0.5, 0.1)
    if name == "zero":
        return kernels.zero()
    raise ValueError(f"unknown fixture kernel {name!r}")


def cosine(domain: Domain, mean: float, amplitude: float, mode: int) -> Field:
    return Field.from_function(domain, lambda x: mean + amplitude * np.cos(mode * np.pi * x))


def energy_config() -> SystemConfig:
    """1-D, 64 cells, N = 200, log potential, ``g = (1 - r^2)/2``, Newtonian analog kernel."""
    d = Domain.uniform(1, 64, 1.0, 0.5, 200)
    return SystemConfig(d, kernel("newtonian"), "spatial_conv",
                        make_potential("logarithmic", g_kind="parabolic", g0=0.5),
                        cosine(d, 1.0, 0.5, 1), cosine(d, 0.0, 0.2, 2))


def matrix_config(potential: str, kernel_name: str, g_kind: str) -> SystemConfig:
    """One cell of the potential x kernel x ``g`` test matrix.

    Raises :class:`nlch.errors.CouplingError` for the regular potential with a
    nonconstant ``g`` (unbounded D(beta) forces ``g`` constant).
    """
    d = Domain.uniform(1, 32, 1.0, 0.2, 200)
    g0 = 0.25 if g_kind == "constant" else 0.5
    pot = make_potential(potential, g_kind=g_kind, g0=g0)
    amp = 0.9 if potential == "obstacle" else 0.5
    # mu0 touches zero at x = 1
    return SystemConfig(d, kernel(kernel_name), "spatial_conv", pot,
                        cosine(d, 0.5, 0.5, 1), cosine(d, 0.0, amp, 2))


def obstacle_problem(schedule=(1e-1, 1e-2, 1e-3, 1e-4)) -> RhoProblem:
    """Double obstacle with an outward drift, so the constraint is active."""
    d = Domain.uniform(1, 32, 1.0, 0.05, 500)
    pot = make_potential("obstacle", c=3.0, g_kind="parabolic", g0=0.5)
    op = build("spatial_conv", kernel("gaussian"), d)
    mu = Trajectory.constant_in_time(Field.constant(d, 1.0))
    return RhoProblem(mu, cosine(d, 0.0, 0.95, 1), op, pot.graph, pot.pi, pot.g, tuple(schedule),
                      picard_tol=1e-10, picard_max_iter=200, continuation_tol=0.0)


def contraction_problem(picard_tol: float = 1e-8) -> RhoProblem:
    """Log potential with a coupled ``g`` and a given smooth chemical potential."""
    d = Domain.uniform(1, 64, 1.0, 0.5, 200)
    pot = make_potential("logarithmic", g_kind="parabolic", g0=0.5)
    op = build("spatial_conv", kernel("newtonian"), d)
    x = d.centers()[0]
    t = d.times[:, None]
    mu = Trajectory(d, (1.0 + 0.5 * np.cos(np.pi * x))[None, :] * np.exp(-t))
    return RhoProblem(mu, cosine(d, 0.0, 0.5, 2), op, pot.graph, pot.pi, pot.g, (1e-2,),
                      picard_tol=picard_tol, picard_max_iter=60)


def decoupled_config() -> SystemConfig:
    d = Domain.uniform(1, 32, 1.0, 0.2, 100)
    return SystemConfig(d, kernel("newtonian"), "spatial_conv",
                        make_potential("logarithmic", g_kind="constant", g0=0.25),
                        cosine(d, 1.0, 0.5, 1), cosine(d, 0.0, 0.5, 2), outer_tol=1e-10)


def perturbation_config() -> SystemConfig:
    """Tight tolerances so that solution differences are resolved far below ``|delta|``."""
    d = Domain.uniform(1, 32, 1.0, 0.2, 100)
    return SystemConfig(d, kernel("newtonian"), "spatial_conv",
                        make_potential("logarithmic", g_kind="parabolic", g0=0.5),
                        cosine(d, 1.0, 0.5, 1), cosine(d, 0.0, 0.4, 2),
                        eps_schedule=(1e-2, 1e-3), picard_tol=1e-13, continuation_tol=0.0,
                        outer_tol=1e-12)


def perturbation_shape(domain: Domain, norm: float, mode: int = 1) -> Field:
    """``cos(mode pi x)`` scaled to the given ``L^2`` norm."""
    f = cosine(domain, 0.0, 1.0, mode)
    return Field(domain, f.values * (norm / np.sqrt(domain.cell_volume * np.sum(f.values ** 2))))


def regularity_config() -> SystemConfig:
    """Interior log-potential data: ``rho0 (beta0(rho0))^5`` is bounded."""
    d = Domain.uniform(1, 32, 1.0, 0.2, 100)
    return SystemConfig(d, kernel("newtonian"), "spatial_conv",
                        make_potential("logarithmic", g_kind="parabolic", g0=0.5),
                        cosine(d, 1.0, 0.5, 1), cosine(d, 0.0, 0.5, 2))


def suite() -> dict[str, SystemConfig]:
    """The coupled configurations used for the reproducibility check."""
    out = {"energy": energy_config(), "decoupled": decoupled_config(),
           "perturbation": perturbation_config(), "regularity": regularity_config()}
    for p in POTENTIALS:
        for k in KERNEL_CHOICES:
            for g in G_CHOICES:
                if p == "regular" and g == "parabolic":
                    continue
                out[f"matrix-{p}-{k}-{g}"] = matrix_config(p, k, g)
    return out
