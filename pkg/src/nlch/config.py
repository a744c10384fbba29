"""Run configuration files.

A run is described by an INI file with the sections ``domain``, ``kernel``,
``potential``, ``g``, ``initial``, ``solver``, ``output``, ``perturb`` and
``study``.  Every section and key is optional; missing values take the
defaults in :data:`DEFAULTS`.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import kernels
from .coupled import SystemConfig
from .errors import ConfigError, CouplingError, InvalidKernelError, OutsideDomainError
from .grid import Domain, Field
from .nonlocal_op import FORMS
from .potentials import make_potential

DEFAULTS: dict[str, dict[str, str]] = {
    "domain": {"dim": "1", "cells": "64", "extent": "1.0", "T": "0.5", "N": "200"},
    "kernel": {"kind": "newtonian", "form": "spatial_conv", "C1": "1.0", "alpha_k": "", "C2": "",
               "beta_k": "", "amplitude": "", "width": "0.1", "table_r": "", "table_k": ""},
    "potential": {"kind": "logarithmic", "c": ""},
    "g": {"kind": "parabolic", "g0": "0.5"},
    "initial": {"mu0": "cosine", "mu0_mean": "1.0", "mu0_amplitude": "0.5", "mu0_mode": "1",
                "rho0": "cosine", "rho0_mean": "0.0", "rho0_amplitude": "0.2", "rho0_mode": "2",
                "seed": "0"},
    "solver": {"eps_schedule": "1e-1, 3e-2, 1e-2, 3e-3, 1e-3", "picard_tol": "1e-8",
               "picard_max_iter": "100", "continuation_tol": "1e-6", "outer_tol": "1e-8",
               "outer_max_iter": "50", "omega": "1.0", "C0": "", "linear_solver": "direct",
               "linear_tol": "1e-10", "max_halvings": "10", "energy_tol": "1e-6", "window": "auto"},
    "output": {"directory": "nlch-out", "snapshot_times": "", "formats": "bin"},
    "perturb": {"target": "rho0", "norms": "1e-2, 5e-3, 2.5e-3", "mode": "1"},
    "study": {"levels": "3", "workers": "1"},
}

GENERATORS = ("constant", "cosine", "random")


@dataclass(frozen=True)
class OutputSettings:
    directory: str
    snapshot_times: tuple[float, ...]
    formats: tuple[str, ...]


@dataclass(frozen=True)
class PerturbSettings:
    target: str
    norms: tuple[float, ...]
    mode: int


@dataclass(frozen=True)
class StudySettings:
    levels: int
    workers: int


@dataclass(frozen=True, eq=False)
class RunConfig:
    values: dict[str, dict[str, str]]
    system: SystemConfig
    declared_kernel: kernels.KernelSpec
    output: OutputSettings
    perturb: PerturbSettings
    study: StudySettings
    notes: tuple[str, ...] = field(default=())


class _Lines:
    """Line numbers of sections and keys, found by scanning the raw text."""

    def __init__(self, text: str):
        self.where: dict[tuple[str, str | None], int] = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line[0] in "#;":
                continue
            m = re.match(r"\[([^\]]+)\]", line)
            if m:
                section = m.group(1).strip()
                self.where.setdefault((section, None), i)
                continue
            m = re.match(r"([^=:]+)[=:]", line)
            if m and section is not None:
                self.where.setdefault((section, m.group(1).strip().lower()), i)

    def __call__(self, section: str, key: str | None = None) -> int | None:
        if key is not None:
            key = key.lower()
        return self.where.get((section, key))


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str.lower
    return cp


class _Reader:
    def __init__(self, values: dict[str, dict[str, str]], lines: _Lines, given: set[tuple[str, str]]):
        self.values = values
        self.lines = lines
        self.given = given

    def fail(self, section: str, key: str | None, message: str):
        line = self.lines(section, key) if key and (section, key.lower()) in self.given else None
        if line is None:
            line = self.lines(section)
        raise ConfigError(f"[{section}] {key + ': ' if key else ''}{message}", line)

    def raw(self, section: str, key: str) -> str:
        return self.values[section][key.lower()]

    def _convert(self, section: str, key: str, fn: Callable[[str], Any], what: str):
        text = self.raw(section, key)
        try:
            return fn(text)
        except (ValueError, TypeError):
            self.fail(section, key, f"expected {what}, got {text!r}")

    def float(self, section, key, *, positive=False, nonnegative=False, optional=False):
        if optional and self.raw(section, key) == "":
            return None
        x = self._convert(section, key, float, "a number")
        if not math.isfinite(x):
            self.fail(section, key, "must be finite")
        if positive and not x > 0:
            self.fail(section, key, f"must be positive, got {x:g}")
        if nonnegative and x < 0:
            self.fail(section, key, f"must be nonnegative, got {x:g}")
        return x

    def int(self, section, key, *, minimum=None):
        x = self._convert(section, key, int, "an integer")
        if minimum is not None and x < minimum:
            self.fail(section, key, f"must be at least {minimum}, got {x}")
        return x

    def floats(self, section, key):
        text = self.raw(section, key)
        if text == "":
            return ()
        return tuple(self._convert(section, key, lambda s: [float(p) for p in s.split(",")],
                                   "a comma-separated list of numbers"))

    def choice(self, section, key, options):
        x = self.raw(section, key)
        if x not in options:
            self.fail(section, key, f"must be one of {', '.join(options)}; got {x!r}")
        return x


def _generator(r: _Reader, domain: Domain, name: str, rng: np.random.Generator) -> Field:
    kind = r.choice("initial", name, GENERATORS)
    mean = r.float("initial", f"{name}_mean")
    amp = r.float("initial", f"{name}_amplitude", nonnegative=True)
    mode = r.int("initial", f"{name}_mode", minimum=0)
    if kind == "constant":
        return Field.constant(domain, mean)
    if kind == "cosine":
        def f(*xs):
            out = np.ones_like(xs[0])
            for x, L in zip(xs, domain.extent):
                out = out * np.cos(mode * np.pi * x / L)
            return mean + amp * out
        return Field.from_function(domain, f)
    return Field(domain, mean + amp * rng.uniform(-1.0, 1.0, domain.shape))


def _kernel(r: _Reader, dim: int) -> tuple[kernels.KernelSpec, kernels.KernelSpec, list[str]]:
    """Declared kernel and the kernel the solver uses on a ``dim``-D box."""
    kind = r.choice("kernel", "kind", kernels.KINDS)
    notes = []
    try:
        if kind == "zero":
            k = kernels.zero()
        elif kind == "newtonian":
            k = kernels.newtonian(r.float("kernel", "C1", positive=True))
        elif kind == "power_law":
            if r.raw("kernel", "alpha_k") == "":
                r.fail("kernel", "alpha_k", "power_law needs alpha_k")
            k = kernels.power_law(r.float("kernel", "C1", positive=True), r.float("kernel", "alpha_k"))
        elif kind == "gaussian":
            amp = r.float("kernel", "amplitude", positive=True, optional=True)
            if amp is None:
                amp = r.float("kernel", "C1", positive=True)
            k = kernels.gaussian(amp, r.float("kernel", "width", positive=True))
        else:
            tr, tk = r.floats("kernel", "table_r"), r.floats("kernel", "table_k")
            a = r.float("kernel", "alpha_k", optional=True)
            b = r.float("kernel", "beta_k", optional=True)
            if a is None or b is None:
                r.fail("kernel", "alpha_k", "custom_table needs alpha_k and beta_k")
            k = kernels.custom_table(tr, tk, a, b)
    except InvalidKernelError as exc:
        r.fail("kernel", "kind", str(exc))
    # explicit envelope data override the kind's defaults
    skip = {"custom_table": ("alpha_k", "beta_k", "C2"), "power_law": ("alpha_k",)}.get(kind, ())
    over = {}
    for key in ("alpha_k", "beta_k", "C2"):
        v = None if key in skip else r.float("kernel", key, optional=True)
        if v is not None:
            over[key] = v
    if over:
        k = replace(k, **over)
    solver_k = k
    if kind == "newtonian" and dim < 3 and "alpha_k" not in over:
        solver_k = kernels.newtonian_analog(dim, k.C1)
        why = "1/r is not integrable in 1-D" if dim == 1 else "keeping the 3-D ratio alpha_k/dim = 1/3"
        notes.append(f"{why}; the solver uses r^(-{dim}/3)")
    return k, solver_k, notes


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration; errors carry the offending line."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc.message if hasattr(exc, 'message') else exc}",
                          getattr(exc, "lineno", None)) from None
    lines = _Lines(text)
    values = {s: {k.lower(): v for k, v in kv.items()} for s, kv in DEFAULTS.items()}
    given: set[tuple[str, str]] = set()
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(DEFAULTS)}",
                              lines(section))
        for key, val in cp.items(section):
            if key not in values[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}", lines(section, key))
            values[section][key] = val.strip()
            given.add((section, key))
    r = _Reader(values, lines, given)

    dim = r.int("domain", "dim", minimum=1)
    if dim > 3:
        r.fail("domain", "dim", f"must be 1, 2 or 3, got {dim}")
    domain = Domain.uniform(dim, r.int("domain", "cells", minimum=1),
                            r.float("domain", "extent", positive=True),
                            r.float("domain", "T", positive=True), r.int("domain", "N", minimum=1))

    declared, kernel, notes = _kernel(r, dim)
    form = r.choice("kernel", "form", FORMS)
    if form != "time_conv":
        rep = kernels.validate_admissible(declared, diameter=domain.diameter, r_min=0.5 * min(domain.h))
        if not rep.alpha_pass:
            r.fail("kernel", "alpha_k" if ("kernel", "alpha_k") in given else "kind",
                   f"alpha_k={declared.alpha_k:g} violates the gate alpha_k < 3/2")
        if not rep.beta_pass:
            r.fail("kernel", "beta_k" if ("kernel", "beta_k") in given else "kind",
                   f"beta_k={declared.beta_k:g} violates the gate beta_k < 5/2")
        if not rep.passed:
            r.fail("kernel", "kind", f"kernel envelope check failed: {rep.summary()}")

    pkind = r.choice("potential", "kind", ("regular", "logarithmic", "obstacle"))
    c = r.float("potential", "c", positive=True, optional=True)
    gkind = r.choice("g", "kind", ("constant", "parabolic"))
    g0 = r.float("g", "g0", nonnegative=True)
    try:
        potential = make_potential(pkind, c, gkind, g0)
    except CouplingError as exc:
        r.fail("g", "kind", str(exc))
    except ValueError as exc:
        r.fail("potential", "c", str(exc))

    rng = np.random.default_rng(r.int("initial", "seed", minimum=0))
    try:
        mu0 = _generator(r, domain, "mu0", rng)
        rho0 = _generator(r, domain, "rho0", rng)
    except ValueError as exc:
        r.fail("initial", None, str(exc))
    if np.min(mu0.values) < 0:
        r.fail("initial", "mu0_amplitude", "mu0 must be nonnegative (mean >= amplitude)")

    schedule = r.floats("solver", "eps_schedule")
    if not schedule or any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        r.fail("solver", "eps_schedule", "must be positive and strictly decreasing")
    window = r.raw("solver", "window")
    if window not in ("auto", "full"):
        window = r.int("solver", "window", minimum=1)
    omega = r.float("solver", "omega", positive=True)
    if omega > 1:
        r.fail("solver", "omega", "must lie in (0, 1]")
    try:
        system = SystemConfig(
            domain=domain, kernel=kernel, form=form, potential=potential, mu0=mu0, rho0=rho0,
            eps_schedule=schedule,
            picard_tol=r.float("solver", "picard_tol", positive=True),
            picard_max_iter=r.int("solver", "picard_max_iter", minimum=1),
            continuation_tol=r.float("solver", "continuation_tol", nonnegative=True),
            outer_tol=r.float("solver", "outer_tol", positive=True),
            outer_max_iter=r.int("solver", "outer_max_iter", minimum=0),
            omega=omega,
            C0=r.float("solver", "C0", positive=True, optional=True),
            linear_solver=r.choice("solver", "linear_solver", ("direct", "cg")),
            linear_tol=r.float("solver", "linear_tol", positive=True),
            max_halvings=r.int("solver", "max_halvings", minimum=0),
            energy_tol=r.float("solver", "energy_tol", nonnegative=True),
            window=window,
        )
    except OutsideDomainError as exc:
        r.fail("initial", "rho0_amplitude", str(exc))

    times = r.floats("output", "snapshot_times")
    if any(t < 0 or t > domain.T for t in times):
        r.fail("output", "snapshot_times", f"times must lie in [0, {domain.T:g}]")
    formats = tuple(f.strip() for f in r.raw("output", "formats").split(",") if f.strip())
    if not formats or any(f not in ("bin", "csv") for f in formats):
        r.fail("output", "formats", "must list bin and/or csv")
    output = OutputSettings(r.raw("output", "directory") or "nlch-out", times or (0.0, domain.T), formats)

    norms = r.floats("perturb", "norms")
    if not norms or any(n <= 0 for n in norms):
        r.fail("perturb", "norms", "must be positive numbers")
    perturb = PerturbSettings(r.choice("perturb", "target", ("rho0", "mu0", "both")), norms,
                              r.int("perturb", "mode", minimum=0))
    study = StudySettings(r.int("study", "levels", minimum=2), r.int("study", "workers", minimum=1))
    return RunConfig(values, system, declared, output, perturb, study, tuple(notes))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(values: dict[str, dict[str, str]]) -> str:
    """INI text for a (possibly partial) section/key mapping."""
    out = []
    for section, kv in values.items():
        out.append(f"[{section}]")
        out.extend(f"{k} = {v}" for k, v in kv.items())
        out.append("")
    return "\n".join(out)
