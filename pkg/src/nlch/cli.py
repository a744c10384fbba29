"""Command line front end: ``nlch COMMAND CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 invariant violation.  Errors are reported on stderr as one JSON line with
a machine-readable ``category``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import coupled, io, kernels
from .config import RunConfig, load_config
from .errors import (ConfigError, ConstraintBlowUpError, CouplingError, DivergenceError,
                     DomainMismatchError, InvalidKernelError, InvariantViolation, LinearSolveError,
                     NLCHError, NonConvergenceError, OutsideDomainError, RootFindingError,
                     StepRejectedError)
from .grid import Field, l2_in_space

COMMANDS = ("solve", "perturb", "convergence-study", "validate-kernel", "probe-regularity")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4

LEDGER_COLUMNS = ["iterate", "residual", "omega", "norm_M", "min_mu", "clip", "energy_slack",
                  "within_radius", "eps", "picard_iterations", "rho_digest"]

log = logging.getLogger("nlch")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, InvalidKernelError, CouplingError, OutsideDomainError,
                        DomainMismatchError)):
        return EXIT_CONFIG
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT
    if isinstance(exc, (NonConvergenceError, DivergenceError, ConstraintBlowUpError, StepRejectedError,
                        LinearSolveError, RootFindingError)):
        return EXIT_NONCONVERGENCE
    return EXIT_INVARIANT


# -- commands ----------------------------------------------------------------------------


def _snapshots(run: RunConfig, sol: coupled.SystemSolution, out: Path) -> list[str]:
    d = run.system.domain
    written = []
    for t in run.output.snapshot_times:
        n = int(round(t / d.dt))
        for name, traj in (("mu", sol.mu), ("rho", sol.rho), ("xi", sol.xi)):
            f = traj.snapshot(n)
            stem = f"{name}_{n:06d}"
            if "bin" in run.output.formats:
                written.append(io.write_snapshot_bin(out / f"{stem}.bin", f, n * d.dt).name)
            if "csv" in run.output.formats:
                written.append(io.write_snapshot_csv(out / f"{stem}.csv", f, n * d.dt).name)
    return written


def _summary(sol: coupled.SystemSolution) -> dict:
    rep = sol.report
    items = {
        "outer_iterations": rep.iterations,
        "outer_residual": rep.residuals[-1] if rep.residuals else 0.0,
        "omega_final": rep.omega_final,
        "eps_final": sol.eps,
        "C_B": rep.C_B,
        "radius": rep.radius,
        "radius_kind": rep.radius_kind,
        "membership": all(m.passed for m in sol.membership),
    }
    items.update(rep.final)
    for key in ("energy_bound", "energy_worst", "energy_bound_ok", "dissipative", "max_substeps"):
        items[key] = rep.mu[key]
    items["constraint_identity"] = rep.rho["constraint_identity"]
    items["apriori_c"] = rep.rho["apriori_c"]
    items["rho_residual"] = rep.rho["residual"]
    for i, note in enumerate(rep.operator_notes):
        items[f"operator_note_{i}"] = note
    return items


def cmd_solve(run: RunConfig, out: Path) -> int:
    sol = coupled.outer_solve(run.system)
    io.write_ledger(out / "ledger.csv", sol.report.ledger, LEDGER_COLUMNS)
    _snapshots(run, sol, out)
    io.write_summary(out / "summary.txt", _summary(sol))
    print(f"converged in {sol.report.iterations} outer iterates, residual {sol.history[-1]:.3e}")
    return EXIT_OK


def _delta(run: RunConfig, norm: float) -> Field:
    d = run.system.domain
    mode = run.perturb.mode

    def shape(*xs):
        out = np.ones_like(xs[0])
        for x, L in zip(xs, d.extent):
            out = out * np.cos(mode * np.pi * x / L)
        return out

    f = Field.from_function(d, shape)
    return Field(d, f.values * (norm / float(l2_in_space(d, f.values))))


def cmd_perturb(run: RunConfig, out: Path) -> int:
    cfg = run.system
    op = coupled.build_operator(cfg)
    base = coupled.outer_solve(cfg, op)
    rows = []
    target = run.perturb.target
    for norm in run.perturb.norms:
        delta = _delta(run, norm)
        rep = coupled.perturbation_experiment(
            cfg, delta if target in ("rho0", "both") else None,
            delta if target in ("mu0", "both") else None, op=op, base=base)
        rows.append({"delta_norm": norm, "A": rep.A, "Lambda": rep.Lambda,
                     "max_distance": float(np.max(rep.distance)), "mu_gap_T": float(rep.mu_gap[-1])})
    for a, b in zip(rows, rows[1:]):
        b["A_ratio"] = a["A"] / b["A"] if b["A"] > 0 else math.inf
    io.write_table(out / "perturb.csv", rows,
                   ["delta_norm", "A", "Lambda", "A_ratio", "max_distance", "mu_gap_T"])
    io.write_summary(out / "summary.txt", {f"A_{i}": r["A"] for i, r in enumerate(rows)}
                     | {f"Lambda_{i}": r["Lambda"] for i, r in enumerate(rows)})
    for r in rows:
        print(f"|delta|={r['delta_norm']:.3e}  A={r['A']:.6e}  Lambda={r['Lambda']:.4f}")
    return EXIT_OK


def _restrict(values: np.ndarray, factor: int, dim: int) -> np.ndarray:
    """Average blocks of ``factor**dim`` fine cells onto the coarse grid."""
    v = values
    for ax in range(dim):
        shape = v.shape[:ax] + (v.shape[ax] // factor, factor) + v.shape[ax + 1:]
        v = v.reshape(shape).mean(axis=ax + 1)
    return v


def cmd_convergence_study(run: RunConfig, out: Path) -> int:
    configs = [run.system]
    for _ in range(run.study.levels - 1):
        configs.append(configs[-1].refined())
    with ThreadPoolExecutor(max_workers=run.study.workers) as pool:
        sols = list(pool.map(coupled.outer_solve, configs))
    rows = []
    dim = run.system.domain.dim
    for level, (cfg, sol) in enumerate(zip(configs, sols)):
        row = {"level": level, "cells": cfg.domain.cells[0], "N": cfg.domain.N,
               "outer_iterations": sol.report.iterations, **sol.report.final}
        if level > 0:
            prev = sols[level - 1]
            d0 = configs[level - 1].domain
            for name in ("mu", "rho"):
                fine = _restrict(getattr(sol, name).values[-1], 2, dim)
                row[f"{name}_T_diff"] = float(l2_in_space(d0, fine - getattr(prev, name).values[-1]))
        rows.append(row)
        io.write_ledger(out / f"ledger_level{level}.csv", sol.report.ledger, LEDGER_COLUMNS)
    for a, b in zip(rows[1:], rows[2:]):
        for name in ("mu", "rho"):
            ea, eb = a[f"{name}_T_diff"], b[f"{name}_T_diff"]
            b[f"{name}_order"] = math.log2(ea / eb) if ea > 0 and eb > 0 else math.nan
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    io.write_table(out / "study.csv", rows, cols)
    for r in rows:
        print(f"level {r['level']}: cells={r['cells']} N={r['N']} mu_sup={r['mu_sup']:.6f}")
    return EXIT_OK


def cmd_validate_kernel(run: RunConfig, out: Path) -> int:
    d = run.system.domain
    rep = kernels.validate_admissible(run.declared_kernel, diameter=d.diameter, r_min=0.5 * min(d.h))
    print(rep.summary())
    for note in run.notes:
        print(note)
    io.write_summary(out / "kernel.txt", {"kind": rep.kind, "alpha_k": rep.alpha_k, "beta_k": rep.beta_k,
                                          "alpha_pass": rep.alpha_pass, "beta_pass": rep.beta_pass,
                                          "continuity_pass": rep.continuity_pass,
                                          "envelope_pass": rep.envelope_pass,
                                          "derivative_envelope_pass": rep.derivative_envelope_pass,
                                          "passed": rep.passed})
    if not rep.passed:
        raise InvalidKernelError(f"kernel is not admissible: {rep.summary()}")
    return EXIT_OK


def cmd_probe_regularity(run: RunConfig, out: Path) -> int:
    rep, coarse, fine = coupled.regularity_study(run.system)
    rows = [{"quantity": k, "coarse": getattr(rep, k), "ratio": rep.ratios[k]} for k in rep.ratios]
    io.write_table(out / "regularity.csv", rows, ["quantity", "coarse", "ratio"])
    io.write_summary(out / "summary.txt", {"finite": rep.finite, "stable": rep.stable,
                                           **{f"{r['quantity']}_ratio": r["ratio"] for r in rows}})
    for r in rows:
        print(f"{r['quantity']}: {r['coarse']:.6e} (refinement ratio {r['ratio']:.4f})")
    if not (rep.finite and rep.stable):
        raise InvariantViolation("regularity surrogates are not stable under refinement")
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "perturb": cmd_perturb,
    "convergence-study": cmd_convergence_study,
    "validate-kernel": cmd_validate_kernel,
    "probe-regularity": cmd_probe_regularity,
}


def run(config: RunConfig, command: str, output: str | Path | None = None) -> int:
    """Execute ``command``; returns the exit status and reports errors on stderr."""
    if command not in HANDLERS:
        return _fail(ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}"))
    out = io.ensure_dir(output if output is not None else config.output.directory)
    try:
        return HANDLERS[command](config, out)
    except NLCHError as exc:
        return _fail(exc)


def _fail(exc: BaseException) -> int:
    payload = {"category": getattr(exc, "category", "error"), "message": str(exc)}
    history = getattr(exc, "history", None)
    if history:
        payload["history"] = [float(h) for h in history]
    print(json.dumps(payload), file=sys.stderr)
    return exit_code(exc)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="nlch", description="Nonlocal phase-separation solver.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config", help="path to the INI run configuration")
    ap.add_argument("-o", "--output", help="output directory (overrides [output] directory)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except NLCHError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(ConfigError(f"cannot read {args.config}: {exc.strerror}"))
    return run(config, args.command, args.output)


if __name__ == "__main__":
    sys.exit(main())
