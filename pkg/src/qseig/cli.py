"""Command-line front end: solve | tau-sweep | verify | reference.

Exit codes: 0 success/ToleranceMet, 1 config or I/O error, 2 MaxSteps,
3 Diverged, 4 verification failure, 5 reference solver no-convergence.
The history CSV is the plotting interface; no figures are produced here.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import warnings

import numpy as np

from . import analysis, runio, scheme, verify
from .discretize import (
    DomainSpec,
    GridSpec,
    HarmonicPotential,
    SoftCoulombPotential,
    ZeroPotential,
    assemble,
    estimate_lambda1,
)
from .errors import ConfigError, NoConvergence, NotPositiveDefinite, QseigError, TauRejected
from .greens import ConjugateGradient, DirectFactorization, prepare
from .runio import RunConfig

__all__ = ["main", "cmd_solve", "cmd_tau_sweep", "cmd_verify", "cmd_reference"]

_EXIT_BY_TERMINATION = {
    scheme.Termination.TOLERANCE_MET: 0,
    scheme.Termination.MAX_STEPS: 2,
    scheme.Termination.DIVERGED: 3,
}


def _build_potential(cfg: RunConfig):
    if cfg.potential == "zero":
        return ZeroPotential()
    if cfg.potential == "harmonic":
        return HarmonicPotential(cfg.harmonic_coeff)
    return SoftCoulombPotential(cfg.coulomb_charge, cfg.coulomb_softening)


def _build_problem(cfg: RunConfig):
    disc = assemble(DomainSpec(cfg.lower, cfg.upper), GridSpec(cfg.points),
                    _build_potential(cfg), c_lap=cfg.c_lap, sigma=cfg.sigma)
    if cfg.method == "direct":
        method = DirectFactorization()
    elif cfg.method == "cg":
        method = ConjugateGradient(tol=cfg.inner_tol, max_iter=cfg.max_iter,
                                   preconditioner=cfg.preconditioner)
    else:
        method = None
    gop = prepare(disc, method)
    estimate_lambda1(disc, gop, tol=1e-10)
    return disc, gop


def _check_output_paths(cfg: RunConfig, names) -> None:
    for name in names:
        path = getattr(cfg, name)
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise ConfigError(f"outputs.{name}: directory {parent} does not exist")


def _initial_state(disc, cfg: RunConfig):
    state = None
    if cfg.init == "from_state":
        state = runio.read_state(cfg.init_state_path)
    return scheme.init_state(disc, cfg.n_eig, cfg.init, seed=cfg.seed, state=state)


def _reference_eigenvalues(disc, gop, cfg: RunConfig):
    if cfg.reference_kind == "none":
        return None
    if cfg.reference_kind == "file":
        block = runio.read_state(cfg.reference_path)
        return analysis.extract_eigenvalues(disc, gop, block).eigenvalues
    report, _ = analysis.reference_subspace_iteration(disc, gop, cfg.n_eig,
                                                      tol=cfg.reference_tol)
    return report.eigenvalues


def _bounds_message(cfg: RunConfig, bounds: scheme.StepBounds) -> list[str]:
    lines = [
        f"step-size safeguards: non-expansion {bounds.tau_nonexpansion:.6g}, "
        f"quasi-Stiefel {bounds.tau_quasi_stiefel:.6g}, "
        f"contraction {bounds.tau_contraction:.6g}, "
        f"energy {bounds.tau_energy:.6g} (estimate, c_e={bounds.c_e:.6g})",
    ]
    exceeded = [name for name, val in (
        ("non-expansion", bounds.tau_nonexpansion),
        ("quasi-Stiefel", bounds.tau_quasi_stiefel),
        ("contraction", bounds.tau_contraction),
        ("energy", bounds.tau_energy),
    ) if cfg.tau >= val]
    if exceeded:
        lines.append(f"WARNING: tau={cfg.tau:g} exceeds bounds: {', '.join(exceeded)}")
    return lines


def _edge_message(cfg: RunConfig, lam1: float) -> list[str]:
    if cfg.tau >= lam1:
        return [f"WARNING: tau={cfg.tau:g} >= lambda_1={lam1:.6g}; the corrector's "
                "Gram mode stops contracting near convergence and the iteration "
                "may stall in a limit cycle"]
    return []


def _replay_err_u(disc, gop, cfg: RunConfig, U0, history) -> np.ndarray:
    """Recompute err_{U_n} against U_end by deterministic replay."""
    U_end = history.final_state
    errs = np.empty(len(history.records))
    U = U0.copy()
    for i in range(len(history.records)):
        errs[i] = analysis.eigenvector_error(disc, U, U_end)
        if i + 1 < len(history.records):
            U, _ = scheme.step(disc, gop, U, cfg.tau, step_index=i)
    return errs


def _solve_once(disc, gop, cfg: RunConfig, U0, out):
    bounds = scheme.compute_step_bounds(disc, gop, U0)
    for line in _bounds_message(cfg, bounds) + _edge_message(cfg, disc.lambda1_est):
        print(line, file=out)
    config = scheme.SchemeConfig(tau=cfg.tau, eps=cfg.eps, max_steps=cfg.max_steps,
                                 seed=cfg.seed, enforce_bounds=cfg.enforce_bounds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        history = scheme.run(disc, gop, config, U0)
    return history


def _write_report(path, disc, history, report, fits):
    lines = [
        f"terminated_by: {history.terminated_by.value}",
        f"steps: {history.steps_taken}",
        f"green_solves: {history.records[-1].green_solves}",
        f"energy: {report.energy!r}",
        f"energy_shifted: {analysis.energy(disc, history.final_state)!r}",
        f"final_grad_norm_l2: {history.records[-1].grad_norm_l2!r}",
        f"final_orth_error: {history.records[-1].orth_error!r}",
    ]
    for fit in fits:
        lines.append(
            f"rate[{fit.series_name}]: slope_per_step={fit.slope_per_step!r} "
            f"r_squared={fit.r_squared!r} window={fit.window}"
        )
    lines.append("i,eigenvalue,residual_norm" + (",err_i" if report.relative_errors is not None else ""))
    for i, lam in enumerate(report.eigenvalues):
        row = f"{i + 1},{lam:.17g},{report.residual_norms[i]:.17g}"
        if report.relative_errors is not None:
            row += f",{report.relative_errors[i]:.17g}"
        lines.append(row)
    runio.atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_solve(config_path: str, seed: int | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg = runio.load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        _check_output_paths(cfg, ("history_csv", "report"))
        disc, gop = _build_problem(cfg)
        U0 = _initial_state(disc, cfg)
        reference = _reference_eigenvalues(disc, gop, cfg)
    except (QseigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        history = _solve_once(disc, gop, cfg, U0, out)
    except TauRejected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = analysis.extract_eigenvalues(disc, gop, history.final_state,
                                          reference=reference)
    fits = []
    for series in ("grad_norm_a", "orth_error"):
        try:
            fits.append(analysis.fit_exponential_rate(history.series(series), name=series))
        except QseigError:
            pass
    err_u = _replay_err_u(disc, gop, cfg, U0, history) if cfg.err_u else None
    runio.write_history_csv(cfg.history_csv, history, err_u)
    _write_report(cfg.report, disc, history, report, fits)
    if cfg.emit_summary:
        print(f"terminated_by: {history.terminated_by.value} after "
              f"{history.steps_taken} steps", file=out)
        print("eigenvalues:", " ".join(f"{v:.12g}" for v in report.eigenvalues), file=out)
        if report.relative_errors is not None:
            print("err_i:", " ".join(f"{v:.3e}" for v in report.relative_errors), file=out)
    return _EXIT_BY_TERMINATION[history.terminated_by]


def cmd_tau_sweep(config_path: str, tau_list, seed: int | None = None,
                  out=None) -> int:
    out = out or sys.stdout
    if tau_list is None or len(tau_list) < 2:
        print("error: tau-sweep needs at least two tau values", file=sys.stderr)
        return 1
    try:
        cfg = runio.load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        _check_output_paths(cfg, ("sweep_csv",))
        disc, gop = _build_problem(cfg)
        U0 = _initial_state(disc, cfg)
        if cfg.reference_kind == "none":
            cfg.reference_kind = "oracle"
        reference = _reference_eigenvalues(disc, gop, cfg)
    except (QseigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    errors = []
    steps = []
    for tau in tau_list:
        sub = dataclasses.replace(cfg, tau=tau)
        try:
            history = _solve_once(disc, gop, sub, U0, out)
        except TauRejected as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        code = _EXIT_BY_TERMINATION[history.terminated_by]
        if code != 0:
            print(f"error: tau={tau:g} run ended {history.terminated_by.value}",
                  file=sys.stderr)
            return code
        rep = analysis.extract_eigenvalues(disc, gop, history.final_state,
                                           reference=reference)
        errors.append(rep.relative_errors)
        steps.append(history.steps_taken)

    errors = np.array(errors)  # (n_tau, n_eig)
    header = "index," + ",".join(f"tau={t:g}" for t in tau_list)
    rows = [header]
    for i in range(cfg.n_eig):
        rows.append(f"{i + 1}," + ",".join(f"{e:.17g}" for e in errors[:, i]))
    rows.append("steps," + ",".join(str(s) for s in steps))
    runio.atomic_write_text(cfg.sweep_csv, "\n".join(rows) + "\n")

    floor = cfg.error_floor
    all_ok = True
    for i in range(cfg.n_eig):
        floored = np.maximum(errors[:, i], floor)
        ratio = float(floored.max() / floored.min())
        ok = ratio <= 10.0
        all_ok &= ok
        print(f"index {i + 1}: max/min error ratio {ratio:.3g} "
              f"({'stable' if ok else 'tau-dependent'})", file=out)
    decreasing = all(b < a for a, b in zip(steps, steps[1:]))
    print(f"step counts along tau: {steps} "
          f"({'decreasing' if decreasing else 'NOT strictly decreasing'})", file=out)
    return 0 if all_ok else 4


def cmd_verify(config_path: str, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg = runio.load_config(config_path)
    except QseigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        disc, gop = _build_problem(cfg)
    except NotPositiveDefinite as exc:
        print(f"verification aborted: {exc}\n"
              "hint: raise problem.sigma until the shifted operator is positive "
              "definite (Coulomb-type potentials need sigma > |lambda_1|)",
              file=sys.stderr)
        return 4
    except (QseigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    results = verify.run_suite(disc, gop, cfg.n_eig, seed=cfg.seed)
    print(verify.format_table(results), file=out)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed", file=out)
    if n_fail:
        for r in results:
            if not r.passed:
                print(f"FAILED invariant: {r.name} measured {r.measured:.3e} "
                      f"limit {r.threshold:.1e}", file=sys.stderr)
    return 0 if n_fail == 0 else 4


def cmd_reference(config_path: str, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg = runio.load_config(config_path)
        _check_output_paths(cfg, ("reference_csv", "reference_state"))
        disc, gop = _build_problem(cfg)
    except (QseigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        report, block = analysis.reference_subspace_iteration(
            disc, gop, cfg.n_eig, tol=cfg.reference_tol)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    rows = ["i,eigenvalue,residual_norm"]
    for i, (lam, res) in enumerate(zip(report.eigenvalues, report.residual_norms)):
        rows.append(f"{i + 1},{lam:.17g},{res:.17g}")
    rows.append(f"energy,{report.energy:.17g},")
    runio.atomic_write_text(cfg.reference_csv, "\n".join(rows) + "\n")
    runio.write_state(cfg.reference_state, block)
    if cfg.emit_summary:
        print("reference eigenvalues:",
              " ".join(f"{v:.12g}" for v in report.eigenvalues), file=out)
    return 0


def _apply_thread_caps(serial: bool):
    cap = 1 if serial else None
    env = os.environ.get("QSEIG_THREADS")
    if env:
        try:
            cap = min(int(env), cap) if cap else int(env)
        except ValueError:
            print(f"warning: ignoring malformed QSEIG_THREADS={env!r}", file=sys.stderr)
    if cap is not None:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=cap)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qseig",
        description="Orthogonalization-free Schrodinger eigensolver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "tau-sweep", "verify", "reference"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, default=None, help="override scheme.seed")
        p.add_argument("--serial", action="store_true",
                       help="single-threaded deterministic mode")
        if name == "tau-sweep":
            p.add_argument("--tau", required=True,
                           help="comma-separated list of step sizes")
    args = parser.parse_args(argv)
    _apply_thread_caps(args.serial)

    if args.command == "solve":
        return cmd_solve(args.config, seed=args.seed)
    if args.command == "tau-sweep":
        try:
            taus = [float(t) for t in args.tau.split(",") if t.strip()]
        except ValueError:
            print(f"error: malformed --tau {args.tau!r}", file=sys.stderr)
            return 1
        return cmd_tau_sweep(args.config, taus, seed=args.seed)
    if args.command == "verify":
        return cmd_verify(args.config)
    return cmd_reference(args.config)


if __name__ == "__main__":
    sys.exit(main())
