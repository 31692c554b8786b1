"""Command-line front end: ``vmfp {simulate,greens-test,picard,verify}``.

Human-readable output goes to standard error; machine-readable output goes
to files in ``--out``.

Exit codes
----------
0  success
1  bad config, failed check, or unexpected error
2  CFL violation during ``simulate``
3  I/O failure during ``simulate``
4  ``picard`` did not converge
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence


from . import kinetic
from .diagnostics import baseline, emit_csv, make_record
from .errors import (
    CflViolation, HypothesisViolation, IoFailure, NoConvergence, ParseError, VMFPError,
)
from .kinetic import ForceOptions, SimState, vmfp_step
from .picard import picard_iterate
from .scenario import Config, load_config, make_initial, parse_config, save_snapshot

COMMANDS = ("simulate", "greens-test", "picard", "verify")


@dataclass
class CommandSpec:
    subcommand: str
    config: Optional[str] = None
    out: str = "."
    overrides: List[str] = field(default_factory=list)
    threads: Optional[int] = None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, dt):
        raise ValueError(f"T={T!r} is not a whole number of steps dt=dx={dt!r}")
    return n


def force_options(cfg: Config) -> ForceOptions:
    return ForceOptions(cutoff_R=cfg.cutoff, friction=cfg.run.friction, cfl_guard=cfg.tolerances.cfl_guard)


def simulate(
    cfg: Config,
    state: Optional[SimState] = None,
    on_step: Optional[Callable[[SimState, SimState], None]] = None,
    record: bool = True,
):
    """Run ``cfg`` from ``state`` (default: its initial data) to ``run.T``.

    Returns ``(records, final_state)``.  Records are taken at ``t = 0`` and
    every ``cadence`` steps; step residuals use the pair of states straddling
    the record time.
    """
    s = state if state is not None else make_initial(cfg)
    grid = s.f.grid
    dt = grid.dx
    steps = n_steps(cfg.run.T, dt)
    opts = force_options(cfg)
    exps = cfg.exponent_set
    base = baseline(s)
    records = [make_record(s, exps, base)] if record else []
    for k in range(1, steps + 1):
        nxt = vmfp_step(s, dt, opts)
        if on_step is not None:
            on_step(s, nxt)
        if record and (k % cfg.run.cadence == 0 or k == steps):
            records.append(make_record(nxt, exps, base, prev=s))
        s = nxt
    return records, s


def _read_cfg(spec: CommandSpec) -> Config:
    if spec.config is None:
        return parse_config("", spec.overrides)
    return load_config(spec.config, spec.overrides)


def _threads(spec: CommandSpec, cfg: Config) -> None:
    kinetic.set_threads(spec.threads if spec.threads is not None else cfg.run.threads)


def run_simulate(spec: CommandSpec) -> int:
    try:
        cfg = _read_cfg(spec)
    except IoFailure as exc:
        _log(f"error: {exc}")
        return 3
    except (ParseError, HypothesisViolation) as exc:
        _log(f"config error: {exc}")
        return 1
    _threads(spec, cfg)
    try:
        os.makedirs(spec.out, exist_ok=True)
        records, final = simulate(cfg)
        emit_csv(records, os.path.join(spec.out, "diagnostics.csv"))
        save_snapshot(final, os.path.join(spec.out, "final.snap"), cfg.exponent_set, cfg.digest())
    except CflViolation as exc:
        _log(f"CFL violation: {exc}")
        return 2
    except (IoFailure, OSError) as exc:
        _log(f"I/O failure: {exc}")
        return 3
    except (VMFPError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1
    _log(f"simulate: {len(records)} records, t = {final.t:g}, mass = {records[-1].mass:.15g}, leak = {final.leak:.3g}")
    return 0


# --------------------------------------------------------------------------
# kernel property checks


def greens_checks(cfg: Config):
    from .acceptance import greens_checks as checks

    return checks(cfg.phase_grid)


def run_greens_test(spec: CommandSpec) -> int:
    try:
        cfg = _read_cfg(spec)
    except (VMFPError, ValueError) as exc:
        _log(f"config error: {exc}")
        return 1
    _threads(spec, cfg)
    checks = greens_checks(cfg)
    for c in checks:
        _log(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<20s} {c.detail}")
    try:
        os.makedirs(spec.out, exist_ok=True)
        with open(os.path.join(spec.out, "greens_test.txt"), "w", newline="") as fh:
            for c in checks:
                fh.write(f"{'PASS' if c.passed else 'FAIL'} {c.name}\n")
    except OSError as exc:
        _log(f"I/O failure: {exc}")
        return 1
    return 0 if all(c.passed for c in checks) else 1


def run_picard(spec: CommandSpec) -> int:
    try:
        cfg = _read_cfg(spec)
    except (VMFPError, ValueError) as exc:
        _log(f"config error: {exc}")
        return 1
    _threads(spec, cfg)
    s = make_initial(cfg)
    p = cfg.picard
    try:
        os.makedirs(spec.out, exist_ok=True)
        path = os.path.join(spec.out, "picard.csv")
        try:
            report, _ = picard_iterate(
                s.f, s.fields, s.bg, p.T, s.f.grid.dx, p.n_max, p.tol, cfg.exponent_set,
                friction=cfg.run.friction, cfl_guard=cfg.tolerances.cfl_guard,
            )
        except NoConvergence as exc:
            if exc.report is not None:
                exc.report.to_csv(path)
                for r in exc.report.rows:
                    _log(f"n={r.n:2d} R={r.R_n:g} diff={r.total:.3e} ratio={r.ratio:.3g}")
            _log(f"picard: {exc}")
            return 4
        report.to_csv(path)
    except (VMFPError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 4 if isinstance(exc, CflViolation) else 1
    for r in report.rows:
        _log(f"n={r.n:2d} R={r.R_n:g} diff={r.total:.3e} ratio={r.ratio:.3g}")
    _log(f"picard: {'converged' if report.converged else 'not converged'} after {len(report.rows) + 1} iterates")
    return 0 if report.converged else 4


def run_verify(spec: CommandSpec) -> int:
    from .acceptance import run_all

    try:
        cfg = _read_cfg(spec) if spec.config is not None or spec.overrides else None
    except (VMFPError, ValueError) as exc:
        _log(f"config error: {exc}")
        return 1
    if spec.threads is not None:
        kinetic.set_threads(spec.threads)
    results = run_all(cfg, log=_log)
    lines = [r.line() for r in results]
    try:
        os.makedirs(spec.out, exist_ok=True)
        with open(os.path.join(spec.out, "verify.txt"), "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        _log(f"I/O failure: {exc}")
        return 1
    for line in lines:
        print(line)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vmfp", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--out", metavar="DIR", default=".")
    ap.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                    help="override a config value, e.g. --set grid.nx=128 (repeatable)")
    ap.add_argument("--threads", type=int, metavar="N")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        _log("error: --threads must be positive")
        return 1
    spec = CommandSpec(args.subcommand, args.config, args.out, list(args.overrides), args.threads)
    handler = {
        "simulate": run_simulate,
        "greens-test": run_greens_test,
        "picard": run_picard,
        "verify": run_verify,
    }[spec.subcommand]
    return handler(spec)


if __name__ == "__main__":
    sys.exit(main())
