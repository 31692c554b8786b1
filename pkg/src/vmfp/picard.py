"""Cutoff Picard iteration for local existence.

Each iterate freezes a field path, solves the linear kinetic equation with
the magnetic force cut off at ``|v| = R``, and rebuilds the fields from the
new density.  Radii double with the iteration index.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import GridMismatch, IoFailure, NoConvergence, StepMismatch
from .fields import Background, FieldState, e1_from_density, forward_diff, maxwell_step
from .kinetic import ForceOptions, StepTally, cutoff_psi, kinetic_substeps
from .phase_space import DistField, ExponentSet, f_norm, moment_density, weight_v0

__all__ = [
    "cutoff_psi", "psi_R", "h1_diff", "linearized_solve", "picard_iterate",
    "PicardReport", "PicardRow", "LinearSolution", "cutoff_difference_bound",
]


def psi_R(v1, v2, R: float):
    return cutoff_psi(np.hypot(v1, v2) - R)


def cutoff_difference_bound(grid, R: float, eps: float):
    """``(max_v v0^-(1+eps/2) |psi^R - psi^2R|, R^(-eps/2))`` on the velocity grid."""
    v1, v2 = grid.vmesh()
    diff = np.abs(psi_R(v1, v2, R) - psi_R(v1, v2, 2 * R))
    lhs = float(np.max(weight_v0(v1, v2, -(1.0 + 0.5 * eps)) * diff))
    return lhs, R ** (-0.5 * eps)


def _h1(u: np.ndarray, dx: float) -> float:
    return float(np.sum(u * u + forward_diff(u, dx) ** 2) * dx)


def h1_diff(a: FieldState, b: FieldState, dx: float) -> float:
    """Discrete H1 distance of the transverse pair ``(E2, B)``."""
    if a.E2.shape != b.E2.shape or a.B.shape != b.B.shape:
        raise GridMismatch(f"field shapes differ: {a.E2.shape} vs {b.E2.shape}")
    return math.sqrt(_h1(a.E2 - b.E2, dx) + _h1(a.B - b.B, dx))


def h1_e1_diff(a: FieldState, b: FieldState, dx: float) -> float:
    if a.E1.shape != b.E1.shape:
        raise GridMismatch(f"field shapes differ: {a.E1.shape} vs {b.E1.shape}")
    return math.sqrt(_h1(a.E1 - b.E1, dx))


@dataclass
class LinearSolution:
    f_path: List[DistField]
    field_path: List[FieldState]
    leak: float = 0.0


def linearized_solve(
    field_path: Sequence[FieldState],
    R: Optional[float],
    f0: DistField,
    T: float,
    dt: float,
    bg: Background,
    friction: bool = False,
    cfl_guard: float = 1.0,
    neutral_tol: float = 1e-10,
) -> LinearSolution:
    """Apply the cutoff linearized map to a sampled field path.

    The kinetic step ``n`` uses the average of ``field_path[n]`` and
    ``field_path[n+1]``.  Output ``E1`` is the antiderivative of the new
    charge density at every sample; ``(E2, B)`` are advanced by the exact
    shift with the time-averaged transverse current.  Nothing feeds back.
    """
    grid = f0.grid
    if abs(dt - grid.dx) > 1e-12 * grid.dx:
        raise StepMismatch(f"dt must equal dx (dt={dt!r}, dx={grid.dx!r})")
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T!r} is not a whole number of steps of {dt!r}")
    if len(field_path) != nsteps + 1:
        raise ValueError(f"field path has {len(field_path)} samples, need {nsteps + 1}")
    opts = ForceOptions(cutoff_R=R, friction=friction, cfl_guard=cfl_guard)
    v2k = lambda a, b: b + 0 * a

    f_path = [f0.copy()]
    tally = StepTally()
    for n in range(nsteps):
        fs_mid = field_path[n].average(field_path[n + 1])
        g = kinetic_substeps(f_path[-1].values, grid, fs_mid, dt, opts, tally)
        f_path.append(DistField(grid, g))

    def e1_of(f):
        return e1_from_density(moment_density(f, 1.0) - bg.phi, grid.dx, neutral_tol)

    start = field_path[0]
    out = [FieldState(e1_of(f_path[0]), start.E2.copy(), start.B.copy())]
    j2_prev = moment_density(f_path[0], v2k)
    zero = np.zeros(grid.nx)
    for n in range(nsteps):
        j2_next = moment_density(f_path[n + 1], v2k)
        nxt = maxwell_step(out[-1], zero, 0.5 * (j2_prev + j2_next), dt, grid.dx)
        nxt.E1 = e1_of(f_path[n + 1])
        out.append(nxt)
        j2_prev = j2_next
    return LinearSolution(f_path, out, tally.leak)


@dataclass
class PicardRow:
    n: int
    R_n: float
    f_diff: float
    field_diff: float
    ratio: float

    @property
    def total(self) -> float:
        return self.f_diff + self.field_diff


@dataclass
class PicardReport:
    rows: List[PicardRow] = field(default_factory=list)
    converged: bool = False

    def to_csv(self, path) -> None:
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["n", "R_n", "f_diff", "field_diff", "ratio"])
                for r in self.rows:
                    w.writerow([r.n, "%.17g" % r.R_n, "%.17g" % r.f_diff, "%.17g" % r.field_diff, "%.17g" % r.ratio])
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.rows]


def _difference(a: LinearSolution, b: LinearSolution, exps: ExponentSet, dx: float):
    fd = 0.0
    ed = 0.0
    for fa, fb, ea, eb in zip(a.f_path, b.f_path, a.field_path, b.field_path):
        fd = max(fd, f_norm(fa - fb, exps))
        ed = max(ed, h1_diff(ea, eb, dx) + h1_e1_diff(ea, eb, dx))
    return fd, ed


def picard_iterate(
    f0: DistField,
    fields0: FieldState,
    bg: Background,
    T: float,
    dt: float,
    n_max: int,
    tol: float,
    exps: ExponentSet = ExponentSet(),
    friction: bool = False,
    cfl_guard: float = 1.0,
    neutral_tol: float = 1e-10,
):
    """Iterate ``(f, E, B)^{n+1} = L^{2^n}(E^n, B^n)`` from the constant-in-time start.

    Returns ``(report, solution)``.  Raises :class:`NoConvergence` (carrying
    the report) when ``n_max`` iterates pass without reaching ``tol`` and the
    last difference ratio is at least 1.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    nsteps = int(round(T / dt))
    path = [fields0.copy() for _ in range(nsteps + 1)]
    report = PicardReport()
    prev = None
    prev_total = None
    for n in range(n_max):
        R = float(2 ** n)
        sol = linearized_solve(path, R, f0, T, dt, bg, friction, cfl_guard, neutral_tol)
        if prev is not None:
            fd, ed = _difference(sol, prev, exps, f0.grid.dx)
            total = fd + ed
            if prev_total is None:
                ratio = float("nan")
            elif prev_total == 0.0:
                ratio = 0.0
            else:
                ratio = total / prev_total
            report.rows.append(PicardRow(n, R, fd, ed, ratio))
            prev_total = total
            if total < tol:
                report.converged = True
                return report, sol
        prev = sol
        path = sol.field_path
    last = report.rows[-1].ratio if report.rows else float("nan")
    if not (last < 1.0):
        raise NoConvergence(f"no convergence after {n_max} iterates (last ratio {last:.3g})", report)
    return report, prev
