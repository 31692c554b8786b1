"""Monitored identities, norms and functionals along a run, and their CSV form.

Velocity derivatives are centred differences with zero padding outside the
box, matching the absorbing velocity boundary of the solver.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InsufficientSamples, IoFailure
from .fields import field_energy, gauss_residual
from .kinetic import SimState, charge_current
from .phase_space import (
    DistField, ExponentSet, WeightSpec, dx_periodic, f_norm, moment_density,
    sup_norm_weighted, total_mass, weighted_l2_norm,
)


def mass(f: DistField) -> float:
    return total_mass(f)


def kinetic_energy(f: DistField) -> float:
    return float(np.sum(moment_density(f, lambda v1, v2: v1 * v1 + v2 * v2)) * f.grid.dx)


def energy_report(s: SimState):
    """``(e_total, kinetic, field)``."""
    kin = kinetic_energy(s.f)
    fld = field_energy(s.fields, s.f.grid.dx)
    return kin + fld, kin, fld


def _pad_v(values):
    return np.pad(values, ((0, 0), (1, 1), (1, 1)))


def grad_v(f: DistField):
    p = _pad_v(f.values)
    dv = f.grid.dv
    g1 = (p[:, 2:, 1:-1] - p[:, :-2, 1:-1]) / (2 * dv)
    g2 = (p[:, 1:-1, 2:] - p[:, 1:-1, :-2]) / (2 * dv)
    return g1, g2


def hessian_v(f: DistField):
    p = _pad_v(f.values)
    dv = f.grid.dv
    c = p[:, 1:-1, 1:-1]
    h11 = (p[:, 2:, 1:-1] - 2 * c + p[:, :-2, 1:-1]) / dv**2
    h22 = (p[:, 1:-1, 2:] - 2 * c + p[:, 1:-1, :-2]) / dv**2
    h12 = (p[:, 2:, 2:] - p[:, 2:, :-2] - p[:, :-2, 2:] + p[:, :-2, :-2]) / (4 * dv**2)
    return h11, h12, h22


def l2_sq(f: DistField) -> float:
    return float(np.sum(f.values**2) * f.grid.cell_volume)


def dissipation(f: DistField) -> float:
    """``||grad_v f||_2^2``."""
    g1, g2 = grad_v(f)
    return float(np.sum(g1 * g1 + g2 * g2) * f.grid.cell_volume)


def dissipation_residual(prev: SimState, cur: SimState) -> float:
    """``|d/dt ||f||^2 + 2 ||grad_v f||^2|`` across one step (trapezoid in time)."""
    if prev is None or cur is None:
        raise InsufficientSamples("dissipation residual needs two consecutive states")
    dt = cur.t - prev.t
    if not dt > 0:
        raise InsufficientSamples("states must be strictly increasing in time")
    rate = (l2_sq(cur.f) - l2_sq(prev.f)) / dt
    return abs(rate + dissipation(prev.f) + dissipation(cur.f))


def _local_energy(s: SimState):
    f = s.f
    e = moment_density(f, lambda v1, v2: v1 * v1 + v2 * v2)
    E1 = s.fields.e1_centers()
    e = e + E1**2 + s.fields.E2**2 + s.fields.B**2
    m = moment_density(f, lambda v1, v2: v1 * (v1 * v1 + v2 * v2)) + 2.0 * s.fields.E2 * s.fields.B
    return e, m


def local_energy_residual(prev: SimState, cur: SimState) -> np.ndarray:
    """Per-cell residual of ``d_t e + d_x m = 4 int f dv`` across one step."""
    if prev is None or cur is None:
        raise InsufficientSamples("local energy residual needs two consecutive states")
    dt = cur.t - prev.t
    if not dt > 0:
        raise InsufficientSamples("states must be strictly increasing in time")
    e0, m0 = _local_energy(prev)
    e1, m1 = _local_energy(cur)
    n = 0.5 * (moment_density(prev.f, 1.0) + moment_density(cur.f, 1.0))
    dxm = dx_periodic(0.5 * (m0 + m1), prev.f.grid.dx)
    return (e1 - e0) / dt + dxm - 4.0 * n


def regularity_functional(f: DistField, t: float) -> float:
    """``int int f^2 + t |grad_v f|^2 + t^2 |Hess_v f|^2 / 2``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    total = np.sum(f.values**2)
    if t > 0:
        g1, g2 = grad_v(f)
        h11, h12, h22 = hessian_v(f)
        total = total + t * np.sum(g1 * g1 + g2 * g2)
        total = total + 0.5 * t * t * np.sum(h11 * h11 + 2 * h12 * h12 + h22 * h22)
    return float(total * f.grid.cell_volume)


def v2_moment_sup(f: DistField, p: float) -> float:
    if p < 0:
        raise ValueError("p must be >= 0")
    return sup_norm_weighted(f, WeightSpec("r_v2", p))


def field_sups(s: SimState):
    E = np.hypot(s.fields.e1_centers(), s.fields.E2)
    return float(np.max(np.abs(E))), float(np.max(np.abs(s.fields.B)))


COLUMNS = (
    "t", "mass", "v_leak", "e_kin", "e_field", "e_total", "e_slope_res", "l2_f", "diss",
    "diss_res", "wl2_g0", "wl2_ga2", "wl2_gal2", "sup_d", "sup_rv2_p2", "sup_rv2_p4",
    "sup_E", "sup_B", "gauss_res", "f_norm", "reg_func", "loc_e_res_max",
)


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    v_leak: float
    e_kin: float
    e_field: float
    e_total: float
    e_slope_res: float
    l2_f: float
    diss: float
    diss_res: float
    wl2_g0: float
    wl2_ga2: float
    wl2_gal2: float
    sup_d: float
    sup_rv2_p2: float
    sup_rv2_p4: float
    sup_E: float
    sup_B: float
    gauss_res: float
    f_norm: float
    reg_func: float
    loc_e_res_max: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in astuple(self))


@dataclass
class Baseline:
    """Quantities from the initial state needed by residual columns."""

    mass0: float
    e_total0: float


def make_record(
    s: SimState,
    exps: ExponentSet,
    base: Baseline,
    prev: Optional[SimState] = None,
    p_list: Sequence[float] = (2.0, 4.0),
) -> DiagnosticsRecord:
    """All monitored quantities at ``s``; step residuals use ``prev`` (zero without it)."""
    f = s.f
    g = f.grid
    e_tot, kin, fld = energy_report(s)
    rho, _ = charge_current(f, s.bg)
    sup_E, sup_B = field_sups(s)
    if prev is not None:
        d_res = dissipation_residual(prev, s)
        le = float(np.max(np.abs(local_energy_residual(prev, s))))
    else:
        d_res = 0.0
        le = 0.0
    return DiagnosticsRecord(
        t=s.t,
        mass=mass(f),
        v_leak=s.leak,
        e_kin=kin,
        e_field=fld,
        e_total=e_tot,
        e_slope_res=e_tot - base.e_total0 - 4.0 * base.mass0 * s.t,
        l2_f=weighted_l2_norm(f, 0.0),
        diss=dissipation(f),
        diss_res=d_res,
        wl2_g0=weighted_l2_norm(f, 0.0),
        wl2_ga2=weighted_l2_norm(f, exps.a / 2),
        wl2_gal2=weighted_l2_norm(f, exps.alpha / 2),
        sup_d=sup_norm_weighted(f, exps.delta),
        sup_rv2_p2=v2_moment_sup(f, p_list[0]),
        sup_rv2_p4=v2_moment_sup(f, p_list[1]),
        sup_E=sup_E,
        sup_B=sup_B,
        gauss_res=gauss_residual(s.fields, rho, g.dx),
        f_norm=f_norm(f, exps),
        reg_func=regularity_functional(f, s.t),
        loc_e_res_max=le,
    )


def baseline(s: SimState) -> Baseline:
    return Baseline(mass(s.f), energy_report(s)[0])


def emit_csv(records: Sequence[DiagnosticsRecord], path) -> None:
    """Write the fixed-column CSV with 17 significant digits and LF endings."""
    if not records:
        raise ValueError("no records to write")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for r in records:
                fh.write(",".join("%.17g" % v for v in astuple(r)) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> List[DiagnosticsRecord]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path}: unexpected header")
    return [DiagnosticsRecord(*(float(x) for x in row)) for row in rows[1:]]
