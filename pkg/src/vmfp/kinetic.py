"""Split evolution of the distribution function.

Transport in ``x`` and in ``v`` uses a conservative semi-Lagrangian flux
form with the positive, flux-conservative (PFC) third-order reconstruction.
The slope limiters only clamp the reconstruction into ``[0, max f]``, so the
discrete update keeps ``0 <= f <= max f`` for displacements of at most one
cell per sweep, while mass changes only through the ``v``-box boundary.
Velocity diffusion is an exact convolution with the lattice heat kernel of
:mod:`vmfp.greens`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import CflViolation, StepMismatch
from .fields import Background, FieldState, maxwell_step
from .greens import heat_kernel_1d
from .phase_space import DistField, PhaseGrid, moment_density

_THREADS = 1


def set_threads(n: int) -> None:
    """Worker threads used by the per-slice substeps; results do not depend on it."""
    global _THREADS
    if n < 1:
        raise ValueError("threads must be positive")
    _THREADS = int(n)


def _chunks(n: int):
    k = max(1, min(_THREADS, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(k) if bounds[i + 1] > bounds[i]]


def _run_chunks(func, n: int) -> None:
    parts = _chunks(n)
    if len(parts) == 1:
        func(parts[0])
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as ex:
        list(ex.map(func, parts))


@dataclass(frozen=True)
class ForceOptions:
    cutoff_R: Optional[float] = None
    friction: bool = False
    cfl_guard: float = 1.0

    def __post_init__(self):
        if self.cutoff_R is not None and self.cutoff_R < 1:
            raise ValueError("cutoff_R must be >= 1")


@dataclass
class SimState:
    t: float
    f: DistField
    fields: FieldState
    bg: Background
    leak: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.t, self.f.copy(), self.fields.copy(), Background(self.bg.phi.copy()), self.leak)


# --------------------------------------------------------------------------
# cutoff


def cutoff_psi(s):
    """Quintic smoothstep profile: 1 for s <= -1, 0 for s >= 0, C^2 in between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s + 1.0, 0.0, 1.0)
    return 1.0 - u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def cutoff_psi_R(v1, v2, R):
    return cutoff_psi(np.hypot(v1, v2) - R)


# --------------------------------------------------------------------------
# PFC fluxes


def _limiter(num, d):
    # min(1, 2 num / |d|) clipped at 0; d == 0 gives 1 (or 0 when num == 0, where it is unused)
    ad = np.abs(d)
    return np.clip(2.0 * num / np.maximum(ad, 1e-300), 0.0, 1.0)


def _pfc_right(fm, f0, fp, a, fmax):
    """Mass leaving cell ``j`` through its right face for a displacement ``a`` in [0, 1]."""
    dp = fp - f0
    dm = f0 - fm
    top = fmax - f0
    ep = _limiter(np.where(dp > 0, f0, top), dp)
    em = _limiter(np.where(dm > 0, top, f0), dm)
    b = 1.0 - a
    return a * (f0 + ep / 6.0 * b * (2.0 - a) * dp + em / 6.0 * b * (1.0 + a) * dm)


def _sweep_nonperiodic(f, disp, fmax):
    """Conservative update along the last axis with zero inflow at the box edges.

    ``disp`` holds the displacement (in cells) at the ``n + 1`` faces and is
    broadcastable to ``f.shape[:-1] + (n + 1,)``.  Returns the updated array
    and the outgoing mass per line (in value * cells units).
    """
    n = f.shape[-1]
    pad = np.zeros(f.shape[:-1] + (n + 4,))
    pad[..., 2:-2] = f
    disp = np.broadcast_to(disp, f.shape[:-1] + (n + 1,))
    # face k sits between padded cells k+1 and k+2; mirror the stencil for negative displacement
    pos = disp >= 0
    up = np.where(pos, pad[..., 0:n + 1], pad[..., 3:n + 4])
    mid = np.where(pos, pad[..., 1:n + 2], pad[..., 2:n + 3])
    down = np.where(pos, pad[..., 2:n + 3], pad[..., 1:n + 2])
    flux = _pfc_right(up, mid, down, np.abs(disp), fmax)
    flux = np.where(pos, flux, -flux)
    out = f + flux[..., :-1] - flux[..., 1:]
    lost = flux[..., -1] - flux[..., 0]
    return out, lost


# --------------------------------------------------------------------------
# x transport


def _advect_x(values: np.ndarray, grid: PhaseGrid, dt: float):
    """Return ``(new_values, face_flux)``; ``face_flux[i]`` crosses the left face of cell i."""
    out = np.empty_like(values)
    flux = np.zeros_like(values)
    fmax = float(np.max(values)) if values.size else 0.0
    disp = grid.v * dt / grid.dx

    def work(sl):
        for k in range(sl.start, sl.stop):
            line = values[:, k, :]
            d = disp[k]
            n = int(math.floor(d))
            a = d - n
            F = np.zeros_like(line)
            if n > 0:
                for m in range(1, n + 1):
                    F += np.roll(line, m, axis=0)
            elif n < 0:
                for m in range(0, -n):
                    F -= np.roll(line, -m, axis=0)
            g = np.roll(line, n, axis=0)
            if a > 0.0:
                phi = _pfc_right(np.roll(g, 1, axis=0), g, np.roll(g, -1, axis=0), a, fmax)
                phi_in = np.roll(phi, 1, axis=0)
                g = g + phi_in - phi
                F += phi_in
            out[:, k, :] = g
            flux[:, k, :] = F

    _run_chunks(work, grid.nv)
    return out, flux


def advect_x(f: DistField, dt: float) -> DistField:
    """Shift every v-line by ``v1 dt`` in the periodic x-direction."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return DistField(f.grid, _advect_x(f.values, f.grid, dt)[0])


# --------------------------------------------------------------------------
# v transport


def lorentz_force(fs: FieldState, v1, v2, opts: Optional[ForceOptions] = None):
    """``K = (E1 + c v2 B, E2 - c v1 B)`` with ``c = psi^R(v)`` when a cutoff is set.

    Returns arrays of shape ``(nx,) + broadcast(v1, v2).shape``.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    shape = np.broadcast(v1, v2).shape
    c = np.ones(shape)
    if opts is not None and opts.cutoff_R is not None:
        c = cutoff_psi_R(v1, v2, opts.cutoff_R) * c
    ex = (slice(None),) + (None,) * len(shape)
    E1 = fs.e1_centers()[ex]
    E2 = fs.E2[ex]
    B = fs.B[ex]
    return E1 + c * v2 * B, E2 - c * v1 * B


def _face_forces(fs: FieldState, grid: PhaseGrid, opts: Optional[ForceOptions]):
    vf = grid.v_faces
    vc = grid.v
    K1, _ = lorentz_force(fs, vf[:, None], vc[None, :], opts)  # (nx, nv+1, nv)
    _, K2 = lorentz_force(fs, vc[:, None], vf[None, :], opts)  # (nx, nv, nv+1)
    return K1, K2


def _accelerate(values, grid, fs, dt, opts):
    """Strang-split v1/v2 sweeps.  Returns ``(new_values, leaked_mass)``."""
    opts = opts or ForceOptions()
    K1, K2 = _face_forces(fs, grid, opts)
    kmax = max(float(np.max(np.abs(K1))), float(np.max(np.abs(K2))))
    if kmax * dt > opts.cfl_guard * grid.dv:
        raise CflViolation(
            f"max|K| dt = {kmax * dt:.4g} exceeds {opts.cfl_guard:g} dv = {opts.cfl_guard * grid.dv:.4g}"
        )
    d1 = np.swapaxes(K1, 1, 2) * (0.5 * dt / grid.dv)  # (nx, nv2, nv1+1)
    d2 = K2 * (dt / grid.dv)
    out = np.empty_like(values)
    lost = np.zeros(grid.nx)
    fmax = float(np.max(values)) if values.size else 0.0

    def work(sl):
        g = np.swapaxes(values[sl], 1, 2)
        g, l1 = _sweep_nonperiodic(g, d1[sl], fmax)
        g = np.swapaxes(g, 1, 2)
        g, l2 = _sweep_nonperiodic(g, d2[sl], fmax)
        g = np.swapaxes(g, 1, 2)
        g, l3 = _sweep_nonperiodic(g, d1[sl], fmax)
        out[sl] = np.swapaxes(g, 1, 2)
        lost[sl] = l1.sum(axis=1) + l2.sum(axis=1) + l3.sum(axis=1)

    _run_chunks(work, grid.nx)
    return out, float(np.sum(lost)) * grid.cell_volume


def accelerate_v(f: DistField, fs: FieldState, dt: float, opts: Optional[ForceOptions] = None) -> DistField:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return DistField(f.grid, _accelerate(f.values, f.grid, fs, dt, opts)[0])


# --------------------------------------------------------------------------
# diffusion and friction


def _convolve_axis(values, d, w, axis, out):
    n = values.shape[axis]
    out[...] = 0.0
    for off, wk in zip(d, w):
        if abs(off) >= n:
            continue
        dst = [slice(None)] * values.ndim
        src = [slice(None)] * values.ndim
        dst[axis] = slice(max(off, 0), n + min(off, 0))
        src[axis] = slice(max(-off, 0), n - max(off, 0))
        out[tuple(dst)] += wk * values[tuple(src)]


def _escape_fraction(n, d, w):
    """Fraction of the kernel mass leaving the box, per source index."""
    j = np.arange(n)[:, None]
    tgt = j + d[None, :]
    outside = (tgt < 0) | (tgt >= n)
    return np.sum(np.where(outside, w[None, :], 0.0), axis=1)


def _diffuse(values, grid, dt):
    d, w = heat_kernel_1d(dt, grid.dv)
    esc = _escape_fraction(grid.nv, d, w)
    out = np.empty_like(values)
    lost = np.zeros(grid.nx)

    def work(sl):
        tmp = np.empty_like(values[sl])
        src = values[sl]
        l1 = np.sum(src * esc[None, :, None], axis=(1, 2))
        _convolve_axis(src, d, w, 1, tmp)
        l2 = np.sum(tmp * esc[None, None, :], axis=(1, 2))
        _convolve_axis(tmp, d, w, 2, out[sl])
        lost[sl] = l1 + l2

    _run_chunks(work, grid.nx)
    return out, float(np.sum(lost)) * grid.cell_volume


def diffuse_v(f: DistField, dt: float) -> DistField:
    """Exact velocity diffusion over ``dt`` with an absorbing box edge."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return DistField(f.grid, _diffuse(f.values, f.grid, dt)[0])


def _friction(values, grid, dt):
    faces = grid.v_faces
    src = np.clip(np.exp(dt) * faces, faces[0], faces[-1])
    out = values
    for axis in (1, 2):
        shape = list(out.shape)
        shape[axis] = 1
        prim = np.concatenate([np.zeros(shape), np.cumsum(out, axis=axis)], axis=axis)
        P = PchipInterpolator(faces, prim, axis=axis)(src)
        out = np.diff(P, axis=axis)
    return out


def friction_step(f: DistField, dt: float) -> DistField:
    """Exact-characteristic solve of ``d_t f = div_v(v f)`` by conservative remap."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return DistField(f.grid, _friction(f.values, f.grid, dt))


# --------------------------------------------------------------------------
# moments and the full step


def charge_current(f: DistField, bg: Background):
    rho = moment_density(f, 1.0) - bg.phi
    j1 = moment_density(f, lambda v1, v2: v1 + 0 * v2)
    j2 = moment_density(f, lambda v1, v2: v2 + 0 * v1)
    return rho, (j1, j2)


@dataclass
class StepTally:
    leak: float = 0.0
    face_charge: Optional[np.ndarray] = None


def kinetic_substeps(values, grid, fs_mid, dt, opts, tally: StepTally):
    """``X(dt/2) V(dt/2) D(dt) V(dt/2) X(dt/2)`` with frozen mid-step fields."""
    opts = opts or ForceOptions()
    g, fl1 = _advect_x(values, grid, 0.5 * dt)
    g, l = _accelerate(g, grid, fs_mid, 0.5 * dt, opts)
    tally.leak += l
    if opts.friction:
        g = _friction(g, grid, 0.5 * dt)
    g, l = _diffuse(g, grid, dt)
    tally.leak += l
    if opts.friction:
        g = _friction(g, grid, 0.5 * dt)
    g, l = _accelerate(g, grid, fs_mid, 0.5 * dt, opts)
    tally.leak += l
    g, fl2 = _advect_x(g, grid, 0.5 * dt)
    tally.face_charge = np.sum(fl1 + fl2, axis=(1, 2)) * grid.dv**2 * grid.dx
    return g


def force_free_step(f: DistField, dt: float) -> DistField:
    """``X(dt/2) D(dt) X(dt/2)``; any ``dt`` (no field contract)."""
    g, _ = _advect_x(f.values, f.grid, 0.5 * dt)
    g, _ = _diffuse(g, f.grid, dt)
    g, _ = _advect_x(g, f.grid, 0.5 * dt)
    return DistField(f.grid, g)


def _check_dt(dt, grid):
    if abs(dt - grid.dx) > 1e-12 * grid.dx:
        raise StepMismatch(f"dt must equal dx (dt={dt!r}, dx={grid.dx!r})")


def vmfp_step(s: SimState, dt: float, opts: Optional[ForceOptions] = None) -> SimState:
    """One Strang step of the coupled system.

    The mid-step current comes from a predictor (half x-shift then half
    acceleration with the old fields).  ``E1`` is advanced with the charge
    actually carried across each cell face by the two x-substeps, so the
    discrete Gauss law is propagated exactly up to velocity-box leakage.
    """
    grid = s.f.grid
    _check_dt(dt, grid)
    opts = opts or ForceOptions()
    half, fl1 = _advect_x(s.f.values, grid, 0.5 * dt)
    pred, _ = _accelerate(half, grid, s.fields, 0.5 * dt, opts)
    pf = DistField(grid, pred)
    j1c = moment_density(pf, lambda v1, v2: v1 + 0 * v2)
    j2m = moment_density(pf, lambda v1, v2: v2 + 0 * v1)
    j1_face = 0.5 * (j1c + np.roll(j1c, 1))
    fs_pred = maxwell_step(s.fields, j1_face, j2m, dt, grid.dx)
    fs_mid = s.fields.average(fs_pred)

    tally = StepTally()
    g = kinetic_substeps(s.f.values, grid, fs_mid, dt, opts, tally)
    fs_new = maxwell_step(s.fields, tally.face_charge / dt, j2m, dt, grid.dx)
    return SimState(s.t + dt, DistField(grid, g), fs_new, s.bg, s.leak + tally.leak)
