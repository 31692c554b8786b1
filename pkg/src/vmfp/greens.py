r"""Fundamental solution of ``d_t f + v1 d_x f = Lap_v f`` and its grid applications.

For elapsed time ``s = t - tau > 0``

.. math::

    G = (4\pi s)^{-1} e^{-|v-w|^2/4s}\,(\pi s^3/3)^{-1/2}
        \exp\!\big(-3 (x - y - \tfrac12 s (v_1 + w_1))^2 / s^3\big).

The kernel factorises into a heat kernel in ``v2``, a heat kernel in ``v1``
and a Gaussian in the transport-corrected position whose centre depends on
``v1 + w1``.  Grid application exploits that: the ``v2`` factor is a banded
matrix, the ``x`` factor is integrated exactly over each source cell
(error functions), wrapped periodically, and diagonalised by an FFT in
``x``; only the ``(v1, w1)`` coupling stays dense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InsufficientSamples, NonPositiveElapsed
from .phase_space import DistField, PhaseGrid, weighted_l2_norm

# Multiplies s inside the x-exponent only.  Anything other than 1.0 breaks the
# kernel on purpose; used as a negative control by ``greens-test``.
_X_EXPONENT_TIME_FACTOR = 1.0

# kernel tails below this fraction of the peak are dropped
_TAIL = 1e-17


@dataclass(frozen=True)
class KernelEval:
    s: float
    x: float
    v: tuple
    y: float
    w: tuple


def _check_elapsed(s):
    if not np.all(np.asarray(s) > 0):
        raise NonPositiveElapsed(f"elapsed time must be positive, got {s!r}")


def G(s, x, v1, v2, y, w1, w2):
    """Vectorised kernel value."""
    _check_elapsed(s)
    s = np.asarray(s, dtype=float)
    sx = s * _X_EXPONENT_TIME_FACTOR
    dv2 = (np.asarray(v1) - w1) ** 2 + (np.asarray(v2) - w2) ** 2
    z = np.asarray(x) - y - 0.5 * s * (np.asarray(v1) + w1)
    return (
        np.exp(-dv2 / (4 * s)) / (4 * np.pi * s)
        * np.exp(-3.0 * z * z / sx**3) / np.sqrt(np.pi * s**3 / 3.0)
    )


def grad_w_G(s, x, v1, v2, y, w1, w2):
    """Analytic ``(dG/dw1, dG/dw2)``."""
    g = G(s, x, v1, v2, y, w1, w2)
    z = np.asarray(x) - y - 0.5 * s * (np.asarray(v1) + w1)
    d1 = ((np.asarray(v1) - w1) / (2 * s) + 3.0 * z / (s * s * _X_EXPONENT_TIME_FACTOR**3)) * g
    d2 = (np.asarray(v2) - w2) / (2 * s) * g
    return d1, d2


def eval_G(ke: KernelEval) -> float:
    return float(G(ke.s, ke.x, ke.v[0], ke.v[1], ke.y, ke.w[0], ke.w[1]))


# --------------------------------------------------------------------------
# lattice kernels


def heat_kernel_1d(s: float, dv: float, max_offset: int | None = None):
    """Lattice heat kernel for ``d_t u = u''`` over time ``s``.

    Returns ``(offsets, weights)`` with ``weights`` summing to one over the
    full (untruncated by the box) lattice, so it can be used directly as a
    quadrature-weighted convolution ``u_i <- sum_d w_d u_{i-d}``.
    """
    _check_elapsed(s)
    half = int(math.ceil(math.sqrt(4.0 * s * math.log(1.0 / _TAIL)) / dv))
    if max_offset is not None:
        half = min(half, max_offset)
    d = np.arange(-half, half + 1)
    w = np.exp(-((d * dv) ** 2) / (4.0 * s))
    return d, w / np.sum(w)


def _heat_matrix(s: float, grid: PhaseGrid, derivative: bool = False) -> np.ndarray:
    """Dense ``(target, source)`` matrix of the lattice heat kernel or its w-derivative."""
    nv = grid.nv
    d, w = heat_kernel_1d(s, grid.dv, max_offset=nv - 1)
    lut = np.zeros(2 * nv - 1)
    lut[d + nv - 1] = w
    idx = np.arange(nv)[:, None] - np.arange(nv)[None, :]
    m = lut[idx + nv - 1]
    if derivative:
        # d/dw of h(v - w) = (v - w) / (2 s) h
        m = m * (idx * grid.dv) / (2.0 * s)
    return m


def _gauss_cdf_diff(lo, hi, sigma):
    a = lo / sigma
    b = hi / sigma
    upper = special.ndtr(-a) - special.ndtr(-b)
    lower = special.ndtr(b) - special.ndtr(a)
    return np.where(a > 0, upper, lower)


def _x_tables(s: float, grid: PhaseGrid):
    """FFT over x of the periodic cell-integrated x-factor and its w1-derivative.

    Row ``m`` corresponds to ``v1 + w1 = v[i1] + v[j1]`` with ``m = i1 + j1``.
    """
    nx, nv, dx = grid.nx, grid.nv, grid.dx
    sx = s * _X_EXPONENT_TIME_FACTOR
    sigma = math.sqrt(sx**3 / 6.0)
    vsum = -2.0 * grid.v_max + (np.arange(2 * nv - 1) + 1.0) * grid.dv
    c = 0.5 * s * vsum
    reach = float(np.max(np.abs(c))) + 10.0 * sigma
    D = int(math.ceil(reach / dx)) + 1
    d = np.arange(-D, D + 1)
    hi = (d[None, :] + 0.5) * dx - c[:, None]
    lo = (d[None, :] - 0.5) * dx - c[:, None]
    w = _gauss_cdf_diff(lo, hi, sigma)
    gpdf = lambda z: np.exp(-0.5 * (z / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)
    wd = -0.5 * s * (gpdf(hi) - gpdf(lo))
    cols = np.mod(d, nx)
    folded = np.zeros((2 * nv - 1, nx))
    folded_d = np.zeros((2 * nv - 1, nx))
    for k, col in enumerate(cols):
        folded[:, col] += w[:, k]
        folded_d[:, col] += wd[:, k]
    return np.fft.fft(folded, axis=1).T, np.fft.fft(folded_d, axis=1).T


def _apply(values: np.ndarray, s: float, grid: PhaseGrid, wrt: int | None = None) -> np.ndarray:
    """Apply ``G`` (``wrt=None``) or ``dG/dw_wrt`` (``wrt`` in {1, 2}) as a grid quadrature."""
    _check_elapsed(s)
    nv = grid.nv
    h = _heat_matrix(s, grid)
    h2 = _heat_matrix(s, grid, derivative=True) if wrt == 2 else h
    g = np.einsum("xaj,bj->xab", values, h2)
    ghat = np.fft.fft(g, axis=0)
    wx, wxd = _x_tables(s, grid)
    msum = np.arange(nv)[:, None] + np.arange(nv)[None, :]
    M = wx[:, msum] * h[None]
    if wrt == 1:
        hd = _heat_matrix(s, grid, derivative=True)
        M = wx[:, msum] * hd[None] + wxd[:, msum] * h[None]
    out = np.matmul(M, ghat)
    return np.fft.ifft(out, axis=0).real


def apply_H(f0: DistField, t: float) -> DistField:
    """Force-free evolution of ``f0`` over time ``t`` by kernel quadrature."""
    return DistField(f0.grid, _apply(f0.values, t, f0.grid))


def apply_grad_G(kf1: np.ndarray, kf2: np.ndarray, s: float, grid: PhaseGrid) -> np.ndarray:
    """``sum_{y,w} grad_w G . (K f)`` for elapsed time ``s``."""
    return _apply(kf1, s, grid, wrt=1) + _apply(kf2, s, grid, wrt=2)


def duhamel_rhs(f_path, field_path, times, opts=None, stride: int = 1) -> np.ndarray:
    """Right side of the mild formulation at ``times[-1]`` using every ``stride``-th sample.

    Trapezoid in ``tau``; the node ``tau = t`` is evaluated at elapsed time
    ``dtau / 2`` instead of 0, where the gradient kernel is singular.
    """
    from .kinetic import lorentz_force  # avoid import cycle

    times = np.asarray(times, dtype=float)
    n = len(times) - 1
    if n % stride:
        raise ValueError(f"{n} intervals not divisible by stride {stride}")
    idx = list(range(0, n + 1, stride))
    if len(idx) < 3:
        raise InsufficientSamples(f"need at least 3 time samples, got {len(idx)}")
    grid = f_path[0].grid
    t = times[-1]
    dtau = times[idx[1]] - times[idx[0]]
    v1, v2 = grid.vmesh()
    rhs = apply_H(f_path[0], t).values
    for pos, m in enumerate(idx):
        weight = dtau if 0 < pos < len(idx) - 1 else 0.5 * dtau
        s = t - times[m] if pos < len(idx) - 1 else 0.5 * dtau
        K1, K2 = lorentz_force(field_path[m], v1, v2, opts)
        fv = f_path[m].values
        rhs = rhs + weight * apply_grad_G(K1 * fv, K2 * fv, s, grid)
    return rhs


def duhamel_residual(f_path, field_path, times, opts=None, stride: int = 1) -> float:
    """L2 norm of ``f(t) - [H + int grad_w G . (K f)]`` at the last sample."""
    rhs = duhamel_rhs(f_path, field_path, times, opts, stride)
    last = f_path[len(times) - 1]
    return weighted_l2_norm(DistField(last.grid, last.values - rhs), 0.0)


# --------------------------------------------------------------------------
# continuum quadratures


def kernel_normalization(s: float, x: float = 0.0, v=(0.0, 0.0), atol: float = 1e-12) -> float:
    """Adaptive cubature of ``int int G dw dy`` over R^3.

    Integrates in ``(z, w1, w2)`` with ``y = x - z - s (v1 + w1) / 2`` (unit
    Jacobian) on a box wide enough for the widest admissible kernel.
    """
    _check_elapsed(s)
    r = 14.0 * math.sqrt(2.0 * s)
    sig = math.sqrt(s**3 / 6.0) * max(1.0, _X_EXPONENT_TIME_FACTOR) ** 1.5
    v1, v2 = v

    def integrand(pts):
        z, w1, w2 = pts[:, 0], pts[:, 1], pts[:, 2]
        y = x - z - 0.5 * s * (v1 + w1)
        return G(s, x, v1, v2, y, w1, w2)

    res = integrate.cubature(
        integrand,
        [-16.0 * sig, v1 - r, v2 - r],
        [16.0 * sig, v1 + r, v2 + r],
        atol=atol, rtol=1e-11,
    )
    return float(res.estimate)


def grad_G_abs(s, x, v1, v2, y, w1, w2):
    d1, d2 = grad_w_G(s, x, v1, v2, y, w1, w2)
    return np.hypot(d1, d2)


def grad_G_mass(s: float, nodes: int = 96) -> float:
    """``int int |grad_w G| dw dy`` by a product Gauss-Legendre rule.

    Integrates in ``(z, w1, w2)`` with ``z = x - y - s (v1 + w1) / 2`` (unit
    Jacobian), each axis split at the kink through its centre.
    """
    _check_elapsed(s)
    r = 11.0 * math.sqrt(2.0 * s)
    zr = 11.0 * math.sqrt(s**3 / 6.0)
    gx, gw = np.polynomial.legendre.leggauss(nodes)

    def axis(half):
        # two panels [-half, 0] and [0, half]
        pts = np.concatenate([0.5 * half * (gx - 1), 0.5 * half * (gx + 1)])
        wts = np.concatenate([0.5 * half * gw, 0.5 * half * gw])
        return pts, wts

    w1, ww1 = axis(r)
    w2, ww2 = axis(r)
    z, wz = axis(zr)
    total = 0.0
    for k in range(len(z)):
        # x = 0, v = 0, so y = -z - s w1 / 2
        y = -z[k] - 0.5 * s * w1[:, None]
        a = grad_G_abs(s, 0.0, 0.0, 0.0, y, w1[:, None], w2[None, :])
        total += wz[k] * float(ww1 @ a @ ww2)
    return total
