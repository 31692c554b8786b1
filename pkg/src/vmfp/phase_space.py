"""Phase-space grid, distribution field, velocity weights and weighted norms.

The x-interval ``[0, x_len)`` is periodic and split into ``nx`` cells; the
velocity box ``[-v_max, v_max]^2`` is split into ``nv`` cells per axis.
All samples live at cell centres and every integral is the midpoint rule
with cell volume ``dx * dv**2``.  Arrays are indexed ``[x, v1, v2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    nx: int
    x_len: float
    nv: int
    v_max: float

    def __post_init__(self):
        if not _is_pow2(int(self.nx)) or not _is_pow2(int(self.nv)):
            raise ValueError(f"nx and nv must be powers of two, got nx={self.nx}, nv={self.nv}")
        if not (self.x_len > 0 and self.v_max > 0):
            raise ValueError("x_len and v_max must be positive")

    @property
    def dx(self) -> float:
        return self.x_len / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.nv

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @cached_property
    def x_faces(self) -> np.ndarray:
        """Left face of every x-cell; antiderivatives (E1, A) live here."""
        return np.arange(self.nx) * self.dx

    @cached_property
    def v(self) -> np.ndarray:
        # built from the symmetric half so that v[k] == -v[nv-1-k] bit-exactly
        half = (np.arange(self.nv // 2) + 0.5) * self.dv
        return np.concatenate([-half[::-1], half])

    @cached_property
    def v_faces(self) -> np.ndarray:
        half = np.arange(self.nv // 2 + 1) * self.dv
        return np.concatenate([-half[:0:-1], half])

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dv**2

    @property
    def shape(self) -> tuple:
        return (self.nx, self.nv, self.nv)

    def vmesh(self):
        """Return ``(v1, v2)`` broadcastable to ``(nv, nv)``."""
        return self.v[:, None], self.v[None, :]

    def refined(self, factor: int = 2) -> "PhaseGrid":
        return PhaseGrid(self.nx * factor, self.x_len, self.nv * factor, self.v_max)


@dataclass
class DistField:
    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    def copy(self) -> "DistField":
        return DistField(self.grid, self.values.copy())

    @classmethod
    def zeros(cls, grid: PhaseGrid) -> "DistField":
        return cls(grid, np.zeros(grid.shape))

    def __sub__(self, other: "DistField") -> "DistField":
        return DistField(self.grid, self.values - other.values)


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight ``v0**exponent`` (``kind='v0'``) or ``R(v2)**exponent``."""

    kind: str = "v0"
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("v0", "r_v2"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not np.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError("weight exponent must be finite and >= 0")

    def __call__(self, v1, v2):
        if self.kind == "v0":
            return weight_v0(v1, v2, self.exponent)
        return (1.0 + np.asarray(v2, dtype=float) ** 2) ** (0.5 * self.exponent) * np.ones_like(
            np.asarray(v1, dtype=float)
        )


@dataclass(frozen=True)
class ExponentSet:
    a: float = 9.0
    eps: float = 0.5
    delta: float = 12.0

    @property
    def b(self) -> float:
        return self.a - 4.0

    @property
    def alpha(self) -> float:
        return self.a + 2.0 + self.eps

    @property
    def beta(self) -> float:
        return self.b + 2.0 + self.eps

    def violations(self) -> list:
        out = []
        if not self.a > 8:
            out.append("a > 8")
        if not self.eps > 0:
            out.append("eps > 0")
        if not self.delta > self.alpha:
            out.append(f"δ > a+2+ε = {self.alpha:g}")
        return out


def weight_v0(v1, v2, gamma: float):
    """``(1 + v1**2 + v2**2) ** (gamma / 2)``."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    return (1.0 + v1 * v1 + v2 * v2) ** (0.5 * gamma)


def _weight_grid(grid: PhaseGrid, w) -> np.ndarray:
    v1, v2 = grid.vmesh()
    if isinstance(w, WeightSpec):
        return w(v1, v2) * np.ones((grid.nv, grid.nv))
    return weight_v0(v1, v2, float(w))


def weighted_l2_norm(f: DistField, w: Union[WeightSpec, float] = 0.0) -> float:
    """Discrete ``|| w(v) f ||_2`` over phase space.

    ``w`` is a :class:`WeightSpec` or a bare exponent ``gamma`` meaning ``v0**gamma``.
    """
    wg = _weight_grid(f.grid, w)
    return float(np.sqrt(np.sum((wg[None] * f.values) ** 2) * f.grid.cell_volume))


def dx_periodic(values: np.ndarray, dx: float) -> np.ndarray:
    """Centred periodic difference along axis 0."""
    return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2.0 * dx)


def f_norm(f: DistField, exps: ExponentSet) -> float:
    """``||v0^(a/2) f||_2 + ||v0^(b/2) d_x f||_2``."""
    dfx = DistField(f.grid, dx_periodic(f.values, f.grid.dx))
    return weighted_l2_norm(f, exps.a / 2) + weighted_l2_norm(dfx, exps.b / 2)


Kernel = Union[Callable, np.ndarray, float]


def moment_density(f: DistField, kernel: Kernel = 1.0) -> np.ndarray:
    """Per-x-cell velocity moment ``sum_v kernel(v) f dv^2``.

    ``kernel`` may be a callable ``kernel(v1, v2)``, an ``(nv, nv)`` array or a
    scalar.  No background is subtracted.
    """
    g = f.grid
    if callable(kernel):
        v1, v2 = g.vmesh()
        k = np.broadcast_to(kernel(v1, v2), (g.nv, g.nv))
    else:
        k = np.broadcast_to(np.asarray(kernel, dtype=float), (g.nv, g.nv))
    return np.sum(f.values * k[None], axis=(1, 2)) * g.dv**2


def sup_norm_weighted(f: DistField, w: Union[WeightSpec, float] = 0.0) -> float:
    wg = _weight_grid(f.grid, w)
    return float(np.max(wg[None] * np.abs(f.values)))


def total_mass(f: DistField) -> float:
    return float(np.sum(f.values) * f.grid.cell_volume)
