"""Electromagnetic state, its constrained initialisation and the exact-shift Maxwell update.

Staggering: ``E2`` and ``B`` are sampled at x-cell centres.  ``E1`` and the
potential ``A`` are periodic antiderivatives and are sampled at the *left
face* of each cell (``x_i - dx/2``), so that the forward difference
``(E1[i+1] - E1[i]) / dx`` is centred on cell ``i`` where ``rho`` lives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonNeutralCharge, NonZeroMeanB, StepMismatch


@dataclass
class FieldState:
    E1: np.ndarray
    E2: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.E1 = np.asarray(self.E1, dtype=float)
        self.E2 = np.asarray(self.E2, dtype=float)
        self.B = np.asarray(self.B, dtype=float)

    @classmethod
    def zeros(cls, nx: int) -> "FieldState":
        return cls(np.zeros(nx), np.zeros(nx), np.zeros(nx))

    def copy(self) -> "FieldState":
        return FieldState(self.E1.copy(), self.E2.copy(), self.B.copy())

    def e1_centers(self) -> np.ndarray:
        return 0.5 * (self.E1 + np.roll(self.E1, -1))

    def average(self, other: "FieldState") -> "FieldState":
        return FieldState(
            0.5 * (self.E1 + other.E1), 0.5 * (self.E2 + other.E2), 0.5 * (self.B + other.B)
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.E1)) and np.all(np.isfinite(self.E2)) and np.all(np.isfinite(self.B)))


@dataclass
class Background:
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)


def forward_diff(u: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(u, -1) - u) / dx


def _zero_mean_antiderivative(q: np.ndarray, dx: float) -> np.ndarray:
    prim = np.empty_like(q)
    prim[0] = 0.0
    np.cumsum(q[:-1] * dx, out=prim[1:])
    return prim - np.mean(prim)


def e1_from_density(rho: np.ndarray, dx: float, neutral_tol: float = 1e-12) -> np.ndarray:
    """Zero-mean periodic antiderivative of the charge density.

    Raises :class:`NonNeutralCharge` when ``sum(rho) dx`` is not zero within
    ``neutral_tol`` (relative to the total absolute charge when that exceeds 1).
    """
    rho = np.asarray(rho, dtype=float)
    net = float(np.sum(rho) * dx)
    scale = max(1.0, float(np.sum(np.abs(rho)) * dx))
    if abs(net) > neutral_tol * scale:
        raise NonNeutralCharge(f"net charge {net:.3e} exceeds tolerance {neutral_tol:g}")
    return _zero_mean_antiderivative(rho, dx)


def potential_A(B: np.ndarray, dx: float, tol: float = 1e-12) -> np.ndarray:
    """Zero-mean periodic potential with ``D+ A = B``."""
    B = np.asarray(B, dtype=float)
    net = float(np.sum(B) * dx)
    scale = max(1.0, float(np.sum(np.abs(B)) * dx))
    if abs(net) > tol * scale:
        raise NonZeroMeanB(f"sum(B) dx = {net:.3e}; a periodic potential needs zero-mean B")
    return _zero_mean_antiderivative(B, dx)


def gauss_residual(fs: FieldState, rho: np.ndarray, dx: float) -> float:
    return float(np.max(np.abs(forward_diff(fs.E1, dx) - rho)))


def maxwell_step(fs: FieldState, j1: np.ndarray, j2: np.ndarray, dt: float, dx: float) -> FieldState:
    """Advance the fields by one exact-shift step ``dt == dx``.

    ``j2`` is the current at the step midpoint, sampled at cell centres; it is
    averaged onto the face crossed by each characteristic.  ``j1`` is the
    current through the left face of each cell (where ``E1`` lives), averaged
    over the step.
    """
    if abs(dt - dx) > 1e-12 * dx:
        raise StepMismatch(f"exact-shift Maxwell step needs dt == dx (dt={dt!r}, dx={dx!r})")
    j2 = np.asarray(j2, dtype=float)
    plus = fs.E2 + fs.B
    minus = fs.E2 - fs.B
    # right-mover crosses the face between i-1 and i, left-mover between i and i+1
    j_left_face = 0.5 * (j2 + np.roll(j2, 1))
    j_right_face = 0.5 * (j2 + np.roll(j2, -1))
    plus_new = np.roll(plus, 1) - dt * j_left_face
    minus_new = np.roll(minus, -1) - dt * j_right_face
    return FieldState(
        fs.E1 - dt * np.asarray(j1, dtype=float),
        0.5 * (plus_new + minus_new),
        0.5 * (plus_new - minus_new),
    )


def field_energy(fs: FieldState, dx: float) -> float:
    return float(np.sum(fs.E1**2 + fs.E2**2 + fs.B**2) * dx)
