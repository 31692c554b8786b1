import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from vmfp.errors import NonNeutralCharge, NonZeroMeanB, StepMismatch
from vmfp.fields import (
    FieldState, e1_from_density, field_energy, forward_diff, gauss_residual, maxwell_step, potential_A,
)

finite = st.floats(-10, 10, allow_nan=False)


@given(arrays(float, st.sampled_from([4, 16, 64]), elements=finite))
def test_e1_is_zero_mean_antiderivative(q):
    rho = q - q.mean()
    dx = 0.3
    E1 = e1_from_density(rho, dx, neutral_tol=1e-10)
    np.testing.assert_allclose(forward_diff(E1, dx), rho, atol=1e-11)
    assert abs(E1.mean()) < 1e-12 * max(1.0, np.abs(E1).max())


def test_non_neutral_charge_rejected():
    with pytest.raises(NonNeutralCharge):
        e1_from_density(np.full(8, 1e-3), 0.5)


def test_potential_needs_zero_mean_b():
    with pytest.raises(NonZeroMeanB):
        potential_A(np.ones(8), 0.1)
    x = np.arange(32) * 0.25
    B = np.cos(2 * math.pi * x / 8)
    np.testing.assert_allclose(forward_diff(potential_A(B, 0.25), 0.25), B, atol=1e-14)


def test_gauss_residual_zero_for_consistent_fields():
    x = np.arange(16) * 0.5
    rho = np.sin(2 * math.pi * x / 8)
    fs = FieldState(e1_from_density(rho, 0.5), np.zeros(16), np.zeros(16))
    assert gauss_residual(fs, rho, 0.5) < 1e-14


@given(arrays(float, 32, elements=finite), arrays(float, 32, elements=finite))
def test_vacuum_step_shifts_characteristics(e2, b):
    fs = FieldState(np.zeros(32), e2, b)
    z = np.zeros(32)
    out = maxwell_step(fs, z, z, 0.125, 0.125)
    np.testing.assert_allclose(out.E2 + out.B, np.roll(e2 + b, 1), atol=1e-13)
    np.testing.assert_allclose(out.E2 - out.B, np.roll(e2 - b, -1), atol=1e-13)
    assert field_energy(out, 0.125) == pytest.approx(field_energy(fs, 0.125), rel=1e-13, abs=1e-13)


def test_sourced_step_subtracts_face_averaged_current():
    fs = FieldState.zeros(8)
    j2 = np.arange(8.0)
    j1 = np.full(8, 2.0)
    out = maxwell_step(fs, j1, j2, 0.5, 0.5)
    np.testing.assert_allclose(out.E1, -1.0)
    # E2 = -dt * (left-face + right-face average) / 2 = -dt * mean of j2 at i-1, i, i, i+1
    expected = -0.5 * 0.25 * (np.roll(j2, 1) + 2 * j2 + np.roll(j2, -1))
    np.testing.assert_allclose(out.E2, expected)


def test_step_mismatch():
    with pytest.raises(StepMismatch):
        maxwell_step(FieldState.zeros(4), np.zeros(4), np.zeros(4), 0.1, 0.2)


def test_field_energy_and_helpers():
    fs = FieldState(np.ones(10), np.ones(10), np.ones(10))
    assert field_energy(fs, 0.5) == 15.0
    np.testing.assert_allclose(FieldState(np.arange(4.0), np.zeros(4), np.zeros(4)).e1_centers(), [0.5, 1.5, 2.5, 1.5])
    avg = fs.average(FieldState.zeros(10))
    assert np.all(avg.B == 0.5) and fs.is_finite()
    c = fs.copy()
    c.E1[0] = 7
    assert fs.E1[0] == 1


@pytest.mark.parametrize("nx", [32, 64])
def test_antiderivatives_of_a_cosine(nx):
    # cell sums of a midpoint-sampled cosine reproduce the sine at faces up to O(dx^2)
    L, c = 8.0, 0.7
    dx = L / nx
    k = 2 * math.pi / L
    centres = (np.arange(nx) + 0.5) * dx
    faces = np.arange(nx) * dx
    E1 = e1_from_density(c * np.cos(k * centres), dx)
    A = potential_A(np.cos(k * centres), dx)
    np.testing.assert_allclose(E1, c / k * np.sin(k * faces), atol=c / k * (k * dx) ** 2 / 20)
    np.testing.assert_allclose(A, np.sin(k * faces) / k, atol=(k * dx) ** 2 / (20 * k))


def test_field_energy_of_unit_sine():
    x = (np.arange(64) + 0.5) / 64
    fs = FieldState(np.zeros(64), np.sin(2 * math.pi * x), np.zeros(64))
    assert field_energy(fs, 1 / 64) == pytest.approx(0.5, rel=1e-14)
