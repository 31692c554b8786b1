import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfp import greens
from vmfp.errors import NonPositiveElapsed
from vmfp.greens import (
    G, KernelEval, apply_H, eval_G, grad_G_mass, grad_w_G, heat_kernel_1d, kernel_normalization,
)
from vmfp.kinetic import force_free_step
from vmfp.phase_space import DistField, PhaseGrid, total_mass, weighted_l2_norm


def smooth(grid):
    v1, v2 = grid.vmesh()
    kx = 2 * math.pi * grid.x / grid.x_len
    m = np.exp(-(v1**2 + v2**2) / 2)
    return DistField(grid, (1 + 0.3 * np.cos(kx))[:, None, None] * m[None])


@pytest.mark.parametrize("s", [0.05, 0.5, 2.0])
def test_kernel_integrates_to_one(s):
    assert kernel_normalization(s, x=0.3, v=(0.7, -1.1)) == pytest.approx(1.0, abs=1e-6)


def test_broken_kernel_is_detected(monkeypatch):
    monkeypatch.setattr(greens, "_X_EXPONENT_TIME_FACTOR", 2.0)
    assert abs(kernel_normalization(0.5) - 1.0) > 0.5


def test_kernel_closed_form_point():
    # s = 1, x = y, v = w = 0: (4 pi)^-1 (pi/3)^-1/2
    expected = 1 / (4 * math.pi) / math.sqrt(math.pi / 3)
    assert eval_G(KernelEval(1.0, 0.0, (0.0, 0.0), 0.0, (0.0, 0.0))) == pytest.approx(expected, rel=1e-15)


@given(
    s=st.floats(0.1, 2.0), x=st.floats(-2, 2), y=st.floats(-2, 2),
    v1=st.floats(-2, 2), v2=st.floats(-2, 2), w1=st.floats(-2, 2), w2=st.floats(-2, 2),
)
def test_grad_w_matches_finite_difference(s, x, y, v1, v2, w1, w2):
    h = 1e-5
    d1, d2 = grad_w_G(s, x, v1, v2, y, w1, w2)
    fd1 = (G(s, x, v1, v2, y, w1 + h, w2) - G(s, x, v1, v2, y, w1 - h, w2)) / (2 * h)
    fd2 = (G(s, x, v1, v2, y, w1, w2 + h) - G(s, x, v1, v2, y, w1, w2 - h)) / (2 * h)
    scale = G(s, x, v1, v2, y, w1, w2) / s**2 + 1e-300
    assert abs(d1 - fd1) <= 1e-5 * scale + 1e-12
    assert abs(d2 - fd2) <= 1e-5 * scale + 1e-12


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_elapsed_time_must_be_positive(s):
    with pytest.raises(NonPositiveElapsed):
        G(s, 0, 0, 0, 0, 0, 0)
    with pytest.raises(NonPositiveElapsed):
        heat_kernel_1d(s, 0.1)


@given(s=st.floats(0.05, 4.0), dv=st.sampled_from([0.125, 0.25]))
def test_lattice_heat_kernel_moments(s, dv):
    d, w = heat_kernel_1d(s, dv)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.dot(w, d) == pytest.approx(0.0, abs=1e-15)
    assert np.dot(w, (d * dv) ** 2) == pytest.approx(2 * s, rel=1e-9)


def test_grad_mass_scales_like_inverse_sqrt():
    assert grad_G_mass(0.04) / grad_G_mass(1.0) == pytest.approx(5.0, rel=1e-3)


def test_apply_H_agrees_with_force_free_solver():
    g = PhaseGrid(32, 8.0, 32, 8.0)
    f0 = smooth(g)
    t = 0.5
    exact = apply_H(f0, t)
    f = f0
    for _ in range(4):
        f = force_free_step(f, t / 4)
    rel = weighted_l2_norm(exact - f) / weighted_l2_norm(exact)
    assert rel < 1e-2
    assert total_mass(exact) == pytest.approx(total_mass(f0), rel=1e-6)


def test_apply_H_semigroup_converges():
    errs = []
    for nx, nv in ((16, 32), (32, 64)):
        f0 = smooth(PhaseGrid(nx, 8.0, nv, 8.0))
        a = apply_H(apply_H(f0, 0.2), 0.3)
        b = apply_H(f0, 0.5)
        errs.append(weighted_l2_norm(a - b) / weighted_l2_norm(b))
    assert errs[0] / errs[1] > 3.5


def test_apply_H_adds_two_t_to_velocity_variance():
    g = PhaseGrid(4, 8.0, 128, 16.0)
    v1, v2 = g.vmesh()
    f0 = DistField(g, np.broadcast_to(np.exp(-(v1**2 + v2**2) / 2), g.shape).copy())
    out = apply_H(f0, 0.4)
    n = out.values.sum(axis=(1, 2))
    var = np.sum(out.values * (v1 * v1)[None], axis=(1, 2)) / n
    np.testing.assert_allclose(var, 1.0 + 0.8, rtol=1e-8)
