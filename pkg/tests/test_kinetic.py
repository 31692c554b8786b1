import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfp import kinetic
from vmfp.errors import CflViolation, StepMismatch
from vmfp.fields import FieldState, gauss_residual
from vmfp.kinetic import (
    ForceOptions, accelerate_v, advect_x, charge_current, cutoff_psi, cutoff_psi_R, diffuse_v,
    force_free_step, friction_step, lorentz_force, vmfp_step,
)
from vmfp.phase_space import DistField, PhaseGrid, moment_density, total_mass

from conftest import maxwellian_state


def maxwellian(grid, u2=0.0):
    v1, v2 = grid.vmesh()
    m = np.exp(-(v1**2 + (v2 - u2) ** 2) / 2) / (2 * math.pi)
    return DistField(grid, np.broadcast_to(m, grid.shape).copy())


def test_cutoff_profile():
    assert cutoff_psi(-1.0) == 1.0 and cutoff_psi(-3.0) == 1.0
    assert cutoff_psi(0.0) == 0.0 and cutoff_psi(2.0) == 0.0
    assert cutoff_psi(-0.5) == pytest.approx(0.5)
    # C^2 at the joins: one-sided first and second differences vanish like h^3
    h = 1e-3
    for s0 in (-1.0, 0.0):
        inner = s0 + (h if s0 == -1.0 else -h)
        assert abs(cutoff_psi(inner) - cutoff_psi(s0)) < 20 * h**3
    s = np.linspace(-1, 0, 101)
    assert np.all(np.diff(cutoff_psi(s)) <= 0)
    assert cutoff_psi_R(3.0, 4.0, 6.0) == 1.0 and cutoff_psi_R(3.0, 4.0, 5.0) == 0.0


def test_advect_integer_displacement_is_a_roll():
    # dx = dv = 1 and dt = 2 move every line by an odd whole number of cells
    g = PhaseGrid(16, 16.0, 8, 4.0)
    f = DistField(g, np.random.default_rng(1).random(g.shape))
    out = advect_x(f, 2.0)
    for k, v in enumerate(g.v):
        assert np.array_equal(out.values[:, k], np.roll(f.values[:, k], int(round(2 * v)), axis=0))


@given(seed=st.integers(0, 2**16), dt=st.floats(0.01, 3.0))
def test_advect_conserves_and_bounds(seed, dt):
    g = PhaseGrid(16, 4.0, 8, 3.0)
    f = DistField(g, np.random.default_rng(seed).random(g.shape))
    out = advect_x(f, dt)
    assert total_mass(out) == pytest.approx(total_mass(f), rel=1e-13)
    assert out.values.min() >= -1e-15
    assert out.values.max() <= f.values.max() * (1 + 1e-14)
    # per-velocity line mass is conserved separately
    np.testing.assert_allclose(out.values.sum(axis=0), f.values.sum(axis=0), rtol=1e-12)


def test_lorentz_force_components():
    fs = FieldState(np.full(3, 0.2), np.full(3, 0.3), np.full(3, 0.5))
    v1 = np.array([1.0, 10.0])
    v2 = np.array([2.0, 0.0])
    K1, K2 = lorentz_force(fs, v1, v2)
    np.testing.assert_allclose(K1[0], [0.2 + 2.0 * 0.5, 0.2])
    np.testing.assert_allclose(K2[0], [0.3 - 0.5, 0.3 - 5.0])
    K1, K2 = lorentz_force(fs, v1, v2, ForceOptions(cutoff_R=4.0))
    np.testing.assert_allclose(K1[0], [1.2, 0.2])
    np.testing.assert_allclose(K2[0], [-0.2, 0.3])


def test_accelerate_shifts_mean_velocity():
    # constant E1 moves the first moment by E1 dt; third-order in dv
    errs = []
    for nv in (32, 64):
        g = PhaseGrid(4, 1.0, nv, 8.0)
        out = accelerate_v(maxwellian(g), FieldState(np.full(4, 0.3), np.zeros(4), np.zeros(4)), 0.1)
        u1 = moment_density(out, lambda a, b: a + 0 * b) / moment_density(out)
        errs.append(abs(u1[0] - 0.03))
        assert total_mass(out) == pytest.approx(total_mass(maxwellian(g)), rel=1e-13)
    assert errs[1] < 1e-5 and errs[0] / errs[1] > 8


def test_accelerate_cfl_guard():
    g = PhaseGrid(4, 1.0, 8, 4.0)
    fs = FieldState(np.full(4, 100.0), np.zeros(4), np.zeros(4))
    with pytest.raises(CflViolation):
        accelerate_v(maxwellian(g), fs, 0.1)
    with pytest.raises(ValueError):
        accelerate_v(maxwellian(g), fs, 0.0)


def test_diffusion_adds_two_t_to_variance():
    # wide box so that the truncated tail is below round-off
    g = PhaseGrid(2, 1.0, 128, 16.0)
    f = maxwellian(g)
    out = diffuse_v(f, 0.5)
    n = moment_density(out)
    var = moment_density(out, lambda a, b: a * a + 0 * b) / n
    var0 = moment_density(f, lambda a, b: a * a + 0 * b) / moment_density(f)
    np.testing.assert_allclose(var - var0, 1.0, rtol=1e-9)
    assert total_mass(out) == pytest.approx(total_mass(f), rel=1e-9)


def test_diffusion_semigroup_and_positivity():
    g = PhaseGrid(2, 1.0, 32, 8.0)
    f = maxwellian(g)
    a = diffuse_v(diffuse_v(f, 0.2), 0.3)
    b = diffuse_v(f, 0.5)
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)
    spike = DistField.zeros(g)
    spike.values[:, 16, 16] = 1.0
    out = diffuse_v(spike, 0.3)
    assert out.values.min() >= 0 and out.values.max() <= 1.0


def test_friction_contracts_mean_and_conserves_mass():
    g = PhaseGrid(2, 1.0, 64, 8.0)
    f = maxwellian(g, u2=1.0)
    out = friction_step(f, 0.2)
    u2 = moment_density(out, lambda a, b: b + 0 * a) / moment_density(out)
    np.testing.assert_allclose(u2, math.exp(-0.2), rtol=1e-6)
    assert total_mass(out) == pytest.approx(total_mass(f), rel=1e-14)


def test_maxwellian_is_stationary_under_friction_and_diffusion():
    errs = []
    for nv in (32, 64):
        g = PhaseGrid(2, 1.0, nv, 8.0)
        m = maxwellian(g)
        h = friction_step(diffuse_v(friction_step(m, 0.05), 0.1), 0.05)
        errs.append(np.abs(h.values - m.values).max())
    assert errs[1] < 5e-4 and errs[0] / errs[1] > 3.5


def test_force_free_step_conserves_mass():
    g = PhaseGrid(8, 2.0, 32, 8.0)
    v1, v2 = g.vmesh()
    f = DistField(g, np.broadcast_to(np.exp(-(v1**2 + v2**2)), g.shape).copy())
    assert total_mass(force_free_step(f, 0.3)) == pytest.approx(total_mass(f), rel=1e-12)


def test_vmfp_step_invariants(small_state):
    s = small_state
    m0 = total_mass(s.f)
    fmax = s.f.values.max()
    for _ in range(4):
        s = vmfp_step(s, s.f.grid.dx)
        assert abs(total_mass(s.f) + s.leak - m0) <= 1e-13 * m0
        assert s.f.values.min() >= -1e-12 * fmax
        assert s.f.values.max() <= fmax * (1 + 1e-12)
    assert s.t == pytest.approx(4 * s.f.grid.dx)


def test_gauss_law_defect_bounded_by_leak():
    s = maxwellian_state(PhaseGrid(16, 4.0, 16, 6.0), u2=0.5, e2=0.05, b=0.05)
    opts = ForceOptions(friction=True)
    for _ in range(8):
        s = vmfp_step(s, s.f.grid.dx, opts)
    rho, _ = charge_current(s.f, s.bg)
    res = gauss_residual(s.fields, rho, s.f.grid.dx)
    assert s.leak > 0
    assert res <= s.leak / s.f.grid.dx


def test_vmfp_step_requires_dt_equal_dx(small_state):
    with pytest.raises(StepMismatch):
        vmfp_step(small_state, 0.5 * small_state.f.grid.dx)


@pytest.mark.parametrize("threads", [2, 3, 5])
def test_threads_do_not_change_results(small_state, threads):
    def run(n):
        kinetic.set_threads(n)
        try:
            s = small_state.copy()
            for _ in range(3):
                s = vmfp_step(s, s.f.grid.dx, ForceOptions(friction=True))
            return s
        finally:
            kinetic.set_threads(1)

    a, b = run(1), run(threads)
    assert np.array_equal(a.f.values, b.f.values)
    assert np.array_equal(a.fields.E2, b.fields.E2) and a.leak == b.leak


def test_set_threads_rejects_zero():
    with pytest.raises(ValueError):
        kinetic.set_threads(0)


def test_advected_bump_centroid():
    g = PhaseGrid(64, 16.0, 8, 4.0)
    x = g.x
    bump = np.exp(-((x - 8.0) ** 2) / 2)
    f = DistField(g, np.broadcast_to(bump[:, None, None], g.shape).copy())
    out = advect_x(f, 0.25)
    for k, v in enumerate(g.v):
        col = out.values[:, k, 0]
        centroid = np.sum(x * col) / np.sum(col)
        assert abs(centroid - (8.0 + 0.25 * v)) <= g.dx**2


def test_friction_shrinks_variance():
    # Ornstein-Uhlenbeck drift without noise: variance sigma^2 -> sigma^2 exp(-2 dt),
    # reproduced to second order in dv by the cell-average remap
    errs = []
    for nv in (64, 128):
        g = PhaseGrid(2, 1.0, nv, 8.0)
        f = maxwellian(g)
        out = friction_step(f, 0.3)
        var = moment_density(out, lambda a, b: a * a + 0 * b) / moment_density(out)
        errs.append(abs(var[0] - math.exp(-0.6)))
        assert total_mass(out) == pytest.approx(total_mass(f), rel=1e-14)
    assert errs[1] < 1e-3 and math.log2(errs[0] / errs[1]) >= 1.8


def test_beam_current_is_mass_times_drift():
    g = PhaseGrid(4, 1.0, 64, 8.0)
    f = maxwellian(g, u2=1.0)
    rho, (j1, j2) = charge_current(f, kinetic.Background(moment_density(f)))
    # the drifted tail cut by the box edge is ~e^-24
    np.testing.assert_allclose(j2, moment_density(f) * 1.0, rtol=1e-10)
    np.testing.assert_allclose(j1, 0.0, atol=1e-15)
    assert np.all(rho == 0)
