"""Fixed-step RK4 and the embedded 4(5) pair, against closed-form flows."""

import numpy as np
import pytest

from nimreg.errors import ConfigError, IntegrationError
from nimreg.integrators import Trajectory, dopri5, integrate, rk4_fixed


def decay(x):
    return -x


def rotation(x):
    return np.stack([x[1], -x[0]])


def test_rk4_matches_exp_and_shows_fourth_order():
    x0 = np.array([1.0])
    errs = []
    for h in (1e-2, 5e-3):
        traj = rk4_fixed(decay, x0, (0.0, 1.0), h=h)
        errs.append(abs(traj.final[0] - np.exp(-1.0)))
    ratio = errs[0] / errs[1]
    assert 12.0 < ratio < 20.0  # halving h divides the error by ~2^4
    assert errs[1] < 1e-11


def test_rk4_output_grid_lands_on_states():
    traj = rk4_fixed(decay, np.array([2.0]), (0.0, 1.0), h=1e-3, dt_out=0.1)
    assert traj.t.shape == (11,)
    assert np.allclose(traj.t, np.linspace(0, 1, 11), atol=1e-12)
    assert np.allclose(traj.states[:, 0], 2.0 * np.exp(-traj.t), atol=1e-10)


def test_rk4_batched_equals_percolumn():
    x0 = np.array([[1.0, 2.0, -0.5], [0.0, 1.0, 0.3]])
    batch = rk4_fixed(rotation, x0, (0.0, 3.0), h=1e-3, dt_out=0.5)
    for j in range(3):
        single = rk4_fixed(rotation, x0[:, j], (0.0, 3.0), h=1e-3, dt_out=0.5)
        assert np.array_equal(batch.states[:, :, j], single.states)


def test_rk4_deterministic_repeat():
    x0 = np.array([1.0, 0.0])
    a = rk4_fixed(rotation, x0, (0.0, 10.0), h=1e-3, dt_out=0.1)
    b = rk4_fixed(rotation, x0, (0.0, 10.0), h=1e-3, dt_out=0.1)
    assert np.array_equal(a.states, b.states)


def test_rk4_guard_raises_with_partial():
    def blowup(x):
        return x * x

    with pytest.raises(IntegrationError) as exc_info:
        rk4_fixed(blowup, np.array([1.0]), (0.0, 2.0), h=1e-3, guard=100.0)
    err = exc_info.value
    assert err.t_fail is not None and 0.9 < err.t_fail < 1.1  # pole at t = 1
    assert err.partial is None or isinstance(err.partial, Trajectory)


def test_rk4_rejects_bad_step():
    with pytest.raises(ConfigError):
        rk4_fixed(decay, np.array([1.0]), (0.0, 1.0), h=-1e-3)


# dopri ------------------------------------------------------------------------


def test_dopri5_meets_tolerance_on_rotation():
    x0 = np.array([1.0, 0.0])
    traj = dopri5(rotation, x0, (0.0, 10.0), rtol=1e-9, atol=1e-12)
    expect = np.array([np.cos(10.0), -np.sin(10.0)])
    assert np.max(np.abs(traj.final - expect)) < 1e-7


def test_dopri5_dense_output_between_steps():
    traj = dopri5(decay, np.array([1.0]), (0.0, 2.0), rtol=1e-9, atol=1e-12,
                  dt_out=0.05)
    assert np.allclose(traj.t, np.arange(0.0, 2.0 + 1e-12, 0.05), atol=1e-12)
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-traj.t))) < 1e-7


def test_dopri5_guard():
    def blowup(x):
        return x * x

    with pytest.raises(IntegrationError):
        dopri5(blowup, np.array([1.0]), (0.0, 2.0), guard=1e6)


def test_integrate_dispatch_and_unknown_method():
    traj = integrate(decay, np.array([1.0]), (0.0, 1.0), method="rk4", h=1e-3)
    assert abs(traj.final[0] - np.exp(-1.0)) < 1e-10
    with pytest.raises(ConfigError):
        integrate(decay, np.array([1.0]), (0.0, 1.0), method="euler")


def test_trajectory_final_row():
    traj = rk4_fixed(decay, np.array([1.0, 2.0]), (0.0, 0.5), h=1e-2, dt_out=0.25)
    assert np.array_equal(traj.final, traj.states[-1])
    assert traj.t[-1] == 0.5
