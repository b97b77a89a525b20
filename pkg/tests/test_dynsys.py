"""Boxes, system specs, and the canonical right-hand sides."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nimreg import ExosystemSpec, PlantSpec, ScenarioSets, get_benchmark
from nimreg.dynsys import (
    as_box,
    as_array_rhs,
    augmented_openloop_field,
    box_contains,
    inflate_box,
    sample_box,
    zero_dynamics_field,
)
from nimreg.errors import ConfigError


def test_as_box_normalizes_single_interval():
    box = as_box([-1.0, 2.0])
    assert box.shape == (1, 2)
    assert box[0, 0] == -1.0 and box[0, 1] == 2.0


@pytest.mark.parametrize("bad", [
    [[0.0, 1.0, 2.0]],          # wrong width
    [[1.0, 0.0]],               # lower > upper
    [[0.0, np.inf]],            # non-finite
])
def test_as_box_rejects_malformed(bad):
    with pytest.raises(ConfigError):
        as_box(bad)


def test_as_box_dimension_check():
    with pytest.raises(ConfigError):
        as_box([[0.0, 1.0]], dim=2)


finite_interval = st.tuples(
    st.floats(-100, 100), st.floats(0.001, 50)
).map(lambda p: (p[0], p[0] + p[1]))


@settings(max_examples=100, deadline=None)
@given(iv=finite_interval, factor=st.floats(0, 3), floor=st.floats(0, 1))
def test_inflate_box_contains_original_and_respects_floor(iv, factor, floor):
    box = as_box([iv])
    out = inflate_box(box, factor, floor=floor)
    assert out[0, 0] <= box[0, 0] + 1e-12 and out[0, 1] >= box[0, 1] - 1e-12
    assert out[0, 1] - out[0, 0] >= 2 * floor - 1e-12
    bigger = inflate_box(box, factor + 0.5, floor=floor)
    assert bigger[0, 0] <= out[0, 0] + 1e-12 and bigger[0, 1] >= out[0, 1] - 1e-12


def test_inflate_box_floors_degenerate_axis():
    out = inflate_box(np.array([[2.0, 2.0]]), 0.25, floor=1e-3)
    assert np.allclose(out, [[2.0 - 1e-3, 2.0 + 1e-3]])


def test_sample_box_within_bounds_and_deterministic():
    box = as_box([[-1.0, 1.0], [3.0, 4.0]])
    a = sample_box(box, 100, np.random.default_rng(5))
    b = sample_box(box, 100, np.random.default_rng(5))
    assert a.shape == (2, 100)
    assert np.array_equal(a, b)
    assert box_contains(box, a)


def test_box_contains_margin():
    box = as_box([[0.0, 1.0]])
    assert box_contains(box, np.array([[0.5]]))
    assert not box_contains(box, np.array([[0.05]]), margin=0.1)


# specs -----------------------------------------------------------------------


def test_exosystem_spec_validates_box_rows():
    with pytest.raises(ConfigError):
        ExosystemSpec(r=2, s=lambda w: (w[1], -w[0]), w_box=[[-1.0, 1.0]])


def test_plant_spec_rejects_nonpositive_dim():
    with pytest.raises(ConfigError):
        PlantSpec(n=0, f0=lambda z, w: (), f1=lambda z, e, w: (), q=lambda z, e, w: 0.0)


def test_scenario_sets_e_interval_shapes():
    sets = ScenarioSets(z_box=[[-1, 1]], e_interval=[-0.5, 0.5])
    assert sets.e_interval.shape == (1, 2)
    assert sets.xi_box is None
    with pytest.raises(ConfigError):
        ScenarioSets(z_box=[[-1, 1]], e_interval=[-0.5, 0.5], n_samples=0)


# right-hand sides --------------------------------------------------------------


def test_zero_dynamics_field_harmonic_values():
    bench = get_benchmark("harmonic")
    field = zero_dynamics_field(bench.plant, bench.exo)
    out = field([0.3, 0.8, -0.6])
    # z' = -z + w1, w' = (w2, -w1)
    assert np.allclose(out, [-0.3 + 0.8, -0.6, -0.8], atol=1e-15)


def test_augmented_openloop_field_adds_error_row():
    bench = get_benchmark("harmonic")
    field = augmented_openloop_field(bench.plant, bench.exo, u=0.5)
    z, zeta, w1, w2 = 0.3, 0.2, 0.8, -0.6
    out = field([z, zeta, w1, w2])
    # z' = f0 + f1 zeta, zeta' = q + u, w' = s(w)
    assert np.allclose(out, [(-z + w1) + 0.1 * zeta,
                             (w1 + zeta * z) + 0.5, w2, -w1], atol=1e-15)


def test_as_array_rhs_batches_columns():
    bench = get_benchmark("harmonic")
    rhs = as_array_rhs(zero_dynamics_field(bench.plant, bench.exo))
    pts = np.array([[0.3, 0.1], [0.8, -0.2], [-0.6, 0.4]])
    out = rhs(pts)
    assert out.shape == pts.shape
    for j in range(2):
        assert np.allclose(out[:, j], rhs(pts[:, j]))
