import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modecal.space import (MODES, InterceptConfig, ParameterSpace, centered_space, parse_space,
                           sample_uniform, validate)


def test_modes_fixed_order():
    assert MODES == ("bike", "car", "drive-transit", "ride-hail", "ride-hail-pooled",
                     "ride-hail-transit", "walk", "walk-transit")


def test_sample_within_bounds(rng):
    space = ParameterSpace.uniform(-20, 20)
    for _ in range(100):
        x = sample_uniform(space, rng).values
        assert x.shape == (8,)
        assert np.all((x >= -20) & (x <= 20))


def test_point_space_gives_zero_vector(rng):
    space = ParameterSpace.uniform(0.0, 0.0)
    assert np.array_equal(sample_uniform(space, rng).values, np.zeros(8))


def test_uniform_mean_law_of_large_numbers():
    space = ParameterSpace.uniform(-100, 100)
    rng = np.random.default_rng(7)
    draws = np.array([sample_uniform(space, rng).values for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0)) < 1.0)


def test_sampling_is_deterministic():
    space = ParameterSpace.uniform(-20, 20)
    a = sample_uniform(space, np.random.default_rng(3)).values
    b = sample_uniform(space, np.random.default_rng(3)).values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("center,half,floor,expected", [
    (10.0, 0.20, 1.0, (8.0, 12.0)),
    (0.0, 0.20, 1.0, (-1.0, 1.0)),
    (-5.0, 0.05, 0.1, (-5.25, -4.75)),
])
def test_centered_space_arithmetic(center, half, floor, expected):
    sp = centered_space(np.full(8, center), half, floor)
    assert np.allclose(sp.lower, expected[0])
    assert np.allclose(sp.upper, expected[1])


def test_validate_closed_bounds():
    space = ParameterSpace.uniform(-20, 20)
    assert validate(InterceptConfig(np.zeros(8)), space) == []
    at_edge = np.zeros(8)
    at_edge[3] = 20.0
    assert validate(InterceptConfig(at_edge), space) == []
    bad = np.zeros(8)
    bad[1] = 21.0
    (v,) = validate(InterceptConfig(bad), space)
    assert v.name == "car" and v.value == 21.0
    assert "car" in str(v)


def test_space_invariants():
    with pytest.raises(ValueError):
        ParameterSpace.from_bounds({m: [1, 0] for m in MODES})
    with pytest.raises(ValueError):
        ParameterSpace.from_bounds({m: [0, 1] for m in MODES[:7]})


def test_parse_space_forms():
    truth = InterceptConfig(np.linspace(-8, -5, 8))
    sp = parse_space({"center": "truth", "pct": 20, "floor": 0}, center=truth)
    assert np.allclose(sp.upper - sp.lower, 0.4 * np.abs(truth.values))
    sp = parse_space({"bounds": {m: [-1, 2] for m in MODES}})
    assert np.allclose(sp.lower, -1) and np.allclose(sp.upper, 2)
    with pytest.raises(ValueError):
        parse_space({"center": "truth"})
    with pytest.raises(ValueError):
        parse_space({"nonsense": 1})


def test_config_dict_round_trip():
    c = InterceptConfig(np.arange(8.0), id="1-2")
    back = InterceptConfig.from_dict(c.as_dict(), id="1-2")
    assert np.array_equal(back.values, c.values) and back.id == "1-2"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=8, max_size=8), st.floats(0.01, 1.0), st.floats(0, 2))
def test_centered_space_contains_center(center, half, floor):
    sp = centered_space(np.array(center), half, floor)
    assert validate(InterceptConfig(np.array(center)), sp) == []
