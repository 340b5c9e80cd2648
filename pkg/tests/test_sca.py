import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secrel.sca import (
    DinkelbachError,
    dinkelbach_loop,
    dinkelbach_update,
    taylor_log_lower,
    taylor_square_lower,
)


def test_taylor_log_hand_values():
    val, _ = taylor_log_lower(1.0, 2.0, 2.0)
    assert val == pytest.approx(np.log2(1.5), abs=1e-12)
    val, _ = taylor_log_lower(1.0, 2.0, 4.0)
    assert val == pytest.approx(0.10406, abs=1e-5)
    assert val <= np.log2(1.25)
    val, (b0, b1) = taylor_log_lower(0.0, 3.0, np.array([1.0, 10.0]))
    assert np.all(val == 0.0) and b0 == 0.0 and b1 == 0.0


def test_taylor_log_rejects_bad_input():
    with pytest.raises(ValueError):
        taylor_log_lower(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        taylor_log_lower(-1.0, 1.0, 1.0)


def test_taylor_square_hand_values():
    assert taylor_square_lower(3.0, 3.0)[0] == 9.0
    assert taylor_square_lower(3.0, 5.0)[0] == 21.0
    assert taylor_square_lower(0.0, 7.0)[0] == 0.0


@given(st.floats(0.0, 1e6), st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
@settings(max_examples=200, deadline=None)
def test_taylor_log_is_lower_bound(p, w_star, w):
    val, (b0, b1) = taylor_log_lower(p, w_star, w)
    exact = np.log2(1 + p / w)
    assert val <= exact + 1e-12 * (1 + abs(exact))
    assert val == pytest.approx(b0 + b1 * w, rel=1e-12, abs=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=200, deadline=None)
def test_taylor_square_is_lower_bound(x_star, x):
    assert taylor_square_lower(x_star, x)[0] <= x * x + 1e-9 * (1 + x * x)


def test_dinkelbach_update():
    assert dinkelbach_update(10.0, 100.0) == 0.1
    assert dinkelbach_update(0.0, 100.0) == 0.0
    with pytest.raises(ValueError):
        dinkelbach_update(1.0, 0.0)


def _toy():
    # maximize (2x - x^2) / x on [0.5, 1.5]
    def inner(lam):
        x = float(np.clip(1.0 - lam / 2.0, 0.5, 1.5))
        return 2 * x - x * x - lam * x, x

    def fraction(x):
        return 2 * x - x * x, x

    return inner, fraction


def test_dinkelbach_toy_matches_grid_oracle():
    inner, fraction = _toy()
    out = dinkelbach_loop(inner, fraction, lam0=0.0, tol=1e-10)
    grid = np.linspace(0.5, 1.5, 100_001)
    best = np.max((2 * grid - grid ** 2) / grid)
    assert out.converged
    assert out.lam == pytest.approx(best, abs=1e-9)
    assert out.lam_nondecreasing()
    assert abs(out.F_values[-1]) <= 1e-10


def test_dinkelbach_zero_numerator_and_infinite_tol():
    out = dinkelbach_loop(lambda lam: (0.0, 1.0), lambda c: (0.0, 5.0), lam0=0.0)
    assert out.converged and out.lam == 0.0 and len(out.steps) == 1
    inner, fraction = _toy()
    out = dinkelbach_loop(inner, fraction, lam0=0.0, tol=np.inf)
    assert len(out.steps) == 1 and out.converged


def test_dinkelbach_stops_at_max_iter():
    inner, fraction = _toy()
    out = dinkelbach_loop(inner, fraction, lam0=-5.0, tol=0.0, max_iter=2)
    assert not out.converged and len(out.steps) == 2


def test_dinkelbach_wraps_inner_failure():
    def inner(lam):
        raise RuntimeError("boom")

    with pytest.raises(DinkelbachError) as info:
        dinkelbach_loop(inner, lambda c: (1.0, 1.0), 0.0)
    assert info.value.iteration == 0
