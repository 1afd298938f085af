import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herdtransfer.errors import DomainError, NoBaselineError
from herdtransfer.metrics import (
    LearningCurve,
    area_under,
    convergence_iteration,
    jumpstart,
    moving_average,
    transfer_rate,
)

GRID = np.arange(50, 5050, 50)


def const(v, grid=GRID):
    return LearningCurve(grid, np.full(len(grid), float(v)))


def test_transfer_rate_identical_is_zero():
    assert transfer_rate(const(37.5), const(37.5)) == 0.0


def test_transfer_rate_double_is_one():
    assert abs(transfer_rate(const(40), const(20)) - 1.0) <= 1e-12


def test_transfer_rate_requires_shared_grid_and_baseline():
    with pytest.raises(DomainError):
        transfer_rate(const(1), const(1, GRID[:-1]))
    with pytest.raises(NoBaselineError):
        transfer_rate(const(5), const(0))


def test_area_is_trapezoid():
    ramp = LearningCurve(np.array([0, 10, 20]), np.array([0.0, 10.0, 10.0]))
    assert area_under(ramp) == 50.0 + 100.0


def test_jumpstart_constant():
    assert abs(jumpstart(const(29)) - 29.0) <= 1e-12


def test_jumpstart_of_sampled_ramp_matches_closed_form():
    n = 200
    its = np.arange(1, n + 1)
    ramp = LearningCurve(its, 100.0 * (its - 1) / (n - 1))
    k = math.ceil(0.05 * n)
    # mean of 100*(i-1)/(n-1) for i = 1..k
    expected = 100.0 * (k - 1) / (2 * (n - 1))
    assert abs(jumpstart(ramp, 0.05) - expected) <= 1e-12


def test_jumpstart_needs_two_samples():
    with pytest.raises(DomainError):
        jumpstart(const(3, GRID[:20]), 0.05)
    with pytest.raises(DomainError):
        jumpstart(const(3), 0.0)


def test_convergence_of_constant_is_first_sample():
    assert convergence_iteration(const(12)) == GRID[0]


@pytest.mark.parametrize("jump_at", [500, 1500, 3000])
def test_convergence_of_step_follows_jump_within_smoothing_lag(jump_at):
    values = np.where(GRID >= jump_at, 80.0, 10.0)
    curve = LearningCurve(GRID, values)
    got = convergence_iteration(curve, tolerance=2, window=20)
    assert jump_at <= got <= jump_at + 20 * 50
    # the moving average is within tolerance exactly after 20 samples minus the slack 70 * (w - j)/w <= 2
    lag = math.ceil(20 * (1 - 2 / 70))
    assert got == jump_at + (lag - 1) * 50


def test_convergence_is_last_iteration_when_never_settling():
    values = np.tile([0.0, 100.0], len(GRID) // 2)
    values[-25:] = np.linspace(0, 100, 25)
    assert convergence_iteration(LearningCurve(GRID, values)) == GRID[-1]


def test_moving_average():
    np.testing.assert_allclose(moving_average(np.array([2.0, 4.0, 6.0, 8.0]), 2), [2.0, 3.0, 5.0, 7.0])


def test_curve_validation():
    with pytest.raises(DomainError):
        LearningCurve(np.array([1, 1]), np.array([0.0, 0.0]))
    with pytest.raises(DomainError):
        LearningCurve(np.array([1, 2]), np.array([0.0, 101.0]))


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(0, 100), min_size=2, max_size=60))
def test_curve_csv_round_trip(values):
    curve = LearningCurve(np.arange(1, len(values) + 1) * 50, np.array(values))
    text = curve.to_csv()
    assert text.splitlines()[:2] == ["# herdtransfer learning curve v1", "iteration,success"]
    assert LearningCurve.from_csv(text) == curve


@settings(max_examples=100, deadline=None)
@given(c=st.floats(0.5, 50), k=st.floats(0.1, 2))
def test_transfer_rate_of_scaled_constants(c, k):
    assert abs(transfer_rate(const(min(100, c * k)), const(c)) - (min(100, c * k) - c) / c) <= 1e-12
