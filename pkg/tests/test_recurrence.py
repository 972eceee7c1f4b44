import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosupo.flow import Trajectory, integrate, uncontrolled
from sosupo.recurrence import (RecurrenceEvent, default_N, extract_segment, load_events,
                               recurrence_value, save_events, scan)
from sosupo.varorbit import cost


def synthetic(fun, t1, t0=0.0):
    """A Trajectory whose interpolant is an analytic curve."""
    return Trajectory(np.array([t0, t1]), np.array([fun(t0), fun(t1)]), lambda t: np.asarray(fun(t)))


def periodic_curve(period, scale=1.0):
    w = 2 * np.pi / period
    return lambda t: scale * np.array([2.0 + np.cos(w * t), np.sin(2 * w * t), 0.5 * np.sin(w * t)])


@pytest.fixture(scope="module")
def circle_traj(circle):
    return integrate(uncontrolled(circle), [1.0, 0.0], (0.0, 40.0), rtol=1e-12, atol=1e-12)


def test_circle_events_at_two_pi(circle_traj):
    events = scan(circle_traj, 1.0, 10.0)
    assert events
    assert events[0].T == pytest.approx(2 * np.pi, abs=1e-4) and events[0].R <= 1e-6
    assert all(e.R <= 0.025 and 1.0 <= e.T <= 10.0 for e in events)
    assert [e.R for e in events] == sorted(e.R for e in events)
    assert all(e.t - e.T >= circle_traj.t0 for e in events)


def test_half_period_is_antipodal(circle_traj):
    assert recurrence_value(circle_traj, 20.0, np.pi) == pytest.approx(2.0, abs=1e-8)
    assert all(abs(e.T - np.pi) > 0.5 for e in scan(circle_traj, 1.0, 10.0))


def test_norm_floor_skips_grid_points():
    traj = synthetic(lambda t: np.zeros((2,) + np.shape(t)), 30.0)
    assert recurrence_value(traj, 20.0, 5.0) == np.inf
    assert scan(traj, 1.0, 10.0) == []


def test_scan_preconditions(circle_traj):
    with pytest.raises(ValueError, match="span"):
        scan(circle_traj, 1.0, 50.0)
    with pytest.raises(ValueError):
        scan(circle_traj, 5.0, 1.0)


@settings(max_examples=15, deadline=None)
@given(period=st.floats(1.5, 8.0))
def test_exact_periodic_signal_found(period):
    traj = synthetic(periodic_curve(period), 25.0)
    T_max = 9.0
    events = scan(traj, 1.0, T_max)
    assert events
    best = events[0]
    assert best.R <= 1e-6
    # the best event is the period itself or one of its multiples inside the window
    m = round(best.T / period)
    assert m >= 1 and abs(best.T - m * period) <= T_max / 500


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), t=st.floats(9.0, 20.0), T=st.floats(0.5, 8.0))
def test_recurrence_is_scale_invariant(c, t, T):
    base = synthetic(periodic_curve(3.3), 25.0)
    scaled = synthetic(periodic_curve(3.3, c), 25.0)
    r0, r1 = recurrence_value(base, t, T), recurrence_value(scaled, t, T)
    assert abs(r0 - r1) <= 1e-12 * max(1.0, r0)


def test_extract_segment_on_circle(circle_traj):
    ev = scan(circle_traj, 1.0, 10.0)[0]
    g = extract_segment(circle_traj, ev, 64)
    assert g.N == 64 and g.T == ev.T
    assert np.abs(np.linalg.norm(g.points, axis=1) - 1.0).max() <= 1e-6


def test_extract_segment_errors(circle_traj):
    with pytest.raises(ValueError, match="inside"):
        extract_segment(circle_traj, RecurrenceEvent(3.0, 2 * np.pi, 0.0), 64)
    with pytest.raises(ValueError, match="N >= 16"):
        extract_segment(circle_traj, RecurrenceEvent(20.0, 2 * np.pi, 0.0), 8)


def test_default_N():
    assert default_N(0.1) == 16
    assert default_N(2 * np.pi) == 512
    assert default_N(100.0) == 1024


def test_events_csv_round_trip(circle_traj, tmp_path):
    events = scan(circle_traj, 1.0, 10.0)
    save_events(events, tmp_path / "e.csv")
    assert load_events(tmp_path / "e.csv") == events


def test_controlled_sprott_recurs(sprott_controlled):
    cf, traj = sprott_controlled
    events = scan(traj, 1.0, 20.0)
    assert events and events[0].R < 0.025
    g = extract_segment(traj, events[0], 256, k=cf.k)
    c = cost(g, cf)
    assert np.isfinite(c) and c < 1.0
