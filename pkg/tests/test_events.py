import numpy as np
import pytest

from hawkes_em.events import TIE_EPSILON, EventSequence, break_ties
from hawkes_em.utils import ValidationError


def test_from_events_infers_dimension(small_seq):
    """Test building a sequence from sorted events"""
    seq = EventSequence.from_events([0.1, 0.5, 0.7], [2, 0, 1], horizon=1.0)
    assert seq.D == 3
    assert seq.n_events == 3
    np.testing.assert_array_equal(seq.counts(), [1, 1, 1])
    assert small_seq.duration == 4.0


def test_ties_are_spread_in_order():
    """Test that duplicate timestamps become strictly increasing"""
    seq = EventSequence.from_events([0.5, 0.5, 0.5, 0.9], [0, 1, 0, 1], horizon=1.0)
    assert np.all(np.diff(seq.times) > 0)
    assert seq.times[1] == pytest.approx(0.5 + TIE_EPSILON, abs=1e-15)
    assert seq.times[2] == pytest.approx(0.5 + 2 * TIE_EPSILON, abs=1e-15)
    assert seq.times[3] == 0.9


def test_break_ties_leaves_separated_times():
    """Test that distinct times are not moved"""
    times = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(break_ties(times), times)


def test_ties_at_epoch_scale_times():
    """Test tie breaking where 1e-9 is below the float spacing"""
    t0 = 1.7e9
    assert t0 + TIE_EPSILON == t0
    seq = EventSequence.from_events([t0, t0, t0, t0 + 5.0], [0, 1, 0, 1], horizon=t0 + 10.0)
    assert np.all(np.diff(seq.times) > 0)
    assert seq.times[1] == np.nextafter(t0, np.inf)
    assert seq.times[2] - seq.times[0] < 1e-6
    assert seq.times[3] == t0 + 5.0


@pytest.mark.parametrize("times, dims, horizon, invariant", [
    ([0.5, 0.2], [0, 0], 1.0, "sorted-input"),
    ([0.2, 1.0], [0, 0], 1.0, "times-in-window"),
    ([0.2, np.nan], [0, 0], 1.0, "sorted-input"),
])
def test_from_events_rejects_bad_input(times, dims, horizon, invariant):
    """Test that violated invariants are named"""
    with pytest.raises(ValidationError) as excinfo:
        EventSequence.from_events(times, dims, horizon)
    assert excinfo.value.invariant in (invariant, "finite-times")


def test_direct_construction_validates():
    """Test invariants on a directly built sequence"""
    with pytest.raises(ValidationError, match="dims-in-range"):
        EventSequence(np.array([0.1]), np.array([3]), 1.0, 2)
    with pytest.raises(ValidationError, match="positive-horizon"):
        EventSequence(np.array([]), np.array([], dtype=int), 0.0, 1)
    with pytest.raises(ValidationError, match="strictly-increasing"):
        EventSequence(np.array([0.1, 0.1]), np.array([0, 0]), 1.0, 1)


def test_arrays_are_read_only(small_seq):
    """Test that a sequence cannot be mutated in place"""
    with pytest.raises(ValueError):
        small_seq.times[0] = 0.0


def test_window_and_concat(small_seq):
    """Test slicing a window and joining adjacent slices"""
    times, dims = small_seq.window(1.0, 2.5)
    np.testing.assert_array_equal(times, [1.4, 2.2])
    np.testing.assert_array_equal(dims, [0, 1])

    early = EventSequence(small_seq.times[:3], small_seq.dims[:3], 2.0, 2)
    late = EventSequence(small_seq.times[3:], small_seq.dims[3:], 4.0, 2, start=2.0)
    joined = early.concat(late)
    np.testing.assert_array_equal(joined.times, small_seq.times)
    assert joined.start == 0.0 and joined.horizon == 4.0

    with pytest.raises(ValidationError, match="adjacent-windows"):
        late.concat(early)


def test_with_dimensions(small_seq):
    """Test widening the dimension count"""
    wide = small_seq.with_dimensions(5)
    assert wide.D == 5
    np.testing.assert_array_equal(wide.counts(), [3, 3, 0, 0, 0])
