import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gne_mesh.trigger import (
    TriggerError,
    TriggerLog,
    TriggerSchedule,
    threshold_summability_check,
    should_transmit,
    threshold_at,
)

S = TriggerSchedule.uniform(5, 20.0, 0.8)


def test_threshold_examples():
    assert threshold_at(S, 0, 0) == 20.0
    assert threshold_at(S, 3, 1) == 16.0
    k = int(np.ceil(np.log(20.0 * 1e12) / np.log(1 / 0.8)))
    assert threshold_at(S, 2, k) < 1e-12
    with pytest.raises(TriggerError):
        threshold_at(S, 0, -1)


@given(st.floats(0.01, 100), st.floats(0.01, 0.99), st.integers(0, 500))
def test_thresholds_decrease(B, alpha, k):
    s = TriggerSchedule.uniform(1, B, alpha)
    # strict decrease holds until the threshold underflows to subnormals
    assume(threshold_at(s, 0, k + 1) > 1e-300)
    assert threshold_at(s, 0, k + 1) < threshold_at(s, 0, k)


def test_should_transmit():
    assert should_transmit([1.0], [1.0], 0.0)
    assert should_transmit([3.0, 4.0], [0.0, 0.0], 5.0)
    assert not should_transmit([3.0, 4.0], [0.0, 0.0], 5.01)
    with pytest.raises(TriggerError, match="dimension"):
        should_transmit([1.0, 2.0], [1.0], 0.0)


def test_threshold_summability():
    rep = threshold_summability_check(S, 0.7, 1000)
    assert rep.summable
    assert abs(rep.limit - rep.partial_sum) < 1e-6
    # oracle: direct summation far past the horizon
    direct = sum((k + 1) ** -0.7 * (20 * 0.8**k) ** 2 for k in range(5000))
    assert rep.limit == pytest.approx(direct, rel=1e-12)
    zero = threshold_summability_check(TriggerSchedule.uniform(2, 0.0, 0.5), 0.7, 10)
    assert zero.summable and zero.limit == 0.0
    with pytest.raises(TriggerError):
        threshold_summability_check(S, 0.4, 10)


def test_constant_threshold_rejected():
    with pytest.raises(TriggerError, match=r"\(0, 1\)"):
        TriggerSchedule.uniform(5, 20.0, 1.0)
    with pytest.raises(TriggerError):
        TriggerSchedule.uniform(5, -1.0, 0.5)


def test_heterogeneous_and_broadcast():
    s = TriggerSchedule(np.array([1.0, 2.0]), np.array([0.5, 0.9]))
    np.testing.assert_allclose(s.thresholds(2), [0.25, 2 * 0.81])
    assert TriggerSchedule(np.array([3.0]), np.array([0.5])).for_players(4).B.size == 4
    with pytest.raises(TriggerError):
        s.for_players(3)


def test_log_csv_roundtrip(tmp_path):
    fired = np.zeros((6, 3), dtype=bool)
    fired[0] = True
    fired[[2, 4], 1] = True
    log = TriggerLog.from_matrix(fired)
    assert log.counts == [1, 3, 1]
    assert log.counts == [len(v) for v in log.instants]
    p = tmp_path / "t.csv"
    log.to_csv(p)
    assert p.read_text().splitlines()[0] == "player,iteration"
    back = TriggerLog.from_csv(p, 3)
    assert back.instants == log.instants
