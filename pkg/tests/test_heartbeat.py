import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manetfd.fdcore import ConfigurationError
from manetfd.heartbeat import HeartbeatMsg, NodeIndex, hb_init


def test_init():
    s = hb_init("A", 1.0, 2.0, 0.0)
    assert s.vector == {"A": 0}
    assert s.next_emit == 0.0
    assert hb_init("A", 1.0, 2.0, 100.0).next_emit == 100.0


@pytest.mark.parametrize("delta,theta", [(1.0, 1.0), (2.0, 1.0), (0.0, 1.0)])
def test_init_rejects_bad_timing(delta, theta):
    with pytest.raises(ConfigurationError):
        hb_init("A", delta, theta)


def test_tick_emits_on_schedule():
    s = hb_init("A", 1.0, 2.0, 0.0)
    for _ in range(4):
        s.tick(s.next_emit)
    assert s.vector["A"] == 4
    at = s.next_emit
    msg = s.tick(at)
    assert msg.vector == {"A": 5}
    assert s.next_emit == at + 1.0


def test_tick_early_is_silent():
    s = hb_init("A", 1.0, 2.0, 5.0)
    assert s.tick(4.9) is None
    assert s.vector == {"A": 0}


def test_three_ticks():
    s = hb_init("A", 1.0, 2.0, 0.0)
    for t in (0.0, 1.0, 2.0):
        assert s.tick(t) is not None
    assert s.vector == {"A": 3}


def test_tick_after_pause_skips_missed_slots():
    s = hb_init("A", 1.0, 2.0, 0.0)
    s.tick(0.0)
    s.tick(10.5)
    assert s.vector == {"A": 2}
    assert s.next_emit == 11.0


def _with(vector, now=0.0, theta=2.0, index=None):
    s = hb_init("A", 1.0, theta, 0.0, index)
    s.receive(HeartbeatMsg.from_mapping("Z", vector, s.index), now)
    return s


def test_receive_pointwise_max():
    s = hb_init("A", 1.0, 2.0, 0.0)
    s.receive(HeartbeatMsg.from_mapping("X", {"B": 1}, s.index), 0.0)
    s._beats[s._me] = 3
    refreshed = s.receive(HeartbeatMsg.from_mapping("X", {"B": 4, "C": 2}, s.index), 10.0)
    assert s.vector == {"A": 3, "B": 4, "C": 2}
    assert sorted(refreshed) == ["B", "C"]
    assert s.deadlines == {"B": 12.0, "C": 12.0}
    assert "A" not in s.deadlines


def test_receive_same_vector_no_change():
    s = _with({"B": 4}, now=1.0)
    assert s.receive(HeartbeatMsg.from_mapping("X", {"B": 4}, s.index), 5.0) == []
    assert s.deadlines == {"B": 3.0}


def test_receive_lower_entries_ignored():
    s = _with({"B": 4}, now=1.0)
    s.receive(HeartbeatMsg.from_mapping("X", {"B": 2}, s.index), 5.0)
    assert s.vector["B"] == 4


def test_receive_across_indexes():
    a = hb_init("A", 1.0, 2.0, 0.0)
    b = hb_init("B", 1.0, 2.0, 0.0)
    a.receive(b.tick(0.0), 0.5)
    assert a.vector == {"A": 0, "B": 1}


def test_suspicions_threshold():
    s = _with({"B": 1}, now=10.0)
    assert s.suspicions(12.5) == {"B"}
    assert s.suspicions(11.0) == set()
    assert s.suspicions(12.0) == {"B"}


def test_unknown_never_suspected():
    s = hb_init("A", 1.0, 2.0, 0.0, NodeIndex(["A", "B", "C"]))
    assert s.suspicions(1e9) == set()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.dictionaries(st.sampled_from("BCDE"), st.integers(0, 20)),
                          st.floats(0, 5)), max_size=20))
def test_vector_monotone_and_fresh_not_suspected(msgs):
    s = hb_init("A", 1.0, 2.0, 0.0)
    now = 0.0
    last_heard = {}
    for vec, step in msgs:
        now += step
        before = s.vector
        for k in s.receive(HeartbeatMsg.from_mapping("X", vec, s.index), now):
            last_heard[k] = now
        after = s.vector
        assert all(after[k] >= v for k, v in before.items())
        for k, t in last_heard.items():
            if now - t < s.theta:
                assert k not in s.suspicions(now)
