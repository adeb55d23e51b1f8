import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manetfd.fdcore import (ConfigurationError, ProtocolError, QueryMsg, ResponseMsg,
                            RoundStatus, TaggedEntry, fd_init)

from alg_reference import RefNode, view_of


def query(sender, suspected=None, mistake=None, round_id=1):
    return QueryMsg(sender, round_id, dict(suspected or {}), dict(mistake or {}))


def test_init_state():
    s = fd_init("A", f=1, d=3)
    assert (s.counter, s.round_id) == (0, 0)
    assert not s.suspected and not s.mistake and not s.known and not s.rec_from


@pytest.mark.parametrize("f,d", [(1, 2), (0, 1), (5, 6)])
def test_init_rejects_low_density(f, d):
    with pytest.raises(ConfigurationError):
        fd_init("A", f=f, d=d)


def test_init_minimum_sweep_density():
    assert fd_init("A", f=5, d=7).quorum == 2


class TestRound:
    def test_query_carries_snapshot(self):
        s = fd_init("C", 1, 3)
        s.suspected["A"] = 10
        q = s.begin_round()
        assert q.sender == "C" and q.suspected == {"A": 10} and q.mistake == {}
        s.suspected["A"] = 11
        assert q.suspected == {"A": 10}

    def test_fresh_query_empty(self):
        q = fd_init("A", 1, 3).begin_round()
        assert q.round_id == 1 and not q.suspected and not q.mistake

    def test_mistake_in_query_state_unchanged(self):
        s = fd_init("A", 1, 3)
        s.mistake["B"] = 3
        q = s.begin_round()
        assert q.mistake_entries() == [TaggedEntry("B", 3)]
        assert s.mistake == {"B": 3} and s.suspected == {}

    def test_begin_twice_is_misuse(self):
        s = fd_init("A", 1, 3)
        s.begin_round()
        with pytest.raises(ProtocolError):
            s.begin_round()

    def test_rec_from_starts_with_self(self):
        s = fd_init("A", 1, 3)
        s.begin_round()
        assert s.rec_from == {"A"}

    def test_satisfied_at_quorum(self):
        s = fd_init("A", 1, 3)
        q = s.begin_round()
        assert s.on_response(ResponseMsg("B", q.round_id)) is RoundStatus.SATISFIED
        assert s.rec_from == {"A", "B"}
        assert s.on_response(ResponseMsg("B", q.round_id)) is RoundStatus.SATISFIED
        assert len(s.rec_from) == 2

    def test_quorum_two_when_d7_f5(self):
        s = fd_init("A", 5, 7)
        q = s.begin_round()
        assert s.on_response(ResponseMsg("B", q.round_id)) is RoundStatus.SATISFIED

    def test_stale_response_ignored(self):
        s = fd_init("A", 2, 5)
        s.begin_round()
        assert s.on_response(ResponseMsg("B", 0)) is RoundStatus.PENDING
        assert s.rec_from == {"A"}

    def test_harvest(self):
        s = fd_init("A", 1, 3)
        q = s.begin_round()
        s.on_response(ResponseMsg("B", q.round_id))
        s.harvest_response(ResponseMsg("C", q.round_id))
        assert s.rec_from == {"A", "B", "C"}
        s.harvest_response(ResponseMsg("B", q.round_id))
        s.harvest_response(ResponseMsg("D", q.round_id - 1))
        assert s.rec_from == {"A", "B", "C"}

    def test_harvest_before_satisfied_is_misuse(self):
        s = fd_init("A", 2, 5)
        s.begin_round()
        with pytest.raises(ProtocolError):
            s.harvest_response(ResponseMsg("B", 1))

    def test_finish_unsatisfied_is_misuse(self):
        s = fd_init("A", 2, 5)
        s.begin_round()
        with pytest.raises(ProtocolError):
            s.finish_round()


def _satisfied_round(s, responders):
    q = s.begin_round()
    for r in responders:
        if s.satisfied:
            s.harvest_response(ResponseMsg(r, q.round_id))
        else:
            s.on_response(ResponseMsg(r, q.round_id))
    return q


class TestFinishRound:
    def test_suspects_silent_known(self):
        s = fd_init("X", 1, 3)
        s.known = {"A", "B", "C"}
        s.counter = 5
        _satisfied_round(s, ["B"])
        s.finish_round()
        assert s.suspected == {"A": 5, "C": 5}
        assert s.counter == 6

    def test_all_answered(self):
        s = fd_init("X", 1, 3)
        s.known = {"A", "B"}
        s.counter = 2
        _satisfied_round(s, ["A", "B"])
        s.finish_round()
        assert s.suspected == {} and s.counter == 3

    def test_mistake_raises_tag(self):
        s = fd_init("X", 0, 2)
        s.known = {"A"}
        s.mistake = {"A": 9}
        s.counter = 4
        q = s.begin_round()
        s.on_response(ResponseMsg("B", q.round_id))
        s.finish_round()
        assert s.mistake == {}
        assert s.suspected == {"A": 10}
        assert s.counter == 11

    def test_existing_suspicion_kept(self):
        s = fd_init("X", 1, 3)
        s.known = {"A", "B"}
        s.suspected = {"A": 2}
        s.counter = 7
        _satisfied_round(s, ["B"])
        s.finish_round()
        assert s.suspected == {"A": 2}


class TestHandleQuery:
    def test_adopts_fresher_suspicion(self):
        b = fd_init("B", 1, 3)
        b.suspected = {"A": 5}
        resp = b.handle_query(query("C", {"A": 10}, round_id=4))
        assert b.suspected == {"A": 10}
        assert "C" in b.known
        assert resp == ResponseMsg("B", 4)

    def test_discards_older_suspicion(self):
        c = fd_init("C", 1, 3)
        c.suspected = {"A": 10}
        c.handle_query(query("B", {"A": 5}))
        assert c.suspected == {"A": 10}

    def test_self_suspicion_becomes_mistake(self):
        x = fd_init("X", 1, 3)
        x.counter = 3
        x.handle_query(query("Y", {"X": 7}))
        assert x.mistake == {"X": 8}
        assert x.counter == 8
        assert "X" not in x.suspected

    def test_mobility_prunes_known(self):
        i = fd_init("I", 1, 3)
        i.known = {"J", "X"}
        i.suspected = {"X": 4}
        i.handle_query(query("J", mistake={"X": 6}), mobility=True)
        assert i.mistake == {"X": 6}
        assert "X" not in i.suspected
        assert "X" not in i.known

    def test_no_pruning_without_mobility(self):
        i = fd_init("I", 1, 3)
        i.known = {"J", "X"}
        i.suspected = {"X": 4}
        i.handle_query(query("J", mistake={"X": 6}))
        assert "X" in i.known

    def test_mistake_from_its_origin_keeps_known(self):
        i = fd_init("I", 1, 3)
        i.suspected = {"X": 4}
        i.handle_query(query("X", mistake={"X": 6}), mobility=True)
        assert "X" in i.known

    def test_mistake_wins_tie_against_suspicion(self):
        i = fd_init("I", 1, 3)
        i.suspected = {"X": 6}
        i.handle_query(query("J", mistake={"X": 6}))
        assert i.mistake == {"X": 6} and i.suspected == {}

    def test_equal_mistake_is_noop(self):
        i = fd_init("I", 1, 3)
        i.mistake = {"X": 6}
        i.known = {"J", "X"}
        i.handle_query(query("J", mistake={"X": 6}), mobility=True)
        assert "X" in i.known

    def test_suspicion_tie_does_not_override_mistake(self):
        i = fd_init("I", 1, 3)
        i.mistake = {"X": 6}
        i.handle_query(query("J", {"X": 6}))
        assert i.mistake == {"X": 6} and i.suspected == {}


def test_suspicions_projection():
    s = fd_init("X", 1, 3)
    assert s.suspicions() == set()
    s.suspected = {"A": 10, "C": 5}
    assert s.suspicions() == {"A", "C"}


# -- worked example: A crashes in a 1-covering network of density 3 ----------------

PENTAGON_EDGES = {"A": {"B", "C"}, "B": {"A", "C", "D"}, "C": {"A", "B", "E"},
                "D": {"B", "E"}, "E": {"C", "D"}}


def _exchange(states, node, alive):
    """One full round of ``node``: query its live neighbours, collect their responses."""
    s = states[node]
    q = s.begin_round()
    for j in sorted(PENTAGON_EDGES[node] & alive):
        resp = states[j].handle_query(q)
        if s.satisfied:
            s.harvest_response(resp)
        else:
            s.on_response(resp)
    s.finish_round()


def run_crash_example():
    states = {k: fd_init(k, f=1, d=3) for k in PENTAGON_EDGES}
    for k, nbrs in PENTAGON_EDGES.items():
        states[k].known = set(nbrs)
    states["B"].counter = 5
    states["C"].counter = 10
    alive = set(PENTAGON_EDGES) - {"A"}
    _exchange(states, "B", alive)
    _exchange(states, "C", alive)
    step_b = dict(states["B"].suspected), dict(states["C"].suspected)
    for k in ["B", "C"]:
        _exchange(states, k, alive)
    step_c = {k: dict(states[k].suspected) for k in alive}
    for k in ["B", "C", "D", "E"]:
        _exchange(states, k, alive)
    return states, step_b, step_c


def test_crash_spreads_to_all():
    states, step_b, step_c = run_crash_example()
    assert step_b == ({"A": 5}, {"A": 10})
    assert step_c["C"] == {"A": 10}
    assert step_c["B"] == {"A": 10}
    assert step_c["E"] == {"A": 10}
    for k in ["B", "C", "D", "E"]:
        assert states[k].suspected == {"A": 10}
        assert "A" in states[k].suspicions()


# -- randomized equivalence with the literal reference --------------------------------

NODES = ["n0", "n1", "n2", "n3", "n4"]
entries = st.dictionaries(st.sampled_from(NODES), st.integers(0, 12), max_size=4)

op = st.one_of(
    st.tuples(st.just("query"), st.sampled_from(NODES[1:]), entries, entries, st.booleans()),
    st.tuples(st.just("round"), st.sets(st.sampled_from(NODES[1:]), min_size=1)),
)


@settings(max_examples=400, deadline=None)
@given(st.lists(op, max_size=25))
def test_matches_reference(ops):
    me = NODES[0]
    s = fd_init(me, f=0, d=2)
    ref = RefNode(me, 0, 2)
    for o in ops:
        if o[0] == "query":
            _, sender, susp, mist, mob = o
            susp = {k: v for k, v in susp.items() if k not in mist}
            s.handle_query(QueryMsg(sender, 1, susp, mist), mob)
            ref.receive_query(sender, set(susp.items()), set(mist.items()), mob)
        else:
            _satisfied_round(s, sorted(o[1]))
            s.finish_round()
            ref.end_round(o[1])
        assert view_of(s) == ref.view()


@settings(max_examples=300, deadline=None)
@given(st.lists(op, max_size=25))
def test_invariants_hold(ops):
    me = NODES[0]
    s = fd_init(me, f=0, d=2)
    for o in ops:
        before = s.counter
        if o[0] == "query":
            _, sender, susp, mist, mob = o
            susp = {k: v for k, v in susp.items() if k not in mist}
            q = QueryMsg(sender, 1, susp, mist)
            s.handle_query(q, mob)
            once = copy.deepcopy(s)
            s.handle_query(q, mob)
            assert view_of(s) == view_of(once)
        else:
            _satisfied_round(s, sorted(o[1]))
            s.finish_round()
        assert s.counter >= before
        assert not set(s.suspected) & set(s.mistake)
        assert me not in s.suspected
