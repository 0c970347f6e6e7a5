import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgeflow.log import (AssignmentError, add_replica, choose_leader, create_assignment, demote_in_sync,
                          drop_replica, mark_in_sync, promote_leader, quorum, recover_replica, reinstate)

ABC = ("A", "B", "C")


def topic(**kw):
    a = create_assignment("T", "edge", 3, ABC)
    return a if not kw else a.__class__(**{**a.to_dict(), **kw, "replicas": tuple(kw.get("replicas", a.replicas)),
                                           "in_sync": tuple(kw.get("in_sync", a.in_sync))})


@pytest.mark.parametrize("rf", range(1, 10))
def test_quorum_is_strict_majority(rf):
    # smallest k with k > rf - k
    assert quorum(rf) == min(k for k in range(1, rf + 1) if k > rf - k)


def test_create_assignment_validates_placement():
    a = create_assignment("T", "edge", 3, ABC)
    assert (a.leader, a.in_sync, a.leader_epoch) == ("A", ABC, 1)
    with pytest.raises(AssignmentError):
        create_assignment("T", "edge", 3, ("A", "B"))
    with pytest.raises(AssignmentError):
        create_assignment("T", "edge", 2, ("A", "A"))
    with pytest.raises(AssignmentError):
        create_assignment("T", "edge", 0, ())


def test_choose_leader_prefers_newer_epoch_then_longer_log_then_lowest_id():
    assert choose_leader(["B", "C"], {"B": 5, "C": 5}) == "B"
    assert choose_leader(["B", "C"], {"B": 4, "C": 5}) == "C"
    assert choose_leader(["B", "C"], {"B": (2, 3), "C": (1, 9)}) == "B"
    assert choose_leader(["C", "B"], {"C": (2, 3)}) == "C"
    assert choose_leader([], {}) is None


@given(st.dictionaries(st.sampled_from(ABC), st.tuples(st.integers(0, 3), st.integers(0, 20)), min_size=1))
def test_choose_leader_matches_brute_force(pos):
    best = choose_leader(pos, pos)
    top = max(pos.values())
    assert best == min(n for n, p in pos.items() if p == top)


def test_drop_leader_promotes_and_bumps_epoch():
    a = topic()
    b = drop_replica(a, "A", {"B": 3, "C": 3}, {"B", "C"})
    assert (b.leader, b.replicas, b.in_sync, b.leader_epoch) == ("B", ("B", "C"), ("B", "C"), 2)
    assert b.version == a.version + 1


def test_drop_keeps_member_without_live_in_sync_peer():
    a = topic()
    b = drop_replica(a, "A", {}, set())
    assert b.leader is None and b.in_sync == ABC
    c = drop_replica(b, "B", {}, set())
    assert c is b


def test_drop_follower_keeps_leader_and_epoch():
    a = topic()
    b = drop_replica(a, "C", {}, {"A", "B"})
    assert (b.leader, b.leader_epoch, b.in_sync) == ("A", 1, ("A", "B"))
    assert drop_replica(b, "Z", {}, set()) is b


def test_promote_leader_without_candidates_is_unavailable():
    a = topic(leader=None)
    assert promote_leader(a, {}, set()).leader is None
    assert promote_leader(a, {"C": 4, "B": 2}, {"B", "C"}).leader == "C"


def test_add_and_mark_in_sync():
    a = drop_replica(topic(), "C", {}, {"A", "B"})
    b = add_replica(a, "D")
    assert b.replicas == ("A", "B", "D") and b.in_sync == ("A", "B")
    with pytest.raises(AssignmentError):
        add_replica(b, "D")
    c = mark_in_sync(b, "D")
    assert c.in_sync == ("A", "B", "D")
    assert mark_in_sync(c, "D") is c
    with pytest.raises(AssignmentError):
        mark_in_sync(c, "Q")


def test_demote_leader_elects_among_the_rest():
    b = demote_in_sync(topic(), "A", {"B": 1, "C": 2}, {"B", "C"})
    assert b.leader == "C" and b.in_sync == ("B", "C")


def test_reinstate_requires_in_sync_member():
    a = drop_replica(topic(), "C", {}, {"A", "B"})
    with pytest.raises(AssignmentError):
        reinstate(a, "C")
    r = reinstate(a, "B")
    assert (r.leader, r.reinstated) == ("B", "B")


class TestRecover:
    def test_outside_in_sync_restarts_catch_up(self):
        a = add_replica(drop_replica(topic(), "C", {}, {"A", "B"}), "C")
        b = recover_replica(a, "C", {}, {"A", "B"}, {"C"})
        assert b.in_sync == a.in_sync and b.version == a.version + 1

    def test_demoted_while_a_peer_serves(self):
        b = recover_replica(topic(), "B", {}, {"A", "C"}, {"B"})
        assert b.in_sync == ("A", "C") and b.leader == "A"

    def test_restarted_leader_hands_over(self):
        b = recover_replica(topic(), "A", {"B": (1, 4), "C": (1, 5)}, {"B", "C"}, {"A"})
        assert b.leader == "C" and "A" not in b.in_sync

    def test_waits_for_every_in_sync_member_when_none_serves(self):
        a = topic(leader=None)
        assert recover_replica(a, "B", {}, set(), {"B"}) is None
        assert recover_replica(a, "B", {}, set(), {"B", "C"}) is None

    def test_most_up_to_date_member_is_reinstated(self):
        a = topic(leader=None)
        pos = {"A": (1, 9), "B": (2, 4), "C": (2, 6)}
        assert recover_replica(a, "B", pos, set(), set(ABC)) is None
        r = recover_replica(a, "C", pos, set(), set(ABC))
        assert (r.leader, r.reinstated) == ("C", "C")
        # the reinstated leader counts as serving for the others
        d = recover_replica(r, "A", pos, set(), set(ABC))
        assert d.leader == "C" and d.in_sync == ("B", "C")
        assert recover_replica(r, "C", pos, set(), set(ABC)) is None
