from dataclasses import replace

import pytest

from tardis.core import CacheState, CommitEvent, ProcResponse, ProcState
from tardis.processor import (
    MonotonicityViolation,
    check_commit_order,
    commit,
    issue,
    request_floor,
)

from conftest import make, set_at

S, M = CacheState.S, CacheState.M


def fresh(text, **floors):
    """State with the preloaded request removed and chosen floors."""
    st = make(text)
    proc = replace(ProcState(), **floors)
    return replace(st, mrq=((),), procs=(proc,))


def test_sc_issue_uses_last_commit():
    st = issue(fresh("cores = 1\naddrs = a\nprog 0: Ld a", last_commit_ts=7), 0)
    (req,) = st.mrq[0]
    assert (req.type, req.addr, req.pts) == (S, 0, 7)
    assert st.procs[0].outstanding and st.procs[0].pc == 1


def test_tso_load_floor_ignores_stores():
    st = fresh("cores = 1\naddrs = a\nmode = tso\nprog 0: Ld a", last_load_ts=3, last_store_ts=9)
    assert issue(st, 0).mrq[0][0].pts == 3


def test_tso_store_floor():
    st = fresh("cores = 1\naddrs = a\nmode = tso\nprog 0: St a 1", last_load_ts=3, last_store_ts=9)
    assert request_floor(st, 0, "St") == 9


def test_fresh_start_floor_zero():
    st = make("cores = 1\naddrs = a\nprog 0: Ld a")
    assert st.mrq[0][0].pts == 0


def test_issue_waits_for_outstanding():
    st = make("cores = 1\naddrs = a\nprog 0: Ld a; Ld a")
    assert issue(st, 0) is st


def with_response(st, ts, kind=S, seq=0):
    return replace(
        st,
        mrq=((),),
        mrp=((ProcResponse(kind, 0, "v" if kind is S else None, ts, seq),),),
    )


def test_commit_raises_floor():
    st = with_response(make("cores = 1\naddrs = a\nprog 0: Ld a"), 9)
    st = replace(st, procs=(replace(st.procs[0], last_commit_ts=7),))
    st = commit(st, 0)
    assert st.procs[0].last_commit_ts == 9 and not st.procs[0].outstanding
    (ev,) = st.trace
    assert ev == CommitEvent(0, 0, "Ld", 0, "v", 9, 0)


def test_commit_below_floor_is_a_violation():
    st = with_response(make("cores = 1\naddrs = a\nprog 0: Ld a"), 5)
    st = replace(st, procs=(replace(st.procs[0], last_commit_ts=7),))
    with pytest.raises(MonotonicityViolation) as exc:
        commit(st, 0)
    assert exc.value.floor == 7 and exc.value.event.ts == 5


def test_tso_load_after_later_store_is_legal():
    st = with_response(make("cores = 1\naddrs = a\nmode = tso\nprog 0: Ld a"), 3)
    st = replace(st, procs=(replace(st.procs[0], last_store_ts=9, last_commit_ts=9),))
    st = commit(st, 0)
    assert st.procs[0].last_load_ts == 3


def test_store_commit_reports_program_value():
    st = with_response(make("cores = 1\naddrs = a\nprog 0: St a 4"), 2, kind=M)
    assert commit(st, 0).trace[0].value == "c0.0"


def ev(core, seq, kind, ts, phys):
    return CommitEvent(core, seq, kind, 0, None, ts, phys)


def test_commit_order_sc():
    assert check_commit_order([ev(0, 0, "St", 1, 1), ev(0, 1, "Ld", 1, 2)]) == []
    assert check_commit_order([ev(0, 0, "St", 5, 1), ev(0, 1, "Ld", 3, 2)])
    assert check_commit_order([ev(0, 0, "St", 1, 4), ev(0, 1, "Ld", 1, 2)])


def test_commit_order_tso_relaxes_store_load():
    trace = [ev(0, 0, "St", 5, 1), ev(0, 1, "Ld", 3, 2)]
    assert check_commit_order(trace, tso=True) == []
    trace = [ev(0, 0, "Ld", 5, 1), ev(0, 1, "St", 3, 2)]
    assert check_commit_order(trace, tso=True)
