"""In-order-commit processor: request issue with timestamp floors, commits.

Each core keeps at most one request outstanding.  Responses are consumed as
soon as they land in mrp, so mrp is always empty between transitions.  The
next operation is issued by a separate scheduled step (the ``Issue`` rule),
or immediately after the commit when ``Config.eager_issue`` is set.
"""

from __future__ import annotations

from dataclasses import replace

from tardis.core import (
    CacheState,
    CommitEvent,
    ProcRequest,
    SystemState,
    TardisError,
    fifo_enq,
)


class MonotonicityViolation(TardisError):
    """A committed timestamp fell below the core's floor: a protocol bug."""

    def __init__(self, event: CommitEvent, floor: int):
        self.event = event
        self.floor = floor
        super().__init__(
            f"core {event.core} seq {event.seq} committed at ts {event.ts} "
            f"below floor {floor}"
        )


def _set(tup: tuple, i: int, v) -> tuple:
    return tup[:i] + (v,) + tup[i + 1 :]


def request_floor(state: SystemState, core: int, kind: str) -> int:
    p = state.procs[core]
    if not state.config.tso:
        return p.last_commit_ts
    if kind == "Ld":
        return p.last_load_ts
    return max(p.last_load_ts, p.last_store_ts)


def can_issue(state: SystemState, core: int) -> bool:
    cfg = state.config
    proc = state.procs[core]
    if proc.outstanding or proc.pc >= len(cfg.programs[core]):
        return False
    return cfg.capacity is None or len(state.mrq[core]) < cfg.capacity


def issue(state: SystemState, core: int) -> SystemState:
    """Enqueue the core's next program operation, if it may issue one now."""
    if not can_issue(state, core):
        return state
    cfg = state.config
    proc = state.procs[core]
    op = cfg.programs[core][proc.pc]
    req = ProcRequest(
        type=CacheState.S if op.kind == "Ld" else CacheState.M,
        addr=op.addr,
        data=cfg.op_value(core, proc.pc) if op.kind == "St" else None,
        pts=request_floor(state, core, op.kind),
        seq=proc.pc,
    )
    return replace(
        state,
        mrq=_set(state.mrq, core, fifo_enq(state.mrq[core], req)),
        procs=_set(state.procs, core, replace(proc, pc=proc.pc + 1, outstanding=True)),
    )


def commit(state: SystemState, core: int) -> SystemState:
    """Consume the head of mrp[core] and record it in the commit trace."""
    rsp = state.mrp[core][0]
    kind = "Ld" if rsp.type is CacheState.S else "St"
    floor = request_floor(state, core, kind)
    if kind == "St":
        value = state.config.op_value(core, rsp.seq)
    else:
        value = rsp.data
    event = CommitEvent(core, rsp.seq, kind, rsp.addr, value, rsp.pts, state.phys)
    if rsp.pts < floor:
        raise MonotonicityViolation(event, floor)
    proc = state.procs[core]
    if kind == "Ld":
        proc = replace(proc, last_load_ts=rsp.pts)
    else:
        proc = replace(proc, last_store_ts=rsp.pts)
    proc = replace(proc, last_commit_ts=rsp.pts, outstanding=False)
    return replace(
        state,
        mrp=_set(state.mrp, core, state.mrp[core][1:]),
        procs=_set(state.procs, core, proc),
        trace=state.trace + (event,),
    )


def drain(state: SystemState, core: int) -> tuple[SystemState, list[CommitEvent]]:
    """Commit every waiting response of ``core``."""
    events = []
    while state.mrp[core]:
        state = commit(state, core)
        events.append(state.trace[-1])
    if state.config.eager_issue:
        state = issue(state, core)
    return state, events


def check_commit_order(trace, tso: bool = False) -> list[str]:
    """Per-core ordering requirements of the processor model over a trace.

    SC: program order implies ts non-decreasing and phys increasing.  TSO:
    only load->load, load->store and store->store pairs constrain ts, while
    every pair still needs increasing phys.
    """
    problems = []
    by_core: dict[int, list[CommitEvent]] = {}
    for e in trace:
        by_core.setdefault(e.core, []).append(e)
    for core, events in by_core.items():
        events.sort(key=lambda e: e.seq)
        for i, y in enumerate(events):
            for x in events[:i]:
                if not x.phys < y.phys:
                    problems.append(f"core {core}: seq {x.seq} not committed before seq {y.seq}")
                constrained = not tso or not (x.kind == "St" and y.kind == "Ld")
                if constrained and x.ts > y.ts:
                    problems.append(
                        f"core {core}: {x.kind} seq {x.seq} ts {x.ts} > "
                        f"{y.kind} seq {y.seq} ts {y.ts}"
                    )
    return problems
