"""Trace-level memory-model checks.

A run produces a list of :class:`CommitEvent` plus the store history (which
also holds one synthetic store per address at timestamp 0 for the initial
value).  The checks here look only at those two lists, never at protocol
state, so they can run offline on a saved trace.
"""

from __future__ import annotations

from collections import defaultdict

from tardis.core import CommitEvent, StoreRecord
from tardis.oracle import Violation


def _stores_by_addr(history) -> dict[int, list[StoreRecord]]:
    out: dict[int, list[StoreRecord]] = defaultdict(list)
    for rec in history:
        out[rec.addr].append(rec)
    return out


def check_theorem1(trace, history) -> list[Violation]:
    """Timestamp invariants linking loads and stores.

    1. a load returns the value of the latest store (by ts) at or below its ts
    2. stores to one address have pairwise distinct timestamps
    3. a store and load with equal ts: the store happened first physically
    """
    out = []
    stores = _stores_by_addr(history)
    for a, recs in stores.items():
        seen: dict[int, StoreRecord] = {}
        for r in recs:
            if r.ts in seen:
                out.append(Violation(
                    "ts-unique", f"addr={a} ts={r.ts} stores={seen[r.ts].value},{r.value}"
                ))
            seen[r.ts] = r
    for e in trace:
        if e.kind != "Ld":
            continue
        below = [r for r in stores[e.addr] if r.ts <= e.ts]
        if not below:
            out.append(Violation("ts-value", f"load core={e.core} seq={e.seq} sees no store"))
            continue
        src = max(below, key=lambda r: r.ts)
        if src.value != e.value:
            out.append(Violation(
                "ts-value",
                f"load core={e.core} seq={e.seq} ts={e.ts} read {e.value} "
                f"but latest store at ts {src.ts} wrote {src.value}",
            ))
        for r in stores[e.addr]:
            if r.ts == e.ts and not r.phys < e.phys:
                out.append(Violation(
                    "ts-phys",
                    f"load core={e.core} seq={e.seq} shares ts {e.ts} with a store "
                    f"that happened at phys {r.phys} >= {e.phys}",
                ))
    return out


def _memory_order(trace, history) -> list:
    """Events sorted by (ts, phys): the global memory order.

    Initial stores are included at ts 0 and physical time 0; they are kinded
    'St' and sort ahead of every real event with the same ts.
    """
    events = [("St", r.addr, r.value, r.ts, r.phys, r.core, r.seq) for r in history]
    events += [(e.kind, e.addr, e.value, e.ts, e.phys, e.core, e.seq)
               for e in trace if e.kind == "Ld"]
    return sorted(events, key=lambda ev: (ev[3], ev[4]))


def check_sc(trace, history) -> list[Violation]:
    """Sequential consistency checked directly against the (ts, phys) order.

    Rule 1: each core's program order is preserved by the memory order.
    Rule 2: replaying the memory order against a plain memory, every load
    returns exactly what it observed.
    """
    out = []
    key = {(e.core, e.seq): (e.ts, e.phys) for e in trace}
    by_core: dict[int, list[CommitEvent]] = defaultdict(list)
    for e in trace:
        by_core[e.core].append(e)
    for core, evs in by_core.items():
        evs.sort(key=lambda e: e.seq)
        for x, y in zip(evs, evs[1:]):
            if not key[(x.core, x.seq)] < key[(y.core, y.seq)]:
                out.append(Violation(
                    "sc-rule1", f"core={core} seq {x.seq} not ordered before seq {y.seq}"
                ))
    order = _memory_order(trace, history)
    for i in range(1, len(order)):
        if order[i - 1][3:5] == order[i][3:5] and order[i - 1][1] == order[i][1]:
            out.append(Violation("sc-order", f"events tie at (ts, phys)={order[i][3:5]}"))
    memory: dict[int, object] = {}
    for kind, addr, value, ts, phys, core, seq in order:
        if kind == "St":
            memory[addr] = value
        elif memory.get(addr, _MISSING) != value:
            out.append(Violation(
                "sc-rule2",
                f"load core={core} seq={seq} ts={ts} read {value} "
                f"but memory order gives {memory.get(addr)}",
            ))
    return out


_MISSING = object()


def check_order_sets(trace, history) -> list[Violation]:
    """For every load, stores at or below its ts equal the stores before it in memory order."""
    out = []
    stores = _stores_by_addr(history)
    for e in trace:
        if e.kind != "Ld":
            continue
        by_ts = {(r.addr, r.ts) for r in stores[e.addr] if r.ts <= e.ts}
        by_m = {
            (r.addr, r.ts) for r in stores[e.addr]
            if r.ts < e.ts or (r.ts == e.ts and r.phys < e.phys)
        }
        if by_ts != by_m:
            out.append(Violation(
                "order-sets", f"load core={e.core} seq={e.seq}: {sorted(by_ts ^ by_m)} differ"
            ))
    return out


def check_tso(trace, history) -> list[Violation]:
    """Load values under TSO: the ts-latest among stores at or below the
    load's ts and the core's own program-earlier stores to the address."""
    out = []
    stores = _stores_by_addr(history)
    for e in trace:
        if e.kind != "Ld":
            continue
        cands = [
            r for r in stores[e.addr]
            if r.ts <= e.ts or (r.core == e.core and r.seq is not None and r.seq < e.seq)
        ]
        if not cands:
            out.append(Violation("tso-value", f"load core={e.core} seq={e.seq} sees no store"))
            continue
        src = max(cands, key=lambda r: r.ts)
        if src.value != e.value:
            out.append(Violation(
                "tso-value",
                f"load core={e.core} seq={e.seq} ts={e.ts} read {e.value} "
                f"but expected {src.value} (store ts {src.ts})",
            ))
    return out
