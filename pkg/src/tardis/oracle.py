"""Runtime invariant checkers.

Per-state checkers take a :class:`SystemState` and return a list of
:class:`Violation` (empty means pass).  ``check_lattice_step`` inspects one
transition.  ``check_state`` bundles every per-state checker that applies to
the state's configuration.

Violation ids name the property being checked:

=================  =========================================================
clean-unique       at most one clean block per address (exactly one with no
                   main memory; none while the L2 line is I)
clean-dominance    the clean block's rts bounds every other block's rts
clean-history      no store to the address above the clean block's rts
ts-order           wts <= rts in every line and message
store-unique       no two stores to one address share a timestamp
provenance         a block's value comes from a store with no later store at
                   or below the block's rts
req-mutex          busy L1 line <=> exactly one request/response in flight
l1-busy-mrq        busy L1 line => missing request at the mrq head
l2-busy-m          busy L2 line => state M (or I awaiting memory)
l2-m-owner         L2 in M => the clean block belongs to the owner
l2-busy-wb         busy L2 line in M => WBRq or WBRp from/to the owner
l2-busy-req        busy L2 line => a request for it is ready at c2pRq
getx               c2pRq entries mirror their issuer's mrq head
tox                responses match the issuer's request; ToS covers its pts
lattice-coverage   every pending request sits in some progress entry
lattice-mutex      ... and in exactly one
lattice-backward   no request moves back in the progress lattice
lattice-progress   non-voluntary rules dequeue or advance some request
deadlock           some non-voluntary rule is enabled while work is pending
mts-rts / mts-store / mts-provenance
                   main-memory timestamp bounds, checked while L2 is I
=================  =========================================================
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

from tardis.core import CacheState, MsgKind, SystemState, TardisError, is_ready
from tardis.protocol import MEMORY_RULES, Rule, TransitionRecord, enabled, l1_miss

I, S, M = CacheState.I, CacheState.S, CacheState.M


@dataclass(frozen=True)
class Violation:
    lemma: str
    detail: str

    def __str__(self) -> str:
        return f"FAIL {self.lemma} {self.detail}"


def format_verdict(violations: list[Violation]) -> str:
    if not violations:
        return "PASS"
    return "\n".join(str(v) for v in violations)


@dataclass(frozen=True)
class Block:
    location: str  # "L1", "L2", "ToS", "ToM" or "WBRp"
    id: Optional[int]
    addr: int
    data: object
    wts: int
    rts: int
    clean: bool

    def __str__(self) -> str:
        where = self.location if self.id is None else f"{self.location}[{self.id}]"
        return f"{where}(data={self.data},wts={self.wts},rts={self.rts})"


def blocks(state: SystemState, addr: Optional[int] = None) -> list[Block]:
    """Every timestamped copy of data: valid lines plus ToS/ToM/WBRp messages."""
    out = []
    for c, lines in enumerate(state.l1):
        for a, ln in enumerate(lines):
            if ln.state is not I and (addr is None or a == addr):
                out.append(Block("L1", c, a, ln.data, ln.wts, ln.rts, ln.state is M))
    for a, ln in enumerate(state.l2):
        if ln.state is not I and (addr is None or a == addr):
            out.append(Block("L2", None, a, ln.data, ln.wts, ln.rts, ln.state is S))
    for q in state.p2c:
        for m in q:
            if m.msg is MsgKind.RESP and (addr is None or m.addr == addr):
                out.append(Block(m.name, m.id, m.addr, m.data, m.wts, m.rts, m.state is M))
    for m in state.c2p_rp:
        if addr is None or m.addr == addr:
            out.append(Block("WBRp", m.id, m.addr, m.data, m.wts, m.rts, True))
    return out


def clean_blocks(state: SystemState, addr: int, bs: Optional[list[Block]] = None) -> list[Block]:
    if bs is None:
        bs = blocks(state, addr)
    return [b for b in bs if b.clean and b.addr == addr]


def _of(state: SystemState, addr: int, bs: Optional[list[Block]]) -> list[Block]:
    return blocks(state, addr) if bs is None else [b for b in bs if b.addr == addr]


def _store_ts(state: SystemState) -> list[list[int]]:
    ts: list[list[int]] = [[] for _ in range(state.n_addrs)]
    for rec in state.history:
        ts[rec.addr].append(rec.ts)
    for t in ts:
        t.sort()
    return ts


def check_clean_unique(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    out = []
    for a in range(state.n_addrs):
        cb = clean_blocks(state, a, bs)
        if state.config.memory:
            bad = len(cb) > 1 or (state.l2[a].state is I and cb)
        else:
            bad = len(cb) != 1
        if bad:
            out.append(Violation(
                "clean-unique",
                f"addr={a} l2={state.l2[a].state} clean=[{', '.join(map(str, cb))}]",
            ))
    return out


def check_clean_dominance(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    out = []
    stores = _store_ts(state)
    for a in range(state.n_addrs):
        ab = _of(state, a, bs)
        cb = [b for b in ab if b.clean]
        if len(cb) != 1:
            continue
        clean = cb[0]
        for b in ab:
            if b is not clean and b.rts > clean.rts:
                out.append(Violation("clean-dominance", f"addr={a} clean={clean} other={b}"))
        if stores[a] and stores[a][-1] > clean.rts:
            out.append(Violation(
                "clean-history", f"addr={a} clean={clean} store_ts={stores[a][-1]}"
            ))
    return out


def check_block_timestamps(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    return [
        Violation("ts-order", f"addr={b.addr} block={b}")
        for b in (blocks(state) if bs is None else bs)
        if b.wts > b.rts
    ]


def check_store_history(state: SystemState) -> list[Violation]:
    seen = {}
    out = []
    for rec in state.history:
        key = (rec.addr, rec.ts)
        if key in seen:
            out.append(Violation(
                "store-unique",
                f"addr={rec.addr} ts={rec.ts} values={seen[key].value},{rec.value}",
            ))
        else:
            seen[key] = rec
    return out


def _provenance_of(state: SystemState):
    return {rec.value: rec for rec in state.history}


def _later_store(ts_list: list[int], lo: int, hi: int) -> Optional[int]:
    """Some store timestamp t with lo < t <= hi, if one exists."""
    i = bisect_right(ts_list, lo)
    if i < len(ts_list) and ts_list[i] <= hi:
        return ts_list[i]
    return None


def check_value_provenance(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    if not state.config.fresh_values:
        return []
    index = _provenance_of(state)
    stores = _store_ts(state)
    out = []
    for b in (blocks(state) if bs is None else bs):
        st = index.get(b.data)
        if st is None or st.addr != b.addr:
            out.append(Violation("provenance", f"addr={b.addr} block={b} has no source store"))
            continue
        later = _later_store(stores[b.addr], st.ts, b.rts)
        if later is not None:
            out.append(Violation(
                "provenance",
                f"addr={b.addr} block={b} source_ts={st.ts} later_store_ts={later}",
            ))
    return out


def _mem_fetch_pending(state: SystemState, a: int) -> bool:
    return any(m.addr == a and m.type is S for m in state.mem_rq) or any(
        m.addr == a for m in state.mem_rp
    )


def _ready_request(state: SystemState, a: int) -> bool:
    per = state.config.per_address
    for i, m in enumerate(state.c2p_rq):
        if m.addr == a:
            return is_ready(state.c2p_rq, i, per)
    return False


def check_busy_structure(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    out = []
    memory = state.config.memory
    for c, lines in enumerate(state.l1):
        head = state.mrq[c][0] if state.mrq[c] else None
        for a, ln in enumerate(lines):
            n = sum(1 for m in state.c2p_rq if m.id == c and m.addr == a)
            n += sum(1 for m in state.p2c[c] if m.msg is MsgKind.RESP and m.addr == a)
            if n != (1 if ln.busy else 0):
                out.append(Violation(
                    "req-mutex", f"core={c} addr={a} busy={ln.busy} in_flight={n}"
                ))
            if ln.busy and (head is None or head.addr != a or not l1_miss(head, ln)):
                out.append(Violation("l1-busy-mrq", f"core={c} addr={a} head={head}"))

    for a, ln in enumerate(state.l2):
        if ln.busy:
            ok = ln.state is M or (memory and ln.state is I and _mem_fetch_pending(state, a))
            if not ok:
                out.append(Violation("l2-busy-m", f"addr={a} state={ln.state}"))
        if ln.state is M:
            ids = [b.id for b in clean_blocks(state, a, bs)]
            if ids != [ln.owner]:
                out.append(Violation("l2-m-owner", f"addr={a} owner={ln.owner} clean_ids={ids}"))
            if ln.busy:
                o = ln.owner
                wbrq = o is not None and any(
                    m.msg is MsgKind.REQ and m.addr == a for m in state.p2c[o]
                )
                wbrp = any(m.id == o and m.addr == a for m in state.c2p_rp)
                if not (wbrq or wbrp):
                    out.append(Violation("l2-busy-wb", f"addr={a} owner={o}"))
        # main memory lets L2Downgrade set busy with no request waiting
        if ln.busy and (not memory or ln.state is I) and not _ready_request(state, a):
            out.append(Violation("l2-busy-req", f"addr={a} state={ln.state}"))

    for m in state.c2p_rq:
        q = state.mrq[m.id]
        h = q[0] if q else None
        if h is None or h.addr != m.addr or h.type is not m.type or h.pts != m.pts:
            out.append(Violation("getx", f"request={m} mrq_head={h}"))
    for c, q in enumerate(state.p2c):
        h = state.mrq[c][0] if state.mrq[c] else None
        for m in q:
            if m.msg is not MsgKind.RESP:
                continue
            if h is None or h.addr != m.addr or h.type is not m.state:
                out.append(Violation("tox", f"core={c} response={m.name} mrq_head={h}"))
            elif m.state is S and m.rts < h.pts:
                out.append(Violation("tox", f"core={c} ToS rts={m.rts} < pts={h.pts}"))
    return out


def check_mts(state: SystemState, bs: Optional[list[Block]] = None) -> list[Violation]:
    if not state.config.memory:
        return []
    out = []
    mts = state.mts
    stores = _store_ts(state)
    index = _provenance_of(state) if state.config.fresh_values else None
    for a, ln in enumerate(state.l2):
        if ln.state is not I:
            continue
        for b in _of(state, a, bs):
            if b.rts > mts:
                out.append(Violation("mts-rts", f"addr={a} mts={mts} block={b}"))
        if stores[a] and stores[a][-1] > mts:
            out.append(Violation("mts-store", f"addr={a} mts={mts} store_ts={stores[a][-1]}"))
        if index is None:
            continue
        pending = [m.data for m in state.mem_rq if m.addr == a and m.type is M]
        values = [pending[-1] if pending else state.mem[a]]
        values += [m.data for m in state.mem_rp if m.addr == a]
        for v in values:
            st = index.get(v)
            if st is None or st.addr != a:
                out.append(Violation("mts-provenance", f"addr={a} value={v} has no source store"))
                continue
            later = _later_store(stores[a], st.ts, mts)
            if later is not None:
                out.append(Violation(
                    "mts-provenance",
                    f"addr={a} value={v} source_ts={st.ts} later_store_ts={later} mts={mts}",
                ))
    return out


# -- progress lattice -------------------------------------------------------


class LatticeError(TardisError):
    lemma = "lattice"


class NoEntry(LatticeError):
    lemma = "lattice-coverage"


class MultiEntry(LatticeError):
    lemma = "lattice-mutex"


@dataclass(frozen=True, order=True)
class LatticeEntry:
    """Position of a pending request; larger means closer to completion.

    ``sub`` is non-zero only for the entries added for main memory, which sit
    between entry 7 and entry 8 (an L2 line in I must be fetched before it
    can serve the request).
    """

    index: int
    sub: int = 0

    @property
    def label(self) -> str:
        return str(self.index) if not self.sub else f"{self.index}.{self.sub}"

    def __str__(self) -> str:
        return self.label


def _first(buf: tuple, pred) -> Optional[int]:
    for i, m in enumerate(buf):
        if pred(m):
            return i
    return None


def lattice_entry(state: SystemState, core: int) -> LatticeEntry:
    q = state.mrq[core]
    if not q:
        raise ValueError(f"core {core} has no pending request")
    req = q[0]
    a = req.addr
    per = state.config.per_address
    l1 = state.l1[core][a]
    l2 = state.l2[a]
    miss = l1_miss(req, l1)
    busy = l1.busy

    j = _first(state.c2p_rq, lambda m: m.id == core and m.addr == a)
    c2p_exist = j is not None
    c2p_rdy = c2p_exist and is_ready(state.c2p_rq, j, per)

    rq_exist = rq_rdy = False
    owner_state = I
    if l2.owner is not None:
        buf = state.p2c[l2.owner]
        k = _first(buf, lambda m: m.msg is MsgKind.REQ and m.addr == a)
        rq_exist = k is not None
        rq_rdy = rq_exist and is_ready(buf, k, per)
        owner_state = state.l1[l2.owner][a].state

    buf = state.p2c[core]
    k = _first(buf, lambda m: m.msg is MsgKind.RESP and m.addr == a)
    rp_exist = k is not None
    rp_rdy = rp_exist and is_ready(buf, k, per)

    pending = miss and busy
    l2m = c2p_rdy and l2.state is M
    preds = [
        (LatticeEntry(1), miss and not busy),
        (LatticeEntry(2), pending and c2p_exist and not c2p_rdy),
        (LatticeEntry(3), pending and l2m and not l2.busy),
        (LatticeEntry(4), pending and l2m and l2.busy and rq_exist and not rq_rdy),
        (LatticeEntry(5), pending and l2m and l2.busy and rq_rdy and owner_state is M),
        (LatticeEntry(6), pending and l2m and l2.busy and rq_rdy and owner_state < M),
        (LatticeEntry(7), pending and l2m and l2.busy and not rq_exist),
        (LatticeEntry(8), pending and c2p_rdy and l2.state is S),
        (LatticeEntry(9), pending and rp_exist and not rp_rdy),
        (LatticeEntry(10), pending and rp_rdy),
        (LatticeEntry(11), not miss),
    ]
    if state.config.memory:
        l2i = pending and c2p_rdy and l2.state is I
        fetched = any(m.addr == a for m in state.mem_rp)
        preds += [
            (LatticeEntry(7, 1), l2i and not l2.busy),
            (LatticeEntry(7, 2), l2i and l2.busy and not fetched),
            (LatticeEntry(7, 3), l2i and l2.busy and fetched),
        ]
    hits = [e for e, ok in preds if ok]
    if not hits:
        raise NoEntry(f"core={core} request={req} matches no entry")
    if len(hits) > 1:
        raise MultiEntry(
            f"core={core} request={req} matches {','.join(e.label for e in sorted(hits))}"
        )
    return hits[0]


def check_lattice(state: SystemState) -> list[Violation]:
    entries = _entries(state)
    if all(state.mrq[c] == () or c in entries for c in range(state.n_cores)):
        return []
    out = []
    for c in range(state.n_cores):
        if state.mrq[c]:
            try:
                lattice_entry(state, c)
            except LatticeError as exc:
                out.append(Violation(exc.lemma, str(exc)))
    return out


# rules with no obligation to advance a request; Issue adds a new one instead
VOLUNTARY_LATTICE = frozenset(
    {Rule.Downgrade, Rule.WriteBackReq, Rule.WriteBackResp, Rule.Issue}
) | (MEMORY_RULES - {Rule.L2Miss})


# the same state is classified as a step's post and the next step's pre
_recent: list = []


def _entries(state: SystemState) -> dict[int, tuple[int, LatticeEntry]]:
    for s, cached in _recent:
        if s is state:
            return cached
    out = {}
    for c in range(state.n_cores):
        if state.mrq[c]:
            try:
                out[c] = (state.mrq[c][0].seq, lattice_entry(state, c))
            except LatticeError:
                pass
    _recent.insert(0, (state, out))
    del _recent[4:]
    return out


def check_lattice_step(
    pre: SystemState, record: TransitionRecord, post: SystemState
) -> list[Violation]:
    before, after = _entries(pre), _entries(post)
    out = []
    advanced = False
    for c, (seq, e0) in before.items():
        if c not in after or after[c][0] != seq:
            continue
        e1 = after[c][1]
        if e1 < e0:
            out.append(Violation(
                "lattice-backward",
                f"rule={record.instance} core={c} from={e0} to={e1}",
            ))
        elif e1 > e0:
            advanced = True
    if record.rule not in VOLUNTARY_LATTICE and not record.dequeued and not advanced:
        out.append(Violation("lattice-progress", f"rule={record.instance} moved no request"))
    return out


# -- deadlock ---------------------------------------------------------------


def voluntary_rules(state: SystemState) -> frozenset:
    if state.config.memory:
        return frozenset({Rule.Downgrade, Rule.L2Downgrade, Rule.L2Evict})
    return frozenset({Rule.Downgrade})


def check_deadlock_enabled(state: SystemState, en=None) -> list[Violation]:
    if state.config.capacity is not None or not state.pending():
        return []
    if en is None:
        en = enabled(state)
    vol = voluntary_rules(state)
    if any(i.rule not in vol for i in en):
        return []
    names = ",".join(sorted({str(i.rule) for i in en})) or "none"
    return [Violation("deadlock", f"pending work but only [{names}] enabled")]


def check_state(state: SystemState, en=None) -> list[Violation]:
    """Run every per-state checker that applies to the configuration."""
    bs = blocks(state)
    out = check_clean_unique(state, bs)
    out += check_clean_dominance(state, bs)
    out += check_block_timestamps(state, bs)
    out += check_store_history(state)
    out += check_value_provenance(state, bs)
    out += check_busy_structure(state, bs)
    out += check_mts(state, bs)
    out += check_lattice(state)
    out += check_deadlock_enabled(state, en)
    return out
