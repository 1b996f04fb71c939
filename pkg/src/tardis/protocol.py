"""Guarded transition rules of the protocol and their enumeration.

``enabled`` evaluates every rule guard against a state and returns the
applicable :class:`RuleInstance` objects in a fixed order; ``apply`` fires one
of them and returns the successor together with a :class:`TransitionRecord`.

Protocol mutations (deliberate bugs used to check that the oracles have
teeth) are switched on through ``Config.mutations``:

``no-owner``            ExReq_S leaves the L2 owner unchanged
``no-lease-update``     ShReq_S does not raise the L2 rts to the granted lease
``loadhit-past-lease``  a shared line serves loads after its lease expired
``no-mts-update``       L2Evict does not fold rts into mts
``store-at-rts``        StoreHit stores at max(pts, rts) instead of rts + 1
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Optional

from tardis.core import (
    C2PReq,
    CacheState,
    CommitEvent,
    MemRp,
    MemRq,
    MsgKind,
    P2CMsg,
    ProcResponse,
    StoreRecord,
    SystemState,
    TardisError,
    WBRp,
    fifo_ready,
)
from tardis.processor import can_issue, drain, issue

I, S, M = CacheState.I, CacheState.S, CacheState.M

MUTATIONS = (
    "no-owner",
    "no-lease-update",
    "loadhit-past-lease",
    "no-mts-update",
    "store-at-rts",
)


class Rule(Enum):
    LoadHit = "LoadHit"
    StoreHit = "StoreHit"
    L1Miss = "L1Miss"
    L2Resp = "L2Resp"
    Downgrade = "Downgrade"
    WriteBackReq = "WriteBackReq"
    ShReq_S = "ShReq_S"
    ExReq_S = "ExReq_S"
    Req_M = "Req_M"
    WriteBackResp = "WriteBackResp"
    L2Miss = "L2Miss"
    MemResp = "MemResp"
    L2Downgrade = "L2Downgrade"
    L2Evict = "L2Evict"
    MemProcess = "MemProcess"
    Issue = "Issue"  # processor hands its next operation to the mrq

    def __str__(self) -> str:
        return self.value


L1_RULES = frozenset(
    {Rule.LoadHit, Rule.StoreHit, Rule.L1Miss, Rule.L2Resp, Rule.Downgrade, Rule.WriteBackReq}
)
MEMORY_RULES = frozenset(
    {Rule.L2Miss, Rule.MemResp, Rule.L2Downgrade, Rule.L2Evict, Rule.MemProcess}
)


class NotEnabled(TardisError):
    pass


@dataclass(frozen=True, slots=True)
class RuleInstance:
    rule: Rule
    core: Optional[int] = None
    addr: Optional[int] = None
    param: Any = None

    def __str__(self) -> str:
        parts = [self.rule.value]
        if self.core is not None:
            parts.append(f"core={self.core}")
        if self.addr is not None:
            parts.append(f"addr={self.addr}")
        if self.param is not None:
            p = self.param.name if isinstance(self.param, CacheState) else self.param
            parts.append(f"param={p}")
        return " ".join(parts)

    @classmethod
    def parse(cls, text: str) -> "RuleInstance":
        fields = text.split()
        rule = Rule(fields[0])
        kw: dict[str, Any] = {}
        for f in fields[1:]:
            key, val = f.split("=", 1)
            if key == "param":
                kw[key] = CacheState[val] if val in ("I", "S", "M") else int(val)
            else:
                kw[key] = int(val)
        return cls(rule, **kw)


@dataclass(frozen=True)
class TransitionRecord:
    instance: RuleInstance
    phys: int
    moved: tuple[str, ...] = ()
    dequeued: tuple[tuple[int, int], ...] = ()  # (core, seq) removed from an mrq
    commits: tuple[CommitEvent, ...] = ()

    @property
    def rule(self) -> Rule:
        return self.instance.rule

    def to_line(self, addr_names: tuple[str, ...] | None = None) -> str:
        inst = self.instance
        core = "-" if inst.core is None else inst.core
        if inst.addr is None:
            addr = "-"
        else:
            addr = addr_names[inst.addr] if addr_names else inst.addr
        line = f"step={self.phys} rule={inst.rule} core={core} addr={addr}"
        detail = list(self.moved)
        if inst.param is not None:
            p = inst.param.name if isinstance(inst.param, CacheState) else inst.param
            detail.insert(0, f"param={p}")
        if detail:
            line += " " + " ".join(detail)
        return line


def _set(tup: tuple, i: int, v) -> tuple:
    return tup[:i] + (v,) + tup[i + 1 :]


def _drop(tup: tuple, i: int) -> tuple:
    return tup[:i] + tup[i + 1 :]


def _room(state: SystemState, buf: tuple) -> bool:
    cap = state.config.capacity
    return cap is None or len(buf) < cap


# -- guards -----------------------------------------------------------------


def load_hits(state: SystemState, line, pts: int) -> bool:
    cfg = state.config
    if line.state is M and (cfg.tso or cfg.loadhit_guard == "owner"):
        return True
    if line.state is I:
        return False
    if line.state is S and "loadhit-past-lease" in cfg.mutations:
        return True
    return pts <= line.rts


def l1_miss(req, line) -> bool:
    """Miss condition used both by L1Miss and by the progress lattice."""
    if req.type is S:
        return line.state is I or (line.state is S and req.pts > line.rts)
    return line.state < M


def hit_possible(state: SystemState, core: int) -> bool:
    """Whether LoadHit or StoreHit can fire for the core's mrq head."""
    q = state.mrq[core]
    if not q:
        return False
    req = q[0]
    line = state.l1[core][req.addr]
    if line.busy:
        return False
    if req.type is S:
        return load_hits(state, line, req.pts) and _room(state, state.mrp[core])
    return line.state is M and _room(state, state.mrp[core])


def _ready_index(state: SystemState, buf: tuple, addr: int) -> int:
    """Index of the message for ``addr`` that may be consumed now."""
    for i, m in fifo_ready(buf, state.config.per_address):
        if m.addr == addr:
            return i
    raise NotEnabled(f"no ready message for address {addr}")


def enabled(state: SystemState) -> list[RuleInstance]:
    """All rule instances whose guard holds, in a fixed enumeration order."""
    cfg = state.config
    per_addr = cfg.per_address
    out: list[RuleInstance] = []
    l1, l2 = state.l1, state.l2

    for c in range(state.n_cores):
        hit = False
        q = state.mrq[c]
        if q:
            req = q[0]
            line = l1[c][req.addr]
            if not line.busy:
                if hit_possible(state, c):
                    hit = True
                    rule = Rule.LoadHit if req.type is S else Rule.StoreHit
                    out.append(RuleInstance(rule, c, req.addr))
                if l1_miss(req, line) and _room(state, state.c2p_rq):
                    out.append(RuleInstance(Rule.L1Miss, c, req.addr))
        for _, msg in fifo_ready(state.p2c[c], per_addr):
            if msg.msg is MsgKind.RESP:
                out.append(RuleInstance(Rule.L2Resp, c, msg.addr))
            elif not hit:
                if l1[c][msg.addr].state is M and not _room(state, state.c2p_rp):
                    continue
                out.append(RuleInstance(Rule.WriteBackReq, c, msg.addr))
        if not hit:
            for a, line in enumerate(l1[c]):
                if line.busy or line.state is I:
                    continue
                if line.state is M and not _room(state, state.c2p_rp):
                    continue
                for target in (S, I) if line.state is M else (I,):
                    out.append(RuleInstance(Rule.Downgrade, c, a, target))
        if can_issue(state, c):
            op = cfg.programs[c][state.procs[c].pc]
            out.append(RuleInstance(Rule.Issue, c, op.addr))

    for _, req in fifo_ready(state.c2p_rq, per_addr):
        line = l2[req.addr]
        if line.state is S:
            if not _room(state, state.p2c[req.id]):
                continue
            if req.type is S:
                for lease in sorted(set(cfg.leases)):
                    pts2 = max(line.rts, req.pts) + lease
                    out.append(RuleInstance(Rule.ShReq_S, req.id, req.addr, pts2))
            else:
                out.append(RuleInstance(Rule.ExReq_S, req.id, req.addr))
        elif line.state is M:
            if not line.busy and line.owner is not None and _room(state, state.p2c[line.owner]):
                out.append(RuleInstance(Rule.Req_M, req.id, req.addr))
        elif cfg.memory and not line.busy and _room(state, state.mem_rq):
            out.append(RuleInstance(Rule.L2Miss, req.id, req.addr))

    for _, wb in fifo_ready(state.c2p_rp, per_addr):
        out.append(RuleInstance(Rule.WriteBackResp, wb.id, wb.addr))

    if cfg.memory:
        for _, rp in fifo_ready(state.mem_rp, per_addr):
            out.append(RuleInstance(Rule.MemResp, None, rp.addr))
        for _, rq in fifo_ready(state.mem_rq, per_addr):
            if rq.type is S and not _room(state, state.mem_rp):
                continue
            out.append(RuleInstance(Rule.MemProcess, None, rq.addr))
        ready_rq = None
        for a, line in enumerate(l2):
            if line.state is M and not line.busy and line.owner is not None \
                    and _room(state, state.p2c[line.owner]):
                out.append(RuleInstance(Rule.L2Downgrade, None, a))
            elif line.state is S and _room(state, state.mem_rq):
                if cfg.evict_guard:
                    if ready_rq is None:
                        ready_rq = {m.addr for _, m in fifo_ready(state.c2p_rq, per_addr)}
                    if a in ready_rq:
                        continue
                out.append(RuleInstance(Rule.L2Evict, None, a))
    return out


# -- actions ----------------------------------------------------------------


def _hit(state: SystemState, inst: RuleInstance):
    c = inst.core
    req = state.mrq[c][0]
    line = state.l1[c][req.addr]
    cfg = state.config
    moved = []
    if inst.rule is Rule.LoadHit:
        if cfg.tso and line.state is M:
            ts = req.pts
        else:
            ts = max(req.pts, line.wts)
        if line.state is M:
            line = replace(line, rts=max(req.pts, line.rts))
        rsp = ProcResponse(S, req.addr, line.data, ts, req.seq)
        history = state.history
    else:
        base = line.rts if "store-at-rts" in cfg.mutations else line.rts + 1
        ts = max(req.pts, base)
        line = replace(line, data=req.data, wts=ts, rts=ts)
        rsp = ProcResponse(M, req.addr, None, ts, req.seq)
        history = state.history + (
            StoreRecord(req.addr, ts, req.data, c, req.seq, state.phys),
        )
    moved.append(f"ts={ts}")
    state = replace(
        state,
        mrq=_set(state.mrq, c, state.mrq[c][1:]),
        mrp=_set(state.mrp, c, state.mrp[c] + (rsp,)),
        l1=_set(state.l1, c, _set(state.l1[c], req.addr, line)),
        history=history,
    )
    state, commits = drain(state, c)
    return state, moved, ((c, req.seq),), commits


def _l1_miss(state: SystemState, inst: RuleInstance):
    c = inst.core
    req = state.mrq[c][0]
    line = state.l1[c][req.addr]
    msg = C2PReq(c, req.type, req.addr, req.pts)
    state = replace(
        state,
        c2p_rq=state.c2p_rq + (msg,),
        l1=_set(state.l1, c, _set(state.l1[c], req.addr, replace(line, busy=True))),
    )
    kind = "GetS" if req.type is S else "GetM"
    return state, [f"enq=c2pRq:{kind}(pts={req.pts})"]


def _l2_resp(state: SystemState, inst: RuleInstance):
    c = inst.core
    i = _ready_index(state, state.p2c[c], inst.addr)
    msg = state.p2c[c][i]
    line = replace(
        state.l1[c][msg.addr], state=msg.state, data=msg.data, busy=False,
        wts=msg.wts, rts=msg.rts,
    )
    state = replace(
        state,
        p2c=_set(state.p2c, c, _drop(state.p2c[c], i)),
        l1=_set(state.l1, c, _set(state.l1[c], msg.addr, line)),
    )
    return state, [f"deq=p2c:{msg.name}(wts={msg.wts},rts={msg.rts})"]


def _writeback(state: SystemState, c: int, a: int, target: CacheState):
    """Downgrade an L1 line; M lines send their data back in a WBRp."""
    line = state.l1[c][a]
    moved = []
    c2p_rp = state.c2p_rp
    if line.state is M:
        c2p_rp = c2p_rp + (WBRp(c, a, line.data, line.wts, line.rts),)
        moved.append(f"enq=c2pRp:WBRp(wts={line.wts},rts={line.rts})")
    state = replace(
        state,
        c2p_rp=c2p_rp,
        l1=_set(state.l1, c, _set(state.l1[c], a, replace(line, state=target))),
    )
    return state, moved


def _downgrade(state: SystemState, inst: RuleInstance):
    return _writeback(state, inst.core, inst.addr, inst.param)


def _writeback_req(state: SystemState, inst: RuleInstance):
    c, a = inst.core, inst.addr
    i = _ready_index(state, state.p2c[c], a)
    state = replace(state, p2c=_set(state.p2c, c, _drop(state.p2c[c], i)))
    moved = ["deq=p2c:WBRq"]
    if state.l1[c][a].state is M:
        state, more = _writeback(state, c, a, S)
        moved += more
    else:
        moved.append("ignored")
    return state, moved


def _sh_req(state: SystemState, inst: RuleInstance):
    i = _ready_index(state, state.c2p_rq, inst.addr)
    req = state.c2p_rq[i]
    line = state.l2[req.addr]
    pts2 = inst.param
    if "no-lease-update" not in state.config.mutations:
        line = replace(line, rts=pts2)
    rsp = P2CMsg(req.id, MsgKind.RESP, req.addr, S, line.data, line.wts, pts2)
    state = replace(
        state,
        c2p_rq=_drop(state.c2p_rq, i),
        l2=_set(state.l2, req.addr, line),
        p2c=_set(state.p2c, req.id, state.p2c[req.id] + (rsp,)),
    )
    return state, [f"enq=p2c:ToS(wts={rsp.wts},rts={pts2})"]


def _ex_req(state: SystemState, inst: RuleInstance):
    i = _ready_index(state, state.c2p_rq, inst.addr)
    req = state.c2p_rq[i]
    line = state.l2[req.addr]
    rsp = P2CMsg(req.id, MsgKind.RESP, req.addr, M, line.data, line.wts, line.rts)
    if "no-owner" in state.config.mutations:
        line = replace(line, state=M)
    else:
        line = replace(line, state=M, owner=req.id)
    state = replace(
        state,
        c2p_rq=_drop(state.c2p_rq, i),
        l2=_set(state.l2, req.addr, line),
        p2c=_set(state.p2c, req.id, state.p2c[req.id] + (rsp,)),
    )
    return state, [f"enq=p2c:ToM(wts={rsp.wts},rts={rsp.rts})"]


def _send_wbrq(state: SystemState, a: int):
    line = state.l2[a]
    o = line.owner
    state = replace(
        state,
        l2=_set(state.l2, a, replace(line, busy=True)),
        p2c=_set(state.p2c, o, state.p2c[o] + (P2CMsg(o, MsgKind.REQ, a),)),
    )
    return state, [f"enq=p2c[{o}]:WBRq"]


def _req_m(state: SystemState, inst: RuleInstance):
    _ready_index(state, state.c2p_rq, inst.addr)
    return _send_wbrq(state, inst.addr)


def _l2_downgrade(state: SystemState, inst: RuleInstance):
    return _send_wbrq(state, inst.addr)


def _writeback_resp(state: SystemState, inst: RuleInstance):
    i = _ready_index(state, state.c2p_rp, inst.addr)
    wb = state.c2p_rp[i]
    line = replace(
        state.l2[wb.addr], state=S, data=wb.data, busy=False, wts=wb.wts, rts=wb.rts
    )
    state = replace(
        state, c2p_rp=_drop(state.c2p_rp, i), l2=_set(state.l2, wb.addr, line)
    )
    return state, [f"deq=c2pRp:WBRp(wts={wb.wts},rts={wb.rts})"]


def _l2_miss(state: SystemState, inst: RuleInstance):
    a = inst.addr
    _ready_index(state, state.c2p_rq, a)
    state = replace(
        state,
        mem_rq=state.mem_rq + (MemRq(S, a),),
        l2=_set(state.l2, a, replace(state.l2[a], busy=True)),
    )
    return state, ["enq=memRq:fetch"]


def _mem_resp(state: SystemState, inst: RuleInstance):
    i = _ready_index(state, state.mem_rp, inst.addr)
    rp = state.mem_rp[i]
    mts = state.mts
    line = replace(state.l2[rp.addr], state=S, data=rp.data, busy=False, wts=mts, rts=mts)
    state = replace(
        state, mem_rp=_drop(state.mem_rp, i), l2=_set(state.l2, rp.addr, line)
    )
    return state, [f"deq=memRp wts=rts={mts}"]


def _l2_evict(state: SystemState, inst: RuleInstance):
    a = inst.addr
    line = state.l2[a]
    mts = state.mts if "no-mts-update" in state.config.mutations else max(line.rts, state.mts)
    state = replace(
        state,
        mem_rq=state.mem_rq + (MemRq(M, a, line.data),),
        l2=_set(state.l2, a, replace(line, state=I)),
        mts=mts,
    )
    return state, [f"enq=memRq:writeback mts={mts}"]


def _mem_process(state: SystemState, inst: RuleInstance):
    i = _ready_index(state, state.mem_rq, inst.addr)
    rq = state.mem_rq[i]
    state = replace(state, mem_rq=_drop(state.mem_rq, i))
    if rq.type is S:
        state = replace(state, mem_rp=state.mem_rp + (MemRp(rq.addr, state.mem[rq.addr]),))
        return state, ["enq=memRp"]
    state = replace(state, mem=_set(state.mem, rq.addr, rq.data))
    return state, ["mem-write"]


_ACTIONS = {
    Rule.L1Miss: _l1_miss,
    Rule.L2Resp: _l2_resp,
    Rule.Downgrade: _downgrade,
    Rule.WriteBackReq: _writeback_req,
    Rule.ShReq_S: _sh_req,
    Rule.ExReq_S: _ex_req,
    Rule.Req_M: _req_m,
    Rule.WriteBackResp: _writeback_resp,
    Rule.L2Miss: _l2_miss,
    Rule.MemResp: _mem_resp,
    Rule.L2Downgrade: _l2_downgrade,
    Rule.L2Evict: _l2_evict,
    Rule.MemProcess: _mem_process,
}


def fire(state: SystemState, inst: RuleInstance) -> tuple[SystemState, TransitionRecord]:
    """Apply ``inst`` without re-checking its guard (callers got it from enabled)."""
    phys = state.phys + 1
    state = replace(state, phys=phys)
    if inst.rule is Rule.Issue:
        seq = state.procs[inst.core].pc
        return issue(state, inst.core), TransitionRecord(inst, phys, (f"seq={seq}",))
    if inst.rule in (Rule.LoadHit, Rule.StoreHit):
        state, moved, dequeued, commits = _hit(state, inst)
        return state, TransitionRecord(inst, phys, tuple(moved), dequeued, tuple(commits))
    state, moved = _ACTIONS[inst.rule](state, inst)
    return state, TransitionRecord(inst, phys, tuple(moved))


def apply(state: SystemState, inst: RuleInstance) -> tuple[SystemState, TransitionRecord]:
    if inst not in enabled(state):
        raise NotEnabled(f"{inst} is not enabled")
    return fire(state, inst)
