"""Domain types, FIFO buffers, configuration and initial system state.

Every value here is immutable.  A :class:`SystemState` is a pure snapshot and
rules build new snapshots, so states can be hashed and deduplicated by the
explorer.  Fields that only record *when* something happened (the physical
clock, the commit trace, the physical time of each store) are excluded from
equality so that two states reached along different schedules compare equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Optional

Value = Any


class TardisError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(TardisError, ValueError):
    pass


class EmptyBuffer(TardisError):
    pass


class BufferFull(TardisError):
    pass


class CacheState(IntEnum):
    I = 0
    S = 1
    M = 2

    def __str__(self) -> str:
        return self.name


class MsgKind(Enum):
    REQ = "Req"
    RESP = "Resp"


@dataclass(frozen=True, slots=True)
class L1Line:
    state: CacheState = CacheState.I
    data: Value = None
    busy: bool = False
    wts: int = 0
    rts: int = 0


@dataclass(frozen=True, slots=True)
class L2Line:
    state: CacheState = CacheState.S
    data: Value = None
    busy: bool = False
    owner: Optional[int] = None
    wts: int = 0
    rts: int = 0


@dataclass(frozen=True, slots=True)
class ProcRequest:
    """Entry of a core's memory request buffer.

    ``type`` is S for a load and M for a store.  ``seq`` is the program index
    of the operation; it is bookkeeping used to match commits to programs.
    """

    type: CacheState
    addr: int
    data: Value
    pts: int
    seq: int


@dataclass(frozen=True, slots=True)
class ProcResponse:
    type: CacheState
    addr: int
    data: Value
    pts: int
    seq: int


@dataclass(frozen=True, slots=True)
class C2PReq:
    id: int
    type: CacheState
    addr: int
    pts: int


@dataclass(frozen=True, slots=True)
class WBRp:
    id: int
    addr: int
    data: Value
    wts: int
    rts: int


@dataclass(frozen=True, slots=True)
class P2CMsg:
    id: int
    msg: MsgKind
    addr: int
    state: Optional[CacheState] = None
    data: Value = None
    wts: int = 0
    rts: int = 0

    @property
    def name(self) -> str:
        if self.msg is MsgKind.REQ:
            return "WBRq"
        return "ToM" if self.state is CacheState.M else "ToS"


@dataclass(frozen=True, slots=True)
class MemRq:
    type: CacheState  # S = fetch, M = writeback
    addr: int
    data: Value = None


@dataclass(frozen=True, slots=True)
class MemRp:
    addr: int
    data: Value


@dataclass(frozen=True, slots=True)
class StoreRecord:
    addr: int
    ts: int
    value: Value
    core: Optional[int]  # None for the synthetic initial store
    seq: Optional[int]
    phys: int = field(default=0, compare=False)


@dataclass(frozen=True, slots=True)
class CommitEvent:
    core: int
    seq: int
    kind: str  # "Ld" or "St"
    addr: int
    value: Value
    ts: int
    phys: int

    def to_line(self, addr_names: tuple[str, ...] | None = None) -> str:
        addr = addr_names[self.addr] if addr_names else self.addr
        return (
            f"commit core={self.core} seq={self.seq} op={self.kind} addr={addr} "
            f"val={self.value} ts={self.ts} phys={self.phys}"
        )


@dataclass(frozen=True, slots=True)
class ProcState:
    pc: int = 0
    outstanding: bool = False
    last_commit_ts: int = 0
    last_load_ts: int = 0
    last_store_ts: int = 0


@dataclass(frozen=True, slots=True)
class Op:
    kind: str  # "Ld" or "St"
    addr: int
    value: Value = None


# -- FIFO buffers -----------------------------------------------------------
#
# Buffers are tuples.  ``addr=None`` selects strict FIFO behaviour; passing an
# address gives the per-address view where only same-address order matters.


def fifo_enq(buf: tuple, msg, capacity: Optional[int] = None) -> tuple:
    if capacity is not None and len(buf) >= capacity:
        raise BufferFull(f"buffer holds {len(buf)} of {capacity}")
    return buf + (msg,)


def _index(buf: tuple, addr: Optional[int]) -> int:
    if addr is None:
        if not buf:
            raise EmptyBuffer("buffer is empty")
        return 0
    for i, m in enumerate(buf):
        if m.addr == addr:
            return i
    raise EmptyBuffer(f"no message for address {addr}")


def fifo_head(buf: tuple, addr: Optional[int] = None):
    return buf[_index(buf, addr)]


def fifo_deq(buf: tuple, addr: Optional[int] = None) -> tuple:
    i = _index(buf, addr)
    return buf[:i] + buf[i + 1 :]


def fifo_ready(buf: tuple, per_address: bool) -> list[tuple[int, Any]]:
    """Messages that may be consumed now, as ``(index, message)`` pairs."""
    if not buf:
        return []
    if not per_address:
        return [(0, buf[0])]
    seen = set()
    out = []
    for i, m in enumerate(buf):
        if m.addr not in seen:
            seen.add(m.addr)
            out.append((i, m))
    return out


def is_ready(buf: tuple, index: int, per_address: bool) -> bool:
    if not per_address:
        return index == 0
    addr = buf[index].addr
    return all(m.addr != addr for m in buf[:index])


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class Config:
    cores: int
    addrs: tuple[str, ...]
    programs: tuple[tuple[Op, ...], ...]
    init_values: tuple[Value, ...] = ()
    memory: bool = False
    tso: bool = False
    fifo: str = "strict"
    capacity: Optional[int] = None
    leases: tuple[int, ...] = (10,)
    seed: int = 0
    loadhit_guard: str = "owner"
    fresh_values: bool = True
    evict_guard: bool = True
    eager_issue: bool = False
    mutations: frozenset = frozenset()

    def __post_init__(self):
        if self.cores <= 0:
            raise ConfigError("at least one core is required")
        if not self.addrs:
            raise ConfigError("address set is empty")
        if len(set(self.addrs)) != len(self.addrs):
            raise ConfigError("duplicate address names")
        if not self.leases or any(l < 0 for l in self.leases):
            raise ConfigError("lease must be a non-negative integer")
        if self.fifo not in ("strict", "per-address"):
            raise ConfigError(f"unknown fifo mode {self.fifo!r}")
        if self.loadhit_guard not in ("owner", "lease"):
            raise ConfigError(f"unknown loadhit guard {self.loadhit_guard!r}")
        if self.capacity is not None and self.capacity < 1:
            raise ConfigError("buffer capacity must be positive")
        if len(self.programs) > self.cores:
            raise ConfigError("more programs than cores")
        for prog in self.programs:
            for op in prog:
                if op.kind not in ("Ld", "St") or not 0 <= op.addr < len(self.addrs):
                    raise ConfigError(f"bad operation {op}")
        if self.init_values and len(self.init_values) != len(self.addrs):
            raise ConfigError("one initial value per address is required")
        if len(self.programs) < self.cores:
            pad = tuple(() for _ in range(self.cores - len(self.programs)))
            object.__setattr__(self, "programs", tuple(self.programs) + pad)

    @property
    def lease(self) -> int:
        return self.leases[0]

    @property
    def per_address(self) -> bool:
        return self.fifo == "per-address"

    @property
    def total_ops(self) -> int:
        return sum(len(p) for p in self.programs)

    def initial_value(self, addr: int) -> Value:
        if self.fresh_values:
            return f"{self.addrs[addr]}.init"
        if self.init_values:
            return self.init_values[addr]
        return 0

    def op_value(self, core: int, seq: int) -> Value:
        op = self.programs[core][seq]
        if self.fresh_values and op.kind == "St":
            return f"c{core}.{seq}"
        return op.value

    def addr_index(self, name: str) -> int:
        try:
            return self.addrs.index(name)
        except ValueError:
            raise ConfigError(f"unknown address {name!r}") from None


def parse_value(text: str) -> Value:
    try:
        return int(text)
    except ValueError:
        return text


_ON = {"on": True, "true": True, "yes": True, "1": True,
       "off": False, "false": False, "no": False, "0": False}


def _parse_addrs(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text.isdigit():
        n = int(text)
        if n > 26:
            raise ConfigError("too many addresses")
        return tuple("abcdefghijklmnopqrstuvwxyz"[:n])
    return tuple(t for t in re.split(r"[\s,]+", text) if t)


def _parse_op(text: str, addrs: tuple[str, ...]) -> Op:
    parts = text.split()
    if not parts:
        raise ConfigError("empty operation")
    kind = parts[0].capitalize()
    if kind == "Ld" and len(parts) == 2:
        return Op("Ld", _addr(parts[1], addrs))
    if kind == "St" and len(parts) == 3:
        return Op("St", _addr(parts[1], addrs), parse_value(parts[2]))
    raise ConfigError(f"cannot parse operation {text!r}")


def _addr(name: str, addrs: tuple[str, ...]) -> int:
    if name not in addrs:
        raise ConfigError(f"unknown address {name!r}")
    return addrs.index(name)


def parse_config(text: str, **overrides) -> Config:
    """Parse the line-oriented ``key = value`` / ``prog <core>: ...`` format.

    Lines starting with ``forbid:`` or ``allow:`` are skipped here; the litmus
    parser handles them.  Keyword overrides (already typed) win over the file.
    """
    kv: dict[str, str] = {}
    progs: dict[int, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(("forbid:", "allow:")):
            continue
        m = re.match(r"prog\s+(\d+)\s*:(.*)$", line)
        if m:
            progs[int(m.group(1))] = m.group(2)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        kv[key.lower()] = val

    known = {"cores", "addrs", "mode", "memory", "lease", "fifo", "capacity",
             "seed", "values", "loadhit_guard", "init", "evict_guard", "issue"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")

    try:
        addrs = _parse_addrs(kv.get("addrs", "1"))
        cores = int(kv.get("cores", str(max(progs, default=-1) + 1 or 1)))
        programs = []
        for c in range(cores):
            body = progs.get(c, "")
            ops = [s.strip() for s in body.split(";") if s.strip()]
            programs.append(tuple(_parse_op(o, addrs) for o in ops))
        if progs and max(progs) >= cores:
            raise ConfigError("program for a core that does not exist")
        init_values: tuple = ()
        if "init" in kv:
            pairs = dict(p.split(":", 1) for p in re.split(r"[\s,]+", kv["init"]) if p)
            init_values = tuple(parse_value(pairs.get(a, "0")) for a in addrs)
        mode = kv.get("mode", "sc").lower()
        if mode not in ("sc", "tso"):
            raise ConfigError(f"unknown mode {mode!r}")
        values = kv.get("values", "fresh").lower()
        if values not in ("fresh", "literal"):
            raise ConfigError(f"unknown values policy {values!r}")
        cap = kv.get("capacity", "unbounded").lower()
        issue_mode = kv.get("issue", "scheduled").lower()
        if issue_mode not in ("scheduled", "eager"):
            raise ConfigError(f"unknown issue policy {issue_mode!r}")
        args = dict(
            cores=cores,
            addrs=addrs,
            programs=tuple(programs),
            init_values=init_values,
            memory=_ON[kv.get("memory", "off").lower()],
            tso=mode == "tso",
            fifo=kv.get("fifo", "strict").lower(),
            capacity=None if cap in ("unbounded", "none", "inf") else int(cap),
            leases=tuple(int(x) for x in re.split(r"[\s,]+", kv.get("lease", "10")) if x),
            seed=int(kv.get("seed", "0")),
            loadhit_guard=kv.get("loadhit_guard", "owner").lower(),
            fresh_values=values == "fresh",
            evict_guard=_ON[kv.get("evict_guard", "on").lower()],
            eager_issue=issue_mode == "eager",
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None
    args.update(overrides)
    return Config(**args)


def load_config(path: str, **overrides) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


# -- system state -----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SystemState:
    config: Config = field(compare=False, repr=False)
    l1: tuple[tuple[L1Line, ...], ...]
    l2: tuple[L2Line, ...]
    mrq: tuple[tuple[ProcRequest, ...], ...]
    mrp: tuple[tuple[ProcResponse, ...], ...]
    c2p_rq: tuple[C2PReq, ...]
    c2p_rp: tuple[WBRp, ...]
    p2c: tuple[tuple[P2CMsg, ...], ...]
    mem: tuple[Value, ...]
    mts: int
    mem_rq: tuple[MemRq, ...]
    mem_rp: tuple[MemRp, ...]
    procs: tuple[ProcState, ...]
    history: tuple[StoreRecord, ...]
    phys: int = field(default=0, compare=False)
    trace: tuple[CommitEvent, ...] = field(default=(), compare=False)

    @property
    def n_cores(self) -> int:
        return len(self.l1)

    @property
    def n_addrs(self) -> int:
        return len(self.l2)

    def pending(self) -> bool:
        """True while any core still has a request waiting in its mrq."""
        return any(self.mrq)

    def done(self) -> bool:
        progs = self.config.programs
        return not self.pending() and all(
            p.pc >= len(progs[c]) for c, p in enumerate(self.procs)
        )


def init_state(config: Config) -> SystemState:
    """Build the initial state and preload every mrq with its first operation."""
    from tardis.processor import issue

    n, na = config.cores, len(config.addrs)
    vals = tuple(config.initial_value(a) for a in range(na))
    l1 = tuple(tuple(L1Line() for _ in range(na)) for _ in range(n))
    if config.memory:
        l2 = tuple(L2Line(state=CacheState.I) for _ in range(na))
        mem = vals
    else:
        l2 = tuple(L2Line(state=CacheState.S, data=v) for v in vals)
        mem = tuple(None for _ in range(na))
    history = tuple(StoreRecord(a, 0, vals[a], None, None, 0) for a in range(na))
    empty = tuple(() for _ in range(n))
    state = SystemState(
        config=config,
        l1=l1,
        l2=l2,
        mrq=empty,
        mrp=empty,
        c2p_rq=(),
        c2p_rp=(),
        p2c=empty,
        mem=mem,
        mts=0,
        mem_rq=(),
        mem_rp=(),
        procs=tuple(ProcState() for _ in range(n)),
        history=history,
    )
    for c in range(n):
        state = issue(state, c)
    return state
