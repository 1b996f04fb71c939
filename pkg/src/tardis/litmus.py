"""Litmus tests: file format, brute-force SC/TSO outcome oracles, runner.

Registers are named by ``(core, index)`` where ``index`` is the program
position of the load.  An outcome is the tuple of loaded values ordered by
``(core, index)``.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from tardis.core import Config, ConfigError, Op, TardisError, init_state, parse_value
from tardis.explorer import ScheduleConfig, run_random

Register = tuple[int, int]
Outcome = tuple


class ForbiddenOutcome(TardisError):
    def __init__(self, outcome: Outcome, seed: int, trace: tuple):
        self.outcome = outcome
        self.seed = seed
        self.trace = trace
        super().__init__(f"forbidden outcome {format_outcome(outcome)} at seed {seed}")


@dataclass(frozen=True)
class Predicate:
    """Conjunction of register equalities, e.g. ``r(0,1)=0 & r(1,1)=0``."""

    terms: tuple[tuple[Register, object], ...]

    def matches(self, regs: tuple[Register, ...], outcome: Outcome) -> bool:
        val = dict(zip(regs, outcome))
        return all(val.get(r) == v for r, v in self.terms)

    def __str__(self) -> str:
        return " & ".join(f"r({c},{i})={v}" for (c, i), v in self.terms)


@dataclass(frozen=True)
class LitmusSpec:
    name: str
    config: Config
    forbid: tuple[Predicate, ...] = ()
    allow: tuple[Predicate, ...] = ()

    @property
    def registers(self) -> tuple[Register, ...]:
        return tuple(
            (c, i)
            for c, prog in enumerate(self.config.programs)
            for i, op in enumerate(prog)
            if op.kind == "Ld"
        )

    def is_forbidden(self, outcome: Outcome) -> bool:
        return any(p.matches(self.registers, outcome) for p in self.forbid)


_TERM = re.compile(r"r\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*=\s*(\S+)")


def _parse_predicate(text: str, regs: tuple[Register, ...]) -> Predicate:
    terms = []
    for part in text.split("&"):
        m = _TERM.fullmatch(part.strip())
        if not m:
            raise ConfigError(f"bad register term {part.strip()!r}")
        reg = (int(m.group(1)), int(m.group(2)))
        if reg not in regs:
            raise ConfigError(f"r{reg} is not a load")
        terms.append((reg, parse_value(m.group(3))))
    return Predicate(tuple(terms))


def parse_litmus(text: str, name: str = "litmus", **overrides) -> LitmusSpec:
    """Parse a litmus file.  Values default to literal (the file's constants)."""
    from tardis.core import parse_config

    if not re.search(r"^\s*values\s*=", text, re.M):
        overrides.setdefault("fresh_values", False)
    cfg = parse_config(text, **overrides)
    spec = LitmusSpec(name, cfg)
    forbid, allow = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        for prefix, dest in (("forbid:", forbid), ("allow:", allow)):
            if line.startswith(prefix):
                dest.append(_parse_predicate(line[len(prefix):], spec.registers))
    return replace(spec, forbid=tuple(forbid), allow=tuple(allow))


def load_litmus(path: str, **overrides) -> LitmusSpec:
    import os

    with open(path) as fh:
        name = os.path.splitext(os.path.basename(path))[0]
        return parse_litmus(fh.read(), name, **overrides)


def format_outcome(outcome: Outcome) -> str:
    return "(" + ",".join(str(v) for v in outcome) + ")"


# -- brute-force oracles ------------------------------------------------------
# Both work on the program text only.  SC interleaves per-core program
# prefixes against an atomic memory; TSO tries every permutation of the
# operations as the global memory order and keeps those the ordering rule
# admits.


def _ops(config: Config) -> list[tuple[int, int, Op]]:
    return [(c, i, op) for c, prog in enumerate(config.programs) for i, op in enumerate(prog)]


def _registers(config: Config) -> list[Register]:
    return [(c, i) for c, i, op in _ops(config) if op.kind == "Ld"]


def sc_outcomes(config: Config) -> frozenset:
    regs = _registers(config)
    progs = config.programs
    out = set()

    def step(pcs: tuple, mem: dict, loaded: dict) -> None:
        progressed = False
        for c, prog in enumerate(progs):
            i = pcs[c]
            if i == len(prog):
                continue
            progressed = True
            op = prog[i]
            nxt = pcs[:c] + (i + 1,) + pcs[c + 1 :]
            if op.kind == "St":
                step(nxt, {**mem, op.addr: op.value}, loaded)
            else:
                step(nxt, mem, {**loaded, (c, i): mem[op.addr]})
        if not progressed:
            out.add(tuple(loaded[r] for r in regs))

    mem0 = {a: config.initial_value(a) for a in range(len(config.addrs))}
    step((0,) * len(progs), mem0, {})
    return frozenset(out)


def _tso_must_order(x: Op, y: Op) -> bool:
    # program-earlier x, program-later y; only St -> Ld may be reordered
    return not (x.kind == "St" and y.kind == "Ld")


def _tso_orders(config: Config):
    ops = _ops(config)
    pairs = [
        (a, b) for a, b in itertools.combinations(range(len(ops)), 2)
        if ops[a][0] == ops[b][0] and _tso_must_order(ops[a][2], ops[b][2])
    ]
    for perm in itertools.permutations(range(len(ops))):
        pos = {k: n for n, k in enumerate(perm)}
        if all(pos[a] < pos[b] for a, b in pairs):
            yield perm, pos


def tso_outcomes(config: Config) -> frozenset:
    ops = _ops(config)
    regs = _registers(config)
    out = set()
    for perm, pos in _tso_orders(config):
        loaded = {}
        for k in perm:
            c, i, op = ops[k]
            if op.kind != "Ld":
                continue
            # stores before the load in memory order, plus own program-earlier stores
            visible = [
                j for j, (c2, i2, op2) in enumerate(ops)
                if op2.kind == "St" and op2.addr == op.addr
                and (pos[j] < pos[k] or (c2 == c and i2 < i))
            ]
            if visible:
                loaded[(c, i)] = ops[max(visible, key=pos.__getitem__)][2].value
            else:
                loaded[(c, i)] = config.initial_value(op.addr)
        out.add(tuple(loaded[r] for r in regs))
    return frozenset(out)


def allowed_outcomes(config: Config, tso: bool = False) -> frozenset:
    """Every outcome some legal execution produces under SC or TSO."""
    return tso_outcomes(config) if tso else sc_outcomes(config)


# -- runner ---------------------------------------------------------------------


@dataclass
class LitmusResult:
    spec: LitmusSpec
    runs: int
    histogram: Counter = field(default_factory=Counter)
    allowed: frozenset = frozenset()
    violations: Counter = field(default_factory=Counter)
    forbidden_seen: dict = field(default_factory=dict)  # outcome -> first seed
    unexpected: dict = field(default_factory=dict)  # outside the oracle set

    @property
    def ok(self) -> bool:
        return not self.forbidden_seen and not self.unexpected and not self.violations

    def effective_forbid(self) -> list[Predicate]:
        """Forbid lines the active model's oracle agrees with."""
        regs = self.spec.registers
        return [p for p in self.spec.forbid if not any(p.matches(regs, o) for o in self.allowed)]

    def missing_allowed(self) -> list[Predicate]:
        regs = self.spec.registers
        return [
            p for p in self.spec.allow
            if not any(p.matches(regs, o) for o in self.histogram)
        ]

    def lines(self) -> list[str]:
        mode = "tso" if self.spec.config.tso else "sc"
        out = [f"litmus {self.spec.name} mode={mode} runs={self.runs}"]
        out += [
            f"outcome {format_outcome(o)} count={n}"
            for o, n in sorted(self.histogram.items(), key=lambda x: str(x[0]))
        ]
        out.append("oracle " + " ".join(format_outcome(o) for o in sorted(self.allowed, key=str)))
        regs = self.spec.registers
        for p in self.spec.forbid:
            if any(p.matches(regs, o) for o in self.allowed):
                out.append(f"note forbid {p} is allowed by the {mode} oracle; not enforced")
        for p in self.missing_allowed():
            out.append(f"note allow {p} never observed")
        for o, seed in sorted(self.forbidden_seen.items(), key=str):
            out.append(f"FAIL forbidden {format_outcome(o)} seed={seed}")
        for o, seed in sorted(self.unexpected.items(), key=str):
            out.append(f"FAIL outside-oracle {format_outcome(o)} seed={seed}")
        for k, n in sorted(self.violations.items()):
            out.append(f"FAIL {k} count={n}")
        out.append("verdict " + ("PASS" if self.ok else "FAIL"))
        return out


def _one(args):
    config, seed, checks = args
    sched = ScheduleConfig(
        seed=seed,
        max_steps=50 * max(1, config.total_ops) + 1000,
        check_states=checks,
        check_steps=checks,
        check_trace=checks,
    )
    state, _, stats = run_random(init_state(config), sched)
    loads = {(e.core, e.seq): e.value for e in state.trace if e.kind == "Ld"}
    return seed, loads, stats.violations, state.trace


def run_litmus(
    spec: LitmusSpec,
    runs: int,
    seed: int = 0,
    jobs: int = 1,
    checks: bool = True,
    strict: bool = False,
) -> LitmusResult:
    """Execute ``runs`` seeded random schedules (seeds ``seed .. seed+runs-1``).

    With ``strict`` the first forbidden outcome raises :class:`ForbiddenOutcome`.
    """
    res = LitmusResult(spec, runs, allowed=allowed_outcomes(spec.config, spec.config.tso))
    enforced = res.effective_forbid()
    regs = spec.registers
    work = [(spec.config, s, checks) for s in range(seed, seed + runs)]
    pool: Optional[ProcessPoolExecutor] = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        results = map(_one, work) if pool is None else pool.map(_one, work, chunksize=64)
        for s, loads, viol, trace in results:
            outcome = tuple(loads.get(r) for r in regs)
            res.histogram[outcome] += 1
            res.violations.update(viol)
            if any(p.matches(regs, outcome) for p in enforced):
                if strict:
                    raise ForbiddenOutcome(outcome, s, trace)
                res.forbidden_seen.setdefault(outcome, s)
            elif outcome not in res.allowed:
                res.unexpected.setdefault(outcome, s)
    finally:
        if pool is not None:
            pool.shutdown()
    return res
