"""Random and exhaustive drivers that sweep the oracles over executions."""

from __future__ import annotations

import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from tardis.consistency import check_order_sets, check_sc, check_theorem1, check_tso
from tardis.core import SystemState, TardisError, init_state
from tardis.oracle import Violation, check_lattice_step, check_state
from tardis.processor import MonotonicityViolation, check_commit_order
from tardis.protocol import MUTATIONS, NotEnabled, Rule, RuleInstance, enabled, fire

VOLUNTARY = frozenset({Rule.Downgrade, Rule.WriteBackReq, Rule.WriteBackResp})
RARE_RULES = (Rule.Downgrade, Rule.L2Downgrade, Rule.L2Evict)


class LivelockSuspect(TardisError):
    def __init__(self, stats: "ExploreStats", state: SystemState):
        self.stats = stats
        self.state = state
        top = ", ".join(f"{r}={n}" for r, n in stats.rule_counts.most_common(5))
        super().__init__(f"no completion within {stats.transitions} steps; busiest rules: {top}")


class ReplayError(NotEnabled):
    def __init__(self, index: int, inst: RuleInstance):
        self.index = index
        self.instance = inst
        super().__init__(f"step {index}: {inst} is not enabled")


@dataclass
class ScheduleConfig:
    kind: str = "random"  # random | adversarial-voluntary
    seed: int = 0
    max_steps: int = 10_000
    weights: dict = field(default_factory=lambda: {r: 0.05 for r in RARE_RULES})
    check_states: bool = True
    check_steps: bool = True
    check_trace: bool = True

    def __post_init__(self):
        if self.kind not in ("random", "adversarial-voluntary"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("rule weights must be positive")


@dataclass
class ExploreStats:
    states: int = 0
    transitions: int = 0
    depth: int = 0
    terminal: int = 0
    violations: Counter = field(default_factory=Counter)
    max_queue: dict = field(default_factory=dict)
    rule_counts: Counter = field(default_factory=Counter)
    outcomes: Counter = field(default_factory=Counter)
    first_violation: Optional[Violation] = None
    path: Optional[list] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, violations: Iterable[Violation], path_fn) -> None:
        for v in violations:
            self.violations[v.lemma] += 1
            if self.first_violation is None:
                self.first_violation = v
                self.path = path_fn()

    def observe_queues(self, s: SystemState) -> None:
        sizes = {
            "mrq": max(len(q) for q in s.mrq),
            "c2pRq": len(s.c2p_rq),
            "c2pRp": len(s.c2p_rp),
            "p2c": max(len(q) for q in s.p2c),
            "memRq": len(s.mem_rq),
            "memRp": len(s.mem_rp),
        }
        for k, v in sizes.items():
            if v > self.max_queue.get(k, 0):
                self.max_queue[k] = v

    def lines(self) -> list[str]:
        out = [
            f"stat states={self.states}",
            f"stat transitions={self.transitions}",
            f"stat depth={self.depth}",
            f"stat terminal={self.terminal}",
            f"stat violations={sum(self.violations.values())}",
        ]
        out += [f"stat violation.{k}={v}" for k, v in sorted(self.violations.items())]
        out += [f"stat max_queue.{k}={v}" for k, v in sorted(self.max_queue.items())]
        out += [f"stat rule.{r}={n}" for r, n in sorted(self.rule_counts.items(), key=lambda x: str(x[0]))]
        if self.first_violation is not None:
            out.append(f"first {self.first_violation}")
            for i, inst in enumerate(self.path or []):
                out.append(f"path {i} {inst}")
        return out

    def summary(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        return (
            f"{verdict}: {self.states} states, {self.transitions} transitions, "
            f"depth {self.depth}, {sum(self.violations.values())} violations"
        )


def check_trace(state: SystemState) -> list[Violation]:
    """Whole-run checks on a completed execution."""
    tso = state.config.tso
    out = check_theorem1(state.trace, state.history) if not tso else []
    out += [Violation("commit-order", p) for p in check_commit_order(state.trace, tso)]
    if tso:
        out += check_tso(state.trace, state.history)
    else:
        out += check_sc(state.trace, state.history)
        out += check_order_sets(state.trace, state.history)
    return out


def _pick(rng: random.Random, en: list[RuleInstance], sched: ScheduleConfig) -> RuleInstance:
    if sched.kind == "adversarial-voluntary":
        for inst in en:
            if inst.rule in VOLUNTARY:
                return inst
    weights = [sched.weights.get(i.rule, 1.0) for i in en]
    return rng.choices(en, weights=weights)[0]


def run_random(state: SystemState, sched: ScheduleConfig):
    """Drive one execution with a seeded scheduler.

    Returns ``(final_state, records, stats)``.  The run stops at the first
    violation (reported in ``stats``).  Raises :class:`LivelockSuspect` when
    ``max_steps`` pass with requests still pending.
    """
    rng = random.Random(sched.seed)
    stats = ExploreStats(states=1)
    records = []
    path: list[RuleInstance] = []
    while not state.done():
        en = enabled(state)
        if sched.check_states:
            stats.record(check_state(state, en), lambda: list(path))
            if not stats.ok:
                return state, records, stats
        if not en:
            stats.record([Violation("deadlock", "no rule enabled")], lambda: list(path))
            return state, records, stats
        if stats.transitions >= sched.max_steps:
            raise LivelockSuspect(stats, state)
        inst = _pick(rng, en, sched)
        try:
            child, rec = fire(state, inst)
        except MonotonicityViolation as exc:
            stats.record([Violation("monotonicity", str(exc))], lambda: path + [inst])
            return state, records, stats
        path.append(inst)
        records.append(rec)
        stats.transitions += 1
        stats.states += 1
        stats.rule_counts[inst.rule] += 1
        if sched.check_steps:
            stats.record(check_lattice_step(state, rec, child), lambda: list(path))
        state = child
        stats.observe_queues(state)
        if not stats.ok:
            return state, records, stats
    if sched.check_states:
        stats.record(check_state(state), lambda: list(path))
    if sched.check_trace:
        stats.record(check_trace(state), lambda: list(path))
    stats.terminal = 1
    stats.depth = stats.transitions
    return state, records, stats


def replay(init: SystemState, path: Iterable[RuleInstance]) -> SystemState:
    state = init
    for i, inst in enumerate(path):
        if inst not in enabled(state):
            raise ReplayError(i, inst)
        state, _ = fire(state, inst)
    return state


def replay_violations(init: SystemState, path: list[RuleInstance]) -> list[Violation]:
    """Re-run a counterexample path and report what the oracles say at its end."""
    state = init
    found: list[Violation] = []
    for i, inst in enumerate(path):
        if inst not in enabled(state):
            raise ReplayError(i, inst)
        try:
            child, rec = fire(state, inst)
        except MonotonicityViolation as exc:
            return found + [Violation("monotonicity", str(exc))]
        if i == len(path) - 1:
            found += check_lattice_step(state, rec, child)
        state = child
    found += check_state(state)
    if state.done():
        found += check_trace(state)
    return found


# -- breadth-first exploration ----------------------------------------------


def _visit(state: SystemState):
    en = enabled(state)
    vs = check_state(state, en)
    if state.done():
        vs += check_trace(state)
    return vs, en


def _expand(state: SystemState, en: list[RuleInstance]):
    out = []
    for inst in en:
        try:
            child, rec = fire(state, inst)
        except MonotonicityViolation as exc:
            out.append((inst, None, [Violation("monotonicity", str(exc))]))
            continue
        out.append((inst, child, check_lattice_step(state, rec, child)))
    return out


def _expand_and_visit(item):
    state, en = item
    out = []
    for inst, child, edge_vs in _expand(state, en):
        out.append((inst, child, edge_vs, _visit(child) if child is not None else None))
    return out


def explore_bfs(init: SystemState, depth: int, jobs: int = 1) -> ExploreStats:
    """Exhaustive breadth-first sweep of every state within ``depth`` rules.

    States are deduplicated by value (the physical clock and commit trace do
    not take part in equality).  Every new state goes through the per-state
    oracles, every edge through the lattice step check, and completed runs
    through the trace checks.  A violating state is recorded but not
    expanded; the first violation keeps its shortest path from ``init``.
    """
    stats = ExploreStats()
    parent: dict[SystemState, Optional[tuple[SystemState, RuleInstance]]] = {init: None}

    def path_to(s: SystemState, extra: Optional[RuleInstance] = None):
        steps = [] if extra is None else [extra]
        while parent[s] is not None:
            s, inst = parent[s]
            steps.append(inst)
        return steps[::-1]

    vs, en = _visit(init)
    stats.record(vs, lambda: [])
    stats.observe_queues(init)
    stats.terminal += init.done()
    frontier = [] if vs else [(init, en)]
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        for level in range(depth):
            if not frontier:
                break
            if pool is None:
                results = map(_expand_and_visit, frontier)
            else:
                chunk = max(1, len(frontier) // (jobs * 4))
                results = pool.map(_expand_and_visit, frontier, chunksize=chunk)
            nxt = []
            for (s, _), succ in zip(frontier, results):
                for inst, child, edge_vs, visit in succ:
                    stats.transitions += 1
                    stats.rule_counts[inst.rule] += 1
                    stats.record(edge_vs, lambda: path_to(s, inst))
                    if child is None or child in parent:
                        continue
                    parent[child] = (s, inst)
                    vs, en = visit
                    stats.record(vs, lambda: path_to(child))
                    stats.observe_queues(child)
                    stats.terminal += child.done()
                    stats.depth = level + 1
                    if not vs:
                        nxt.append((child, en))
            frontier = nxt
    finally:
        if pool is not None:
            pool.shutdown()
    stats.states = len(parent)
    return stats


def mutation_suite(config, depth: int, mutations=MUTATIONS, jobs: int = 1) -> dict:
    """Explore each single-mutation variant; returns name -> ExploreStats."""
    out = {}
    for name in mutations:
        cfg = replace(config, mutations=frozenset({name}))
        out[name] = explore_bfs(init_state(cfg), depth, jobs)
    return out
