"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (the lines are printed in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""
import contextlib
import io
import os
import random
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from tardis.cli import main as cli_main
from tardis.consistency import check_order_sets, check_sc, check_theorem1, check_tso
from tardis.core import Config, Op, init_state, load_config
from tardis.explorer import (
    LivelockSuspect,
    ScheduleConfig,
    explore_bfs,
    mutation_suite,
    replay_violations,
    run_random,
)
from tardis.litmus import format_outcome, load_litmus, run_litmus, sc_outcomes
from tardis.processor import check_commit_order
from tardis.protocol import MUTATIONS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
JOBS = os.cpu_count() or 1
DEPTH = 25
LITMUS_RUNS = 10_000
BATTERY_RUNS = 1_000

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(RESULTS[n])


def std_init(**overrides):
    return init_state(load_config(CONFIGS / "std_2x1.cfg", **overrides))


def stats_key(s):
    return (s.states, s.transitions, s.depth, s.terminal, sorted(s.violations.items()),
            sorted(s.max_queue.items()), sorted((str(k), v) for k, v in s.rule_counts.items()))


def random_config(rng: random.Random, tso: bool) -> Config:
    cores = rng.choice([2, 3])
    progs = tuple(
        tuple(
            Op("Ld", rng.randrange(2)) if rng.random() < 0.5 else Op("St", rng.randrange(2), 1)
            for _ in range(rng.randint(4, 6))
        )
        for _ in range(cores)
    )
    return Config(cores=cores, addrs=("a", "b"), programs=progs, tso=tso,
                  leases=(rng.choice([0, 1, 2, 10]),), memory=rng.random() < 0.5)


def battery(tso: bool, runs: int = BATTERY_RUNS, seed: int = 0):
    """Random runs; returns (required-check failures, other oracle findings)."""
    rng = random.Random(seed)
    required, other = Counter(), Counter()
    trace_ids = {"ts-value", "ts-unique", "ts-phys", "sc-rule1", "sc-rule2", "sc-order",
                 "order-sets", "tso-value", "commit-order", "monotonicity"}
    for i in range(runs):
        cfg = random_config(rng, tso)
        sched = ScheduleConfig(seed=i, max_steps=50 * cfg.total_ops + 1000)
        final, _, stats = run_random(init_state(cfg), sched)
        other.update({k: n for k, n in stats.violations.items() if k not in trace_ids})
        if "monotonicity" in stats.violations:
            required["monotonicity"] += 1
        if not final.done():
            # stopped early on a state or step finding; finish unchecked to test the trace
            quiet = replace(sched, check_states=False, check_steps=False, check_trace=False)
            final, _, stats = run_random(init_state(cfg), quiet)
        trace, hist = final.trace, final.history
        required.update("commit-order" for _ in check_commit_order(trace, tso))
        if tso:
            required.update(v.lemma for v in check_tso(trace, hist))
        else:
            required.update(v.lemma for v in check_theorem1(trace, hist))
            required.update(v.lemma for v in check_sc(trace, hist))
            required.update(v.lemma for v in check_order_sets(trace, hist))
    return required, other


def fmt(c: Counter) -> str:
    return ",".join(f"{k}={v}" for k, v in sorted(c.items())) or "none"


def test_criterion_1_sweep_no_memory():
    s = explore_bfs(std_init(), DEPTH, JOBS)
    report(1, s.ok, f"states={s.states} transitions={s.transitions} depth={s.depth} "
                    f"violations={fmt(s.violations)}")
    assert s.ok, s.first_violation


def test_criterion_2_sweep_memory():
    s = explore_bfs(std_init(memory=True), DEPTH, JOBS)
    report(2, s.ok, f"states={s.states} transitions={s.transitions} depth={s.depth} "
                    f"violations={fmt(s.violations)}")
    assert s.ok, s.first_violation


def test_criterion_3_litmus_sc():
    sb = load_litmus(CONFIGS / "sb.lit")
    mp = load_litmus(CONFIGS / "mp.lit")
    sb_allowed = sc_outcomes(sb.config)
    # the three SC-legal store-buffering outcomes, each load returning 0 or 1
    oracle_ok = sb_allowed == {(0, 1), (1, 0), (1, 1)} and (1, 0) not in sc_outcomes(mp.config)
    r_sb = run_litmus(sb, LITMUS_RUNS, jobs=JOBS)
    r_mp = run_litmus(mp, LITMUS_RUNS, jobs=JOBS)
    sb_ok = r_sb.histogram[(0, 0)] == 0 and all(r_sb.histogram[o] >= 1 for o in sb_allowed)
    mp_ok = r_mp.histogram[(1, 0)] == 0
    ok = oracle_ok and sb_ok and mp_ok and r_sb.ok and r_mp.ok
    hist = lambda r: " ".join(f"{format_outcome(o)}={n}" for o, n in sorted(r.histogram.items()))
    report(3, ok, f"sb[{hist(r_sb)}] mp[{hist(r_mp)}] oracle={'ok' if oracle_ok else 'bad'}")
    assert ok


def test_criterion_4_random_sc():
    required, other = battery(tso=False)
    report(4, not required, f"runs={BATTERY_RUNS} failures={fmt(required)} "
                            f"other-findings={fmt(other)}")
    assert not required


def test_criterion_5_livelock_freedom():
    rng = random.Random(5)
    stuck = []
    for i in range(BATTERY_RUNS):
        cfg = random_config(rng, tso=rng.random() < 0.5)
        sched = ScheduleConfig(kind="adversarial-voluntary", seed=i, max_steps=50 * cfg.total_ops,
                               check_states=False, check_steps=False, check_trace=False)
        try:
            final, _, _ = run_random(init_state(cfg), sched)
            if not final.done():
                stuck.append(i)
        except LivelockSuspect:
            stuck.append(i)
    report(5, not stuck, f"runs={BATTERY_RUNS} livelock-suspects={len(stuck)}")
    assert not stuck


def test_criterion_6_random_tso():
    required, other = battery(tso=True, seed=6)
    sb = run_litmus(load_litmus(CONFIGS / "sb.lit", tso=True), LITMUS_RUNS, jobs=JOBS)
    hist = " ".join(f"{format_outcome(o)}={n}" for o, n in sorted(sb.histogram.items()))
    ok = not required and not sb.violations and not sb.unexpected
    report(6, ok, f"runs={BATTERY_RUNS} failures={fmt(required)} other-findings={fmt(other)} "
                  f"sb-tso[{hist}]")
    assert ok


def test_criterion_7_mutation_sensitivity():
    cfg = load_config(CONFIGS / "std_2x1.cfg")
    results = mutation_suite(cfg, DEPTH, MUTATIONS, JOBS)
    parts, missed = [], []
    for name, s in results.items():
        replayed = False
        if not s.ok:
            mutated = init_state(replace(cfg, mutations=frozenset({name})))
            replayed = bool(replay_violations(mutated, s.path))
        if s.ok or not replayed:
            missed.append(name)
        parts.append(f"{name}={'detected' if not s.ok else 'missed'}"
                     + (f"({s.first_violation.lemma},replayed)" if replayed else ""))
    # report only: where the missed mutations do show up
    for name in missed:
        for label, init_cfg in (
            ("memory-sweep", replace(cfg, memory=True)),
            ("lease_2x2", load_config(CONFIGS / "lease_2x2.cfg")),
        ):
            s = explore_bfs(init_state(replace(init_cfg, mutations=frozenset({name}))), DEPTH, JOBS)
            if not s.ok:
                parts.append(f"[{name} caught by {label}: {s.first_violation.lemma}]")
                break
    report(7, not missed, " ".join(parts))
    assert not missed, f"undetected on the sweep: {missed}"


def test_criterion_8_determinism():
    a = explore_bfs(std_init(), DEPTH)
    b = explore_bfs(std_init(), DEPTH, JOBS)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            cli_main(["run", str(CONFIGS / "rand_3x2.cfg"), "--seed", "42"])
        outs.append(buf.getvalue())
    ok = stats_key(a) == stats_key(b) and outs[0] == outs[1] and outs[0]
    report(8, bool(ok), f"bfs-stats-equal={stats_key(a) == stats_key(b)} "
                        f"run-bytes-equal={outs[0] == outs[1]} bytes={len(outs[0])}")
    assert ok


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
