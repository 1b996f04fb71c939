from dataclasses import replace

import pytest

from tardis.core import load_config, init_state
from tardis.explorer import (
    LivelockSuspect,
    ReplayError,
    ScheduleConfig,
    explore_bfs,
    mutation_suite,
    replay,
    replay_violations,
    run_random,
)
from tardis.protocol import RuleInstance

from conftest import make

SB = "cores = 2\naddrs = a b\nprog 0: St a 1; Ld b\nprog 1: St b 1; Ld a"


def stats_tuple(s):
    return (s.states, s.transitions, s.depth, s.terminal, dict(s.violations),
            s.max_queue, dict(s.rule_counts))


def test_bfs_depth_zero():
    s = explore_bfs(make(SB), 0)
    assert s.states == 1 and s.transitions == 0 and s.ok


def test_bfs_small_sweep_clean(configs):
    s = explore_bfs(init_state(load_config(configs / "std_2x1.cfg")), 12)
    assert s.ok and s.depth == 12


def test_bfs_parallel_matches_serial(configs):
    init = init_state(load_config(configs / "std_2x1.cfg"))
    assert stats_tuple(explore_bfs(init, 14)) == stats_tuple(explore_bfs(init, 14, jobs=2))


def test_replay_empty_is_init():
    st = make(SB)
    assert replay(st, []) is st


def test_replay_stale_path_reports_index():
    st = make(SB)
    path = [RuleInstance.parse("L1Miss core=0 addr=0")] * 2
    with pytest.raises(ReplayError) as exc:
        replay(st, path)
    assert exc.value.index == 1


def test_mutation_counterexample_replays(configs):
    cfg = load_config(configs / "std_2x1.cfg")
    (stats,) = mutation_suite(cfg, 10, ["no-owner"]).values()
    assert stats.first_violation.lemma == "l2-m-owner"
    mutated = init_state(replace(cfg, mutations=frozenset({"no-owner"})))
    again = replay_violations(mutated, stats.path)
    assert "l2-m-owner" in {v.lemma for v in again}
    # the same path is harmless on the real protocol
    assert replay_violations(init_state(cfg), stats.path) == []


@pytest.mark.parametrize("seed", range(10))
def test_random_sb_commits_everything(seed):
    final, records, stats = run_random(make(SB), ScheduleConfig(seed=seed))
    assert stats.ok and final.done()
    assert len(final.trace) == 4
    assert sum(len(r.commits) for r in records) == 4


def test_random_run_is_deterministic():
    a = run_random(make(SB), ScheduleConfig(seed=7))
    b = run_random(make(SB), ScheduleConfig(seed=7))
    assert [r.to_line() for r in a[1]] == [r.to_line() for r in b[1]]
    assert a[0].trace == b[0].trace


@pytest.mark.parametrize("seed", range(5))
def test_adversarial_voluntary_terminates(seed):
    sched = ScheduleConfig(kind="adversarial-voluntary", seed=seed, max_steps=200)
    final, _, stats = run_random(make(SB), sched)
    assert stats.ok and final.done()


def test_livelock_suspect_on_tiny_budget():
    with pytest.raises(LivelockSuspect) as exc:
        run_random(make(SB), ScheduleConfig(max_steps=3))
    assert exc.value.stats.transitions == 3
    assert "busiest rules" in str(exc.value)


def test_schedule_config_validation():
    with pytest.raises(ValueError):
        ScheduleConfig(kind="fair")
    with pytest.raises(ValueError):
        ScheduleConfig(weights={"x": 0})


def test_stats_lines_machine_readable(configs):
    s = explore_bfs(init_state(load_config(configs / "std_2x1.cfg")), 5)
    lines = s.lines()
    assert lines[0] == f"stat states={s.states}"
    assert all(l.startswith("stat ") and "=" in l for l in lines)


def test_per_address_fifo_sweep():
    cfg_text = SB + "\nlease = 2\nfifo = per-address"
    s = explore_bfs(make(cfg_text), 30)
    assert s.ok and s.terminal > 0


def test_lease_guard_strands_owned_load(configs):
    """An M line whose rts lags the core's floor: the lease-only guard leaves only Downgrade."""
    cfg = configs / "guard_1x2.cfg"
    assert explore_bfs(init_state(load_config(cfg)), 30).ok
    s = explore_bfs(init_state(load_config(cfg, loadhit_guard="lease")), 30)
    assert s.violations["deadlock"] > 0
    assert s.first_violation.lemma == "deadlock"


def test_stale_wbrq_moves_request_back_in_lattice(configs):
    """Known regression: a WBRq left over from an earlier round sits ahead of a
    ToM in the owner's p2c; consuming it exposes the new WBRq, which is not
    at the head, so the waiting request drops from entry 6 to entry 4.  The
    request still completes."""
    cfg = load_config(configs / "stale_wbrq.cfg")
    path = [RuleInstance.parse(l) for l in (configs / "stale_wbrq.path").read_text().splitlines()]
    init = init_state(cfg)
    vs = replay_violations(init, path)
    assert [v.lemma for v in vs] == ["lattice-backward"]
    assert "from=6 to=4" in vs[0].detail
    st = replay(init, path)
    final, _, stats = run_random(st, ScheduleConfig(seed=0, check_steps=False, check_trace=False))
    assert final.done() and stats.ok


def test_std_config_never_hits_stale_wbrq(configs):
    init = init_state(load_config(configs / "std_2x1.cfg"))
    assert explore_bfs(init, 25).violations["lattice-backward"] == 0

