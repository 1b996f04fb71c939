import itertools

from hypothesis import given, settings, strategies as st

from tardis.consistency import check_order_sets, check_sc, check_theorem1, check_tso
from tardis.core import CommitEvent, Config, Op, StoreRecord
from tardis.litmus import allowed_outcomes, sc_outcomes, tso_outcomes, load_litmus

INIT = (StoreRecord(0, 0, 0, None, None, 0),)


def store(core, seq, ts, value, phys, addr=0):
    return (
        CommitEvent(core, seq, "St", addr, value, ts, phys),
        StoreRecord(addr, ts, value, core, seq, phys),
    )


def load(core, seq, ts, value, phys, addr=0):
    return CommitEvent(core, seq, "Ld", addr, value, ts, phys)


def lemmas(vs):
    return {v.lemma for v in vs}


def test_ts_order_single_core():
    s, rec = store(0, 0, 1, 1, 1)
    trace = [s, load(0, 1, 1, 1, 2)]
    assert check_theorem1(trace, INIT + (rec,)) == []


def test_ts_order_sharer_reads_old_value_below_new_store():
    s, rec = store(1, 0, 9, "new", 5)
    trace = [s, load(0, 0, 7, 0, 6)]
    assert check_theorem1(trace, INIT + (rec,)) == []
    assert check_sc(trace, INIT + (rec,)) == []


def test_ts_order_duplicate_store_ts():
    s1, r1 = store(0, 0, 3, "x", 1)
    s2, r2 = store(1, 0, 3, "y", 2)
    assert "ts-unique" in lemmas(check_theorem1([s1, s2], INIT + (r1, r2)))


def test_ts_order_equal_ts_load_before_store():
    s, rec = store(1, 0, 4, "x", 9)
    trace = [s, load(0, 0, 4, "x", 3)]
    assert "ts-phys" in lemmas(check_theorem1(trace, INIT + (rec,)))


def test_ts_order_stale_value():
    s, rec = store(1, 0, 2, "x", 1)
    trace = [s, load(0, 0, 5, 0, 2)]
    assert "ts-value" in lemmas(check_theorem1(trace, INIT + (rec,)))


def test_sc_empty_trace():
    assert check_sc([], INIT) == []
    assert check_sc([], ()) == []


def test_sc_permuted_stale_read():
    # program order is kept but the load is moved below the store it missed
    s, rec = store(0, 0, 2, "x", 1)
    trace = [s, load(1, 0, 3, 0, 2)]
    assert "sc-rule2" in lemmas(check_sc(trace, INIT + (rec,)))


def test_sc_program_order_broken():
    s, rec = store(0, 0, 5, "x", 1)
    trace = [s, load(0, 1, 5, "x", 0)]
    assert "sc-rule1" in lemmas(check_sc(trace, INIT + (rec,)))


def test_order_sets_equal_on_legal_trace():
    s, rec = store(0, 0, 2, "x", 1)
    trace = [s, load(1, 0, 2, "x", 2), load(1, 1, 1, 0, 3)]
    assert check_order_sets(trace, INIT + (rec,)) == []


def test_order_sets_flag_equal_ts_physical_inversion():
    s, rec = store(0, 0, 2, "x", 5)
    trace = [s, load(1, 0, 2, "x", 3)]
    assert "order-sets" in lemmas(check_order_sets(trace, INIT + (rec,)))


def test_tso_owned_load_below_own_store():
    s, rec = store(0, 0, 9, "mine", 1)
    trace = [s, load(0, 1, 3, "mine", 2)]
    assert check_tso(trace, INIT + (rec,)) == []
    # the same trace breaks the timestamp-only rule
    assert "ts-value" in lemmas(check_theorem1(trace, INIT + (rec,)))


def test_tso_accepts_sc_trace():
    s, rec = store(0, 0, 1, 1, 1)
    trace = [s, load(0, 1, 1, 1, 2), load(1, 0, 0, 0, 3)]
    assert check_sc(trace, INIT + (rec,)) == []
    assert check_tso(trace, INIT + (rec,)) == []


def test_tso_flags_other_core_store_not_visible():
    s, rec = store(0, 0, 9, "x", 1)
    trace = [s, load(1, 0, 3, "x", 2)]
    assert "tso-value" in lemmas(check_tso(trace, INIT + (rec,)))


# -- brute-force outcome oracles ---------------------------------------------------


def test_sb_outcomes(configs):
    cfg = load_litmus(configs / "sb.lit").config
    assert sc_outcomes(cfg) == {(0, 1), (1, 0), (1, 1)}
    assert tso_outcomes(cfg) == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_mp_outcomes(configs):
    cfg = load_litmus(configs / "mp.lit").config
    assert (1, 0) not in sc_outcomes(cfg)
    assert sc_outcomes(cfg) == {(0, 0), (0, 1), (1, 1)}
    assert tso_outcomes(cfg) == sc_outcomes(cfg)


def sc_by_permutation(cfg):
    """SC outcomes by filtering all permutations for program order."""
    ops = [(c, i, op) for c, p in enumerate(cfg.programs) for i, op in enumerate(p)]
    regs = [(c, i) for c, i, op in ops if op.kind == "Ld"]
    out = set()
    for perm in itertools.permutations(ops):
        if any(
            a[0] == b[0] and a[1] > b[1]
            for x, a in enumerate(perm) for b in perm[x + 1:]
        ):
            continue
        mem = {a: cfg.initial_value(a) for a in range(len(cfg.addrs))}
        got = {}
        for c, i, op in perm:
            if op.kind == "St":
                mem[op.addr] = op.value
            else:
                got[(c, i)] = mem[op.addr]
        out.add(tuple(got[r] for r in regs))
    return out


op_strategy = st.one_of(
    st.builds(lambda a: Op("Ld", a), st.integers(0, 1)),
    st.builds(lambda a, v: Op("St", a, v), st.integers(0, 1), st.integers(1, 2)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(op_strategy, min_size=1, max_size=3), min_size=1, max_size=2))
def test_sc_oracle_matches_permutation_filter(progs):
    cfg = Config(cores=len(progs), addrs=("a", "b"), programs=tuple(map(tuple, progs)),
                 fresh_values=False)
    assert sc_outcomes(cfg) == sc_by_permutation(cfg)
    assert sc_outcomes(cfg) <= tso_outcomes(cfg)
    assert allowed_outcomes(cfg, tso=False) == sc_outcomes(cfg)
