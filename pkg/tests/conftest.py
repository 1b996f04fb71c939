from dataclasses import replace
from pathlib import Path

import pytest

from tardis.core import parse_config, init_state
from tardis.protocol import Rule, RuleInstance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def make(text: str, **overrides):
    """Initial state for an inline config."""
    return init_state(parse_config(text, **overrides))


def set_l1(state, core, addr, line):
    rows = list(state.l1)
    row = list(rows[core])
    row[addr] = line
    rows[core] = tuple(row)
    return replace(state, l1=tuple(rows))


def set_l2(state, addr, line):
    l2 = list(state.l2)
    l2[addr] = line
    return replace(state, l2=tuple(l2))


def set_at(tup, i, v):
    return tup[:i] + (v,) + tup[i + 1 :]


def ri(rule: str, core=None, addr=None, param=None) -> RuleInstance:
    return RuleInstance(Rule(rule), core, addr, param)


@pytest.fixture
def configs():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
