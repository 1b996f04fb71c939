"""Executable model of the Tardis timestamp coherence protocol with runtime
invariant oracles, memory-model trace checkers and exploration drivers."""

from tardis.core import Config, SystemState, init_state, load_config, parse_config
from tardis.protocol import Rule, RuleInstance, apply, enabled

__all__ = [
    "Config",
    "Rule",
    "RuleInstance",
    "SystemState",
    "apply",
    "enabled",
    "init_state",
    "load_config",
    "parse_config",
]
