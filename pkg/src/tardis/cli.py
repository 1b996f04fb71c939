"""Command-line entry point: ``tardis {run,explore,litmus,check-trace,selftest}``.

Exit status is 0 when every check passes, 1 on a violation and 2 for usage
or configuration errors.  Reports are plain text, one record per line.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from contextlib import contextmanager
from typing import Iterator, Optional, TextIO

from tardis.consistency import check_sc, check_theorem1, check_tso, check_order_sets
from tardis.core import (
    CommitEvent,
    Config,
    ConfigError,
    StoreRecord,
    TardisError,
    init_state,
    load_config,
    parse_value,
)
from tardis.explorer import (
    LivelockSuspect,
    ReplayError,
    ScheduleConfig,
    explore_bfs,
    mutation_suite,
    replay_violations,
    run_random,
)
from tardis.oracle import Violation
from tardis.processor import check_commit_order
from tardis.protocol import MUTATIONS

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if getattr(args, "mode", None):
        out["tso"] = args.mode == "tso"
    if getattr(args, "memory", None):
        out["memory"] = args.memory == "on"
    if getattr(args, "lease", None):
        out["leases"] = tuple(args.lease)
    if getattr(args, "fifo", None):
        out["fifo"] = args.fifo
    if getattr(args, "loadhit_guard", None):
        out["loadhit_guard"] = args.loadhit_guard
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def describe(cfg: Config) -> str:
    leases = ",".join(map(str, cfg.leases))
    return (
        f"config cores={cfg.cores} addrs={','.join(cfg.addrs)} "
        f"mode={'tso' if cfg.tso else 'sc'} memory={'on' if cfg.memory else 'off'} "
        f"lease={leases} fifo={cfg.fifo} loadhit_guard={cfg.loadhit_guard}"
    )


@contextmanager
def _output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _emit(out: TextIO, lines) -> None:
    for line in lines:
        out.write(line + "\n")


# -- commands -------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    state = init_state(cfg)
    sched = ScheduleConfig(
        kind=args.scheduler,
        seed=cfg.seed,
        max_steps=args.steps if args.steps is not None else 50 * max(1, cfg.total_ops) + 1000,
    )
    names = cfg.addrs
    with _output(args.out) as out:
        _emit(out, [describe(cfg), f"seed {cfg.seed}"])
        _emit(out, [f"init addr={names[a]} val={cfg.initial_value(a)}" for a in range(len(names))])
        try:
            final, records, stats = run_random(state, sched)
        except LivelockSuspect as exc:
            _emit(out, exc.stats.lines())
            _emit(out, [f"FAIL livelock {exc}", "verdict FAIL"])
            return EXIT_VIOLATION
        for rec in records:
            out.write(rec.to_line(names) + "\n")
            for ev in rec.commits:
                out.write(ev.to_line(names) + "\n")
        _emit(out, stats.lines())
        _emit(out, [f"verdict {'PASS' if stats.ok else 'FAIL'}"])
    return EXIT_OK if stats.ok else EXIT_VIOLATION


def cmd_explore(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    init = init_state(cfg)
    stats = explore_bfs(init, args.depth, jobs=args.jobs)
    with _output(args.out) as out:
        _emit(out, [describe(cfg), f"depth-bound {args.depth}"])
        _emit(out, stats.lines())
        _emit(out, [stats.summary()])
    return EXIT_OK if stats.ok else EXIT_VIOLATION


def cmd_litmus(args) -> int:
    from tardis.litmus import load_litmus, run_litmus

    ov = _overrides(args)
    seed = ov.pop("seed", 0)
    failed = False
    with _output(args.out) as out:
        for path in args.files:
            spec = load_litmus(path, **ov)
            res = run_litmus(spec, args.runs, seed=seed, jobs=args.jobs)
            _emit(out, res.lines())
            failed |= not res.ok
    return EXIT_VIOLATION if failed else EXIT_OK


def parse_trace(lines) -> tuple[str, list[CommitEvent], list[StoreRecord]]:
    """Read ``config``, ``init`` and ``commit`` lines from a ``run`` report."""
    mode = "sc"
    trace: list[CommitEvent] = []
    history: list[StoreRecord] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        head, _, rest = line.partition(" ")
        if head not in ("config", "init", "commit"):
            continue
        try:
            f = dict(kv.split("=", 1) for kv in rest.split())
            if head == "config":
                mode = f.get("mode", mode)
            elif head == "init":
                history.append(StoreRecord(f["addr"], 0, parse_value(f["val"]), None, None, 0))
            else:
                ev = CommitEvent(
                    int(f["core"]), int(f["seq"]), f["op"], f["addr"],
                    parse_value(f["val"]), int(f["ts"]), int(f["phys"]),
                )
                trace.append(ev)
                if ev.kind == "St":
                    history.append(StoreRecord(ev.addr, ev.ts, ev.value, ev.core, ev.seq, ev.phys))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"trace line {lineno}: cannot parse {line!r} ({exc})") from None
    return mode, trace, history


def check_trace_text(lines, mode: Optional[str] = None) -> list[Violation]:
    file_mode, trace, history = parse_trace(lines)
    tso = (mode or file_mode) == "tso"
    out = [Violation("commit-order", p) for p in check_commit_order(trace, tso)]
    if tso:
        out += check_tso(trace, history)
    else:
        out += check_theorem1(trace, history)
        out += check_sc(trace, history)
        out += check_order_sets(trace, history)
    return out


def cmd_check_trace(args) -> int:
    with open(args.trace) as fh:
        vs = check_trace_text(fh, args.mode)
    with _output(args.out) as out:
        _emit(out, [str(v) for v in vs])
        _emit(out, [f"verdict {'FAIL' if vs else 'PASS'}"])
    return EXIT_VIOLATION if vs else EXIT_OK


def cmd_selftest(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    names = args.mutation or list(MUTATIONS)
    results = mutation_suite(cfg, args.depth, names, jobs=args.jobs)
    missed = []
    with _output(args.out) as out:
        _emit(out, [describe(cfg), f"depth-bound {args.depth}"])
        for name, stats in results.items():
            total = sum(stats.violations.values())
            if not total:
                missed.append(name)
                out.write(f"mutation {name} detected=no states={stats.states}\n")
                continue
            mutated = init_state(replace(cfg, mutations=frozenset({name})))
            try:
                again = replay_violations(mutated, stats.path)
                replayed = "yes" if any(v.lemma == stats.first_violation.lemma for v in again) else "no"
            except ReplayError as exc:
                replayed = f"no ({exc})"
            if replayed != "yes":
                missed.append(name)
            out.write(
                f"mutation {name} detected=yes violations={total} "
                f"first={stats.first_violation.lemma} path_len={len(stats.path)} "
                f"replayed={replayed}\n"
            )
        _emit(out, [f"verdict {'PASS' if not missed else 'FAIL'}"])
    return EXIT_VIOLATION if missed else EXIT_OK


# -- argument parsing -------------------------------------------------------------


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("sc", "tso"))
    p.add_argument("--memory", choices=("on", "off"))
    p.add_argument("--lease", type=int, action="append", metavar="N",
                   help="lease length; repeat to offer several choices")
    p.add_argument("--fifo", choices=("strict", "per-address"))
    p.add_argument("--loadhit-guard", choices=("owner", "lease"))
    p.add_argument("--out", metavar="FILE", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tardis", description="Tardis coherence protocol model: simulation, exhaustive sweeps and litmus tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded random execution")
    p.add_argument("config")
    p.add_argument("--steps", type=int, help="step budget before reporting livelock")
    p.add_argument("--scheduler", choices=("random", "adversarial-voluntary"), default="random")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", help="bounded breadth-first sweep")
    p.add_argument("config")
    p.add_argument("--depth", type=int, default=25)
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("litmus", help="run litmus files under random schedules")
    p.add_argument("files", nargs="+")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_litmus)

    p = sub.add_parser("check-trace", help="check a saved run report offline")
    p.add_argument("trace")
    p.add_argument("--mode", choices=("sc", "tso"))
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_check_trace)

    p = sub.add_parser("selftest", help="mutation sensitivity suite")
    p.add_argument("config")
    p.add_argument("--depth", type=int, default=25)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mutation", action="append", choices=MUTATIONS)
    _add_overrides(p)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"tardis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TardisError as exc:
        print(f"tardis: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
