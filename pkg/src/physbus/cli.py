"""Deterministic scenario runner and trace inspection.

Scenario scripts are line-oriented: ``<time_ms> <verb> <args...>``,
with ``#`` comments and blank lines ignored.  Timestamps must be
non-decreasing; the clock advances automatically to each command's
time, so explicit ``run_until`` is only needed to let the simulation
settle past the last command.

Verbs::

    0    plug 2 fan.module.json        # descriptor path or packaged name
    0    unplug 2
    40   set 2 0 128                   # address var_index value
    0    load_csv data.csv
    0    map temp 2 0 [dmin dmax] [noclamp]
    0    map rules.json                # or a JSON array of rule objects
    0    replay 100                    # one row per 100 ms
    0    run_until 5000
    40   expect registry-contains 2 [n_vars]
    40   expect level-equals 2 0 146
    5000 expect disconnect-detected-by 2 4600

A run executes on a fresh bench and writes the canonical event trace;
identical script, seed and config always produce a byte-identical
trace.  Exit codes: 0 all assertions passed, 1 at least one failed,
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from .backplane import BackplaneError
from .bench import Bench, load_config, packaged_descriptors
from .codec import CodecError, SetValue, decode, parse_hexdump
from .datafeed import (
    DatafeedError,
    MappingRule,
    bind_rule,
    load_mapping_file,
    read_csv_file,
    replay,
)
from .modules import (
    DescriptorError,
    PhysicalVariableSpec,
    load_descriptor_file,
    quantize,
)

VERBS = {"plug", "unplug", "set", "load_csv", "map", "replay", "run_until", "expect"}
ASSERTIONS = {"registry-contains", "level-equals", "disconnect-detected-by"}


class ScriptSyntaxError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Command:
    time: int
    verb: str
    args: tuple[str, ...]
    line_no: int
    path: Path | None = None  # resolved file for plug/load_csv


@dataclass(frozen=True)
class ScenarioScript:
    commands: tuple[Command, ...]


def _resolve_file(token: str, base_dir: Path, allow_packaged: bool) -> Path | None:
    candidate = Path(token)
    if not candidate.is_absolute():
        candidate = base_dir / candidate
    if candidate.is_file():
        return candidate
    if allow_packaged:
        name = token.removesuffix(".module.json")
        return packaged_descriptors().get(name)
    return None


def parse_script(text: str, base_dir: str | Path = ".") -> ScenarioScript:
    """Validate a scenario script; all referenced files must exist."""
    base = Path(base_dir)
    commands: list[Command] = []
    floor = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ScriptSyntaxError(line_no, "expected '<time> <verb> ...'")
        try:
            time = int(tokens[0])
        except ValueError:
            raise ScriptSyntaxError(line_no, f"bad timestamp {tokens[0]!r}") from None
        if time < 0:
            raise ScriptSyntaxError(line_no, "timestamps must be non-negative")
        if time < floor:
            raise ScriptSyntaxError(line_no, f"timestamp {time} goes backwards (floor {floor})")
        floor = time
        verb, args = tokens[1], tuple(tokens[2:])
        if verb not in VERBS:
            raise ScriptSyntaxError(line_no, f"unknown verb {verb!r}")
        path = None
        try:
            path, floor = _validate_command(time, verb, args, base, floor)
        except ScriptSyntaxError:
            raise
        except ValueError as exc:
            raise ScriptSyntaxError(line_no, str(exc)) from None
        commands.append(Command(time=time, verb=verb, args=args, line_no=line_no, path=path))
    return ScenarioScript(commands=tuple(commands))


def _validate_command(
    time: int, verb: str, args: tuple[str, ...], base: Path, floor: int
) -> tuple[Path | None, int]:
    def need(n: int) -> None:
        if len(args) != n:
            raise ValueError(f"{verb} takes {n} argument(s), got {len(args)}")

    if verb == "plug":
        need(2)
        int(args[0])
        path = _resolve_file(args[1], base, allow_packaged=True)
        if path is None:
            raise ValueError(f"descriptor {args[1]!r} not found")
        return path, floor
    if verb == "unplug":
        need(1)
        int(args[0])
    elif verb == "set":
        need(3)
        for a in args:
            int(a)
    elif verb == "load_csv":
        need(1)
        path = _resolve_file(args[0], base, allow_packaged=False)
        if path is None:
            raise ValueError(f"csv file {args[0]!r} not found")
        return path, floor
    elif verb == "map":
        if len(args) == 1:  # file form: a JSON array of rules
            path = _resolve_file(args[0], base, allow_packaged=False)
            if path is None:
                raise ValueError(f"mapping file {args[0]!r} not found")
            return path, floor
        rest = list(args)
        if rest and rest[-1] in ("clamp", "noclamp"):
            rest.pop()
        if len(rest) not in (3, 5):
            raise ValueError(
                "map takes: column address var_index [dmin dmax] [clamp|noclamp], or one rules file"
            )
        int(rest[1]), int(rest[2])
        if len(rest) == 5:
            float(rest[3]), float(rest[4])
    elif verb == "replay":
        need(1)
        if int(args[0]) <= 0:
            raise ValueError("cadence must be positive")
    elif verb == "run_until":
        need(1)
        target = int(args[0])
        if target < time:
            raise ValueError(f"run_until target {target} precedes command time {time}")
        return None, target
    elif verb == "expect":
        if not args or args[0] not in ASSERTIONS:
            known = ", ".join(sorted(ASSERTIONS))
            raise ValueError(f"expect needs an assertion kind ({known})")
        kind = args[0]
        if kind == "registry-contains" and len(args) not in (2, 3):
            raise ValueError("expect registry-contains <address> [<n_vars>]")
        if kind == "level-equals" and len(args) != 4:
            raise ValueError("expect level-equals <address> <var_index> <level>")
        if kind == "disconnect-detected-by" and len(args) != 3:
            raise ValueError("expect disconnect-detected-by <address> <time>")
        for a in args[1:]:
            int(a)
    return None, floor


class ScenarioRunner:
    """Executes a parsed script on a fresh bench."""

    def __init__(self, script: ScenarioScript, seed: int | None = None, config_doc: dict | None = None):
        config, policy = load_config(config_doc or {})
        self.script = script
        self.bench = Bench(config=config, policy=policy, seed=seed)
        self.failures: list[str] = []
        self._dataset = None
        self._rules: list[MappingRule] = []

    def run(self) -> int:
        for cmd in self.script.commands:
            self.bench.run_until(cmd.time)
            getattr(self, f"_cmd_{cmd.verb}")(cmd)
        self.bench.run_until(self.bench.now)
        return 0 if not self.failures else 1

    @property
    def trace(self) -> list[str]:
        return self.bench.trace

    # -- command execution -------------------------------------------------

    def _echo(self, cmd: Command, text: str) -> None:
        self.bench.trace.append(f"t={cmd.time} {text}")

    def _reject(self, cmd: Command, what: str, exc: Exception) -> None:
        self.bench.trace.append(f"t={cmd.time} REJECTED {what} reason={type(exc).__name__}")

    def _cmd_plug(self, cmd: Command) -> None:
        slot = int(cmd.args[0])
        self._echo(cmd, f"PLUG slot={slot} descriptor={cmd.args[1]}")
        try:
            descriptor = load_descriptor_file(cmd.path)
            self.bench.plug(slot, descriptor, cmd.time)
        except (BackplaneError, DescriptorError) as exc:
            self._reject(cmd, f"plug slot={slot}", exc)

    def _cmd_unplug(self, cmd: Command) -> None:
        slot = int(cmd.args[0])
        self._echo(cmd, f"UNPLUG slot={slot}")
        try:
            self.bench.unplug(slot, cmd.time)
        except BackplaneError as exc:
            self._reject(cmd, f"unplug slot={slot}", exc)

    def _cmd_set(self, cmd: Command) -> None:
        address, var_index, value = (int(a) for a in cmd.args)
        self._echo(cmd, f"SET addr={address} var={var_index} value={value}")
        try:
            self.bench.set_value(address, var_index, value, cmd.time)
        except (LookupError, ValueError) as exc:
            self._reject(cmd, f"set addr={address} var={var_index} value={value}", exc)

    def _cmd_load_csv(self, cmd: Command) -> None:
        try:
            self._dataset = read_csv_file(cmd.path)
            self._rules = []
            self._echo(
                cmd,
                f"LOAD_CSV file={cmd.args[0]} rows={len(self._dataset)} "
                f"columns={len(self._dataset.columns)}",
            )
        except DatafeedError as exc:
            self._echo(cmd, f"LOAD_CSV file={cmd.args[0]}")
            self._reject(cmd, f"load_csv {cmd.args[0]}", exc)

    def _cmd_map(self, cmd: Command) -> None:
        if cmd.path is not None:
            try:
                rules = load_mapping_file(cmd.path)
            except DatafeedError as exc:
                self._echo(cmd, f"MAP_FILE file={cmd.args[0]}")
                self._reject(cmd, "map", exc)
                return
            self._echo(cmd, f"MAP_FILE file={cmd.args[0]} rules={len(rules)}")
            for rule in rules:
                self._add_rule(cmd, rule)
            return
        args = list(cmd.args)
        clamp = True
        if args and args[-1] in ("clamp", "noclamp"):
            clamp = args.pop() == "clamp"
        domain = (float(args[3]), float(args[4])) if len(args) == 5 else None
        self._add_rule(
            cmd,
            MappingRule(column=args[0], address=int(args[1]), var_index=int(args[2]), domain=domain, clamp=clamp),
        )

    def _add_rule(self, cmd: Command, rule: MappingRule) -> None:
        head = f"MAP column={rule.column} addr={rule.address} var={rule.var_index}"
        if self._dataset is None:
            self._echo(cmd, head)
            self._reject(cmd, "map", DatafeedError("NoDataset"))
            return
        try:
            bound, derived = bind_rule(rule, self._dataset)
            self._rules.append(bound)
            dmin, dmax = bound.domain
            self._echo(
                cmd,
                f"{head} domain=({dmin!r},{dmax!r}) clamp={'on' if rule.clamp else 'off'} "
                f"source={'data' if derived else 'declared'}",
            )
        except DatafeedError as exc:
            self._echo(cmd, head)
            self._reject(cmd, "map", exc)

    def _cmd_replay(self, cmd: Command) -> None:
        cadence = int(cmd.args[0])
        if self._dataset is None:
            self._echo(cmd, f"REPLAY cadence={cadence}")
            self._reject(cmd, "replay", DatafeedError("NoDataset"))
            return
        self._echo(
            cmd,
            f"REPLAY cadence={cadence} rows={len(self._dataset)} rules={len(self._rules)}",
        )
        replay(
            self._dataset,
            self._rules,
            cadence,
            self.bench.core,
            self.bench.backplane,
            on_diagnostic=lambda now, text: self.bench.trace.append(f"t={now} SKIPPED {text}"),
        )

    def _cmd_run_until(self, cmd: Command) -> None:
        self.bench.run_until(int(cmd.args[0]))

    def _cmd_expect(self, cmd: Command) -> None:
        ok = self._evaluate(cmd.args)
        expr = " ".join(cmd.args)
        self._echo(cmd, f"EXPECT {expr} result={'pass' if ok else 'fail'}")
        if not ok:
            self.failures.append(f"line {cmd.line_no}: expect {expr} (at t={cmd.time})")

    def _evaluate(self, args: tuple[str, ...]) -> bool:
        kind = args[0]
        if kind == "registry-contains":
            address = int(args[1])
            for entry in self.bench.core.registry_snapshot():
                if entry.address == address:
                    return len(args) < 3 or len(entry.variables) == int(args[2])
            return False
        if kind == "level-equals":
            address, var_index, level = int(args[1]), int(args[2]), int(args[3])
            try:
                return self.bench.level_of(address, var_index) == level
            except LookupError:
                return False
        address, bound = int(args[1]), int(args[2])
        return any(d.address == address and d.time <= bound for d in self.bench.detections)


def run_script(
    script: ScenarioScript,
    seed: int | None = None,
    config_doc: dict | None = None,
    out: TextIO | None = None,
) -> int:
    """Run a script, write the trace, return the exit status."""
    runner = ScenarioRunner(script, seed=seed, config_doc=config_doc)
    status = runner.run()
    sink = out or sys.stdout
    for line in runner.trace:
        print(line, file=sink)
    for failure in runner.failures:
        print(f"FAILED {failure}", file=sys.stderr)
    return status


# -- trace inspection ----------------------------------------------------------


def inspect_trace(lines: list[str], out: TextIO) -> None:
    """Summarize a trace: final registry, module levels, detections.

    Rebuilds state purely from FRAME and DISCONNECT_DETECTED lines, the
    same way the core itself learns from traffic.
    """
    registry: dict[int, dict[int, PhysicalVariableSpec]] = {}
    levels: dict[tuple[int, int], int] = {}
    detections: list[str] = []
    frames = 0
    last_time = 0
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if not line.startswith("t="):
            raise ValueError(f"line {line_no}: not a trace line: {line!r}")
        head, _, rest = line.partition(" ")
        last_time = int(head[2:])
        kind, _, body = rest.partition(" ")
        if kind == "FRAME":
            frames += 1
            try:
                msg = decode(parse_hexdump(body))
            except (ValueError, CodecError):
                continue
            if hasattr(msg, "granularity"):
                spec = PhysicalVariableSpec(
                    name=f"var{msg.var_index}",
                    unit="",
                    min=msg.min,
                    max=msg.max,
                    granularity=msg.granularity,
                    var_index=msg.var_index,
                )
                registry.setdefault(msg.sender, {})[msg.var_index] = spec
                levels[(msg.sender, msg.var_index)] = spec.min
            elif isinstance(msg, SetValue):
                spec = registry.get(msg.target, {}).get(msg.var_index)
                if spec is not None and spec.min <= msg.value <= spec.max:
                    levels[(msg.target, msg.var_index)] = quantize(msg.value, spec)
        elif kind == "DISCONNECT_DETECTED":
            address = int(body.removeprefix("addr="))
            registry.pop(address, None)
            detections.append(f"addr={address} {head}")
    print(f"events: {len(lines)}, frames: {frames}, span: 0..{last_time} ms", file=out)
    print("final registry:", file=out)
    if not registry:
        print("  (empty)", file=out)
    for address in sorted(registry):
        variables = registry[address]
        parts = [
            f"var{i} range {v.min}..{v.max} granularity {v.granularity} level {levels[(address, i)]}"
            for i, v in sorted(variables.items())
        ]
        print(f"  addr {address}: {len(variables)} variable(s); " + "; ".join(parts), file=out)
    if detections:
        print("disconnect detections: " + ", ".join(detections), file=out)


# -- entry point -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physbus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario script deterministically")
    run_p.add_argument("script", help="path to the scenario script")
    run_p.add_argument("--seed", type=int, default=None, help="seed for the fault-injection RNG")
    run_p.add_argument("--trace", default=None, help="write the event trace to this file")
    run_p.add_argument("--config", default=None, help="JSON config file (slots, timing, heartbeat)")

    inspect_p = sub.add_parser("inspect", help="summarize a recorded trace")
    inspect_p.add_argument("trace", help="path to a trace file")

    serve_p = sub.add_parser("serve", help="run the live session gateway")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8141)
    serve_p.add_argument("--ui", default=None, help="serve a built bench UI from this directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.command == "run":
        script_path = Path(args.script)
        try:
            text = script_path.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"cannot read script: {exc}", file=sys.stderr)
            return 2
        config_doc = None
        if args.config:
            try:
                config_doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
                load_config(config_doc)
            except (OSError, ValueError) as exc:
                print(f"bad config: {exc}", file=sys.stderr)
                return 2
        try:
            script = parse_script(text, base_dir=script_path.parent)
        except ScriptSyntaxError as exc:
            print(f"script error: {exc}", file=sys.stderr)
            return 2
        if args.trace:
            with open(args.trace, "w", encoding="utf-8") as sink:
                return run_script(script, seed=args.seed, config_doc=config_doc, out=sink)
        return run_script(script, seed=args.seed, config_doc=config_doc)

    if args.command == "inspect":
        try:
            lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
            inspect_trace(lines, sys.stdout)
        except (OSError, ValueError) as exc:
            print(f"cannot inspect trace: {exc}", file=sys.stderr)
            return 2
        return 0

    import uvicorn

    from .gateway import create_app

    uvicorn.run(create_app(ui_dir=args.ui), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
