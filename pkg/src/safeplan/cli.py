"""Command-line entry point: ``safeplan <subcommand> ...``.

Exit codes: 0 when everything passes, 1 when a verification fails, 2 for
usage and internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import fixtures
from .automaton import fsa_to_dot, product, product_to_dot
from .checker import (
    DEFAULT_STATE_BUDGET,
    Verdict,
    brute_force_check,
    explain,
    to_smv,
    verify_product,
)
from .composition import CompositionPlan, compose_and_certify
from .errors import PreconditionViolated, SafeplanError, SpecSyntaxError
from .exe2fsa import compile_plan
from .harvest import (
    DEFAULT_RATES,
    HttpGenerator,
    MockGenerator,
    emit_dataset,
    harvest,
    stats,
)
from .spec_logic import SafetyFormula, build_monitor, parse_spec
from .system_model import SystemSpec, build_transition_system, load_system

log = logging.getLogger("safeplan")

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
HELP_WIDTH = 88


@dataclass(frozen=True)
class GlobalConfig:
    budget_states: int = DEFAULT_STATE_BUDGET
    budget_ms: Optional[float] = None
    budget_traces: int = 2_000_000
    log_level: str = "WARNING"
    out_dir: Path = Path(".")
    seed: int = 0
    format: str = "text"

    def __post_init__(self) -> None:
        if self.budget_states <= 0 or self.budget_traces <= 0:
            raise ValueError("budgets must be positive")
        if self.budget_ms is not None and self.budget_ms <= 0:
            raise ValueError("budgets must be positive")

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "GlobalConfig":
        return cls(
            budget_states=ns.budget_states,
            budget_ms=ns.budget_ms,
            budget_traces=ns.budget_traces,
            log_level=ns.log_level,
            out_dir=Path(ns.out_dir),
            seed=ns.seed,
            format=ns.format,
        )


class _UsageError(Exception):
    pass


# ------------------------------------------------------------------ resolution


def resolve_system(ref: str) -> SystemSpec:
    """A JSON file path or the name of a bundled system."""
    path = Path(ref)
    if path.is_file():
        return load_system(path)
    try:
        return fixtures.load_fixture_system(ref)
    except FileNotFoundError:
        raise _UsageError(f"no system file or bundled system named {ref!r}") from None


def resolve_plan(ref: str) -> tuple[str, str]:
    """(name, text) for a plan file path or bundled plan name."""
    path = Path(ref)
    if path.is_file():
        return path.stem, path.read_text(encoding="utf-8")
    try:
        return ref, fixtures.load_fixture_plan(ref)
    except FileNotFoundError:
        raise _UsageError(f"no plan file or bundled plan named {ref!r}") from None


def resolve_spec(ref: str, system: SystemSpec) -> SafetyFormula:
    """System spec name, then bundled spec name, then file, then formula text."""
    named = system.spec_named(ref)
    if named is not None:
        return named
    try:
        return fixtures.load_fixture_spec(ref)
    except FileNotFoundError:
        pass
    if Path(ref).is_file():
        return fixtures.read_spec_file(ref)
    try:
        return parse_spec(ref)
    except SpecSyntaxError:
        raise _UsageError(f"{ref!r} is not a spec name, spec file or formula") from None


def resolve_specs(refs: Optional[Sequence[str]], system: SystemSpec) -> list[SafetyFormula]:
    if not refs:
        if not system.specs:
            raise _UsageError("the system declares no specifications; pass --spec")
        return list(system.specs)
    return [resolve_spec(r, system) for r in refs]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _verdict_text(v: Verdict, plan_text: str) -> str:
    if v.passed:
        label = f"{v.name}: {v.spec}" if v.name else v.spec
        return f"PASS {label}\n"
    return explain(v, plan_text)


# ------------------------------------------------------------------ subcommands


def cmd_verify(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    name, text = resolve_plan(ns.plan)
    specs = resolve_specs(ns.spec, system)
    fsa = compile_plan(text, system)
    p = product(fsa, build_transition_system(system), guard_mode=ns.guard_mode)
    budget = ns.budget or cfg.budget_states
    known = [x.name for x in system.props]
    verdicts = [verify_product(p, f, budget_states=budget, budget_ms=cfg.budget_ms, known_props=known) for f in specs]
    report = "".join(_verdict_text(v, text) for v in verdicts)
    if ns.dot:
        out = Path(ns.dot)
        _write(out / f"{name}.fsa.dot", fsa_to_dot(fsa, name))
        _write(out / f"{name}.product.dot", product_to_dot(p, name))
    if ns.report:
        _write(Path(ns.report), report)
    if ns.emit_smv:
        _write(Path(ns.emit_smv), to_smv(p, specs))
    if cfg.format == "json":
        _emit_json({"plan": name, "states": len(p), "verdicts": [v.to_dict() for v in verdicts]})
    else:
        sys.stdout.write(report)
    return EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL


def cmd_exe2fsa(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    name, text = resolve_plan(ns.plan)
    fsa = compile_plan(text, system)
    out = fsa.to_json() if cfg.format == "json" else fsa_to_dot(fsa, name)
    if ns.output:
        _write(Path(ns.output), out)
    else:
        sys.stdout.write(out)
    if ns.product_dot:
        _write(Path(ns.product_dot), product_to_dot(product(fsa, build_transition_system(system)), name))
    return EXIT_PASS


def _load_manifest(path: Path) -> tuple[list[str], list]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise _UsageError(f"cannot read manifest {path}: {exc}") from None
    parts = []
    for ref in data.get("parts", []):
        candidate = path.parent / ref
        parts.append(str(candidate) if candidate.is_file() else ref)
    conns = []
    for c in data.get("connections", []):
        conns.append(None if c is None else frozenset((int(a), int(b)) for a, b in c))
    return parts, conns


def cmd_compose(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    refs = list(ns.plan or [])
    conns: list = []
    if ns.manifest:
        mparts, conns = _load_manifest(Path(ns.manifest))
        refs = mparts + refs
    if not refs:
        raise _UsageError("compose needs at least one --plan or a --manifest")
    fsas = []
    for ref in refs:
        name, text = resolve_plan(ref)
        fsas.append(compile_plan(text, system))
    specs = resolve_specs(ns.spec, system)
    plan = CompositionPlan(tuple(fsas), tuple(conns))
    ts = build_transition_system(system)
    known = [x.name for x in system.props]
    try:
        certs, joint = compose_and_certify(plan, ts, specs, known_props=known)
    except PreconditionViolated as exc:
        sys.stdout.write(f"not composable: {exc}\n")
        return EXIT_FAIL
    direct = [verify_product(joint, f, budget_states=cfg.budget_states, budget_ms=cfg.budget_ms, known_props=known) for f in specs] if ns.direct_check else []
    if ns.dot:
        _write(Path(ns.dot), product_to_dot(joint, "joint"))
    ok = all(c.certified for c in certs) and all(v.passed for v in direct)
    if cfg.format == "json":
        rows = []
        for k, c in enumerate(certs):
            row = {
                "spec": c.name or c.spec,
                "certified": c.certified,
                "failures": [{"pair": f.pair, "clause": f.clause, "source": f.witness.source, "target": f.witness.target, "monitor_state": f.witness.monitor_state, "reason": f.witness.reason} for f in c.failures],
            }
            if direct:
                row["direct"] = direct[k].result.value
            rows.append(row)
        _emit_json({"parts": list(plan.ids), "joint_states": len(joint), "results": rows})
        return EXIT_PASS if ok else EXIT_FAIL
    lines = [f"parts: {' -> '.join(plan.ids)} ({len(joint)} joint states)"]
    for k, c in enumerate(certs):
        label = f"{c.name}: {c.spec}" if c.name else c.spec
        lines.append(f"{'CERTIFIED' if c.certified else 'NOT CERTIFIED'} {label}")
        for f in c.failures:
            lines.append(f"  pair {f.pair}: {f.witness.describe(build_monitor(parse_spec(f.clause)))}")
        if direct:
            lines.append(f"  direct check: {direct[k].result.value.upper()}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_PASS if ok else EXIT_FAIL


def _parse_mock(text: str, system: SystemSpec) -> MockGenerator:
    if text == "default":
        rates = {s.name: DEFAULT_RATES.get(s.name, 1.0) for s in system.specs}
        return MockGenerator(system, rates=rates)
    if "=" in text:
        rates = {}
        for item in text.split(","):
            key, _, value = item.partition("=")
            rates[key.strip()] = float(value)
        return MockGenerator(system, rates=rates)
    return MockGenerator(system, safe_ratio=float(text))


def cmd_harvest(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    tasks = fixtures.load_tasks(ns.tasks)
    if ns.mock is not None:
        try:
            client = _parse_mock(ns.mock, system)
        except ValueError as exc:
            raise _UsageError(f"bad --mock value {ns.mock!r}: {exc}") from None
    elif ns.endpoint:
        if not ns.model:
            raise _UsageError("--endpoint needs --model")
        client = HttpGenerator(ns.endpoint, ns.model, max_retries=ns.retries)
    else:
        raise _UsageError("harvest needs --mock or --endpoint")
    result = harvest(client, system, tasks, ns.seeds, base_seed=cfg.seed, temperature=ns.temperature, workers=ns.workers)
    emit_dataset(result.dataset, ns.out, allow_empty=True)
    table = stats(result.records) if result.records else None
    if ns.stats and table is not None:
        _write(Path(ns.stats), json.dumps(table.to_rows(), indent=2) + "\n" if cfg.format == "json" else table.render())
    if cfg.format == "json":
        _emit_json({
            "records": len(result.records),
            "dataset": len(result.dataset),
            "failures": [{"task_index": f.task_index, "seed": f.seed, "error": f.error} for f in result.failures],
            "stats": table.to_rows() if table else [],
        })
    else:
        if table is not None:
            sys.stdout.write(table.render())
        sys.stdout.write(f"{len(result.dataset)} of {len(result.records)} plans written to {ns.out}\n")
    if result.failures:
        sys.stderr.write(result.error_summary() + "\n")
        return EXIT_ERROR
    return EXIT_PASS


def cmd_oracle_check(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    name, text = resolve_plan(ns.plan)
    specs = resolve_specs(ns.spec, system)
    p = product(compile_plan(text, system), build_transition_system(system))
    rows = []
    code = EXIT_PASS
    for f in specs:
        k = ns.k if ns.k is not None else len(p) * max(len(build_monitor(c)) for c in f.clauses()) + 1
        oracle = brute_force_check(p, f, k, naive=ns.naive, budget=cfg.budget_traces)
        bfs = verify_product(p, f, budget_states=cfg.budget_states, budget_ms=cfg.budget_ms)
        agree = oracle.result is bfs.result
        rows.append((f, k, oracle, bfs, agree))
        if not agree:
            code = EXIT_ERROR
        elif not oracle.passed and code == EXIT_PASS:
            code = EXIT_FAIL
    if cfg.format == "json":
        _emit_json([
            {
                "spec": f.name or f.text,
                "k": k,
                "oracle": o.result.value,
                "verify": b.result.value,
                "agree": a,
                "bad_prefix": [sorted(s) for s in o.counterexample.prefix] if o.counterexample else None,
            }
            for f, k, o, b, a in rows
        ])
        return code
    for f, k, o, b, a in rows:
        label = f"{f.name}: {f.text}" if f.name else f.text
        status = "agree" if a else "DISAGREE"
        sys.stdout.write(f"{o.result.value.upper()} {label} (k={k}, checker {b.result.value}, {status})\n")
        if o.counterexample is not None:
            prefix = ", ".join("{" + ", ".join(sorted(s)) + "}" for s in o.counterexample.prefix)
            sys.stdout.write(f"  bad prefix: {prefix}\n")
    return code


def cmd_explain(ns, cfg: GlobalConfig) -> int:
    system = resolve_system(ns.system)
    name, text = resolve_plan(ns.plan)
    specs = resolve_specs(ns.spec, system)
    p = product(compile_plan(text, system), build_transition_system(system))
    known = [x.name for x in system.props]
    verdicts = [verify_product(p, f, budget_states=cfg.budget_states, budget_ms=cfg.budget_ms, known_props=known) for f in specs]
    failing = [v for v in verdicts if not v.passed]
    if cfg.format == "json":
        _emit_json([v.to_dict() for v in failing])
    elif not failing:
        sys.stdout.write("no counterexample: every specification passes\n")
    else:
        sys.stdout.write("\n".join(explain(v, text) for v in failing))
    return EXIT_FAIL if failing else EXIT_PASS


# ------------------------------------------------------------------ parser


def _formatter(prog: str) -> argparse.HelpFormatter:
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _global_options() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    opts = g.add_argument_group("global options")
    opts.add_argument("--budget-states", type=_positive_int, default=DEFAULT_STATE_BUDGET, metavar="N", help="maximum explored (product, monitor) pairs")
    opts.add_argument("--budget-ms", type=_positive_float, default=None, metavar="MS", help="wall-clock budget per check in milliseconds")
    opts.add_argument("--budget-traces", type=_positive_int, default=2_000_000, metavar="N", help="maximum prefix classes for the oracle")
    opts.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    opts.add_argument("--seed", type=int, default=0, metavar="N", help="base seed for generation")
    opts.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="logging level")
    opts.add_argument("--out-dir", default=".", metavar="DIR", help="directory for relative outputs")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="safeplan", description="Verify robot plans against LTL safety specifications.", formatter_class=_formatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, description=help_text, parents=[common], formatter_class=_formatter)

    v = add("verify", "Verify a plan against safety specifications.")
    v.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    v.add_argument("--plan", required=True, metavar="FILE", help="plan file or bundled plan name")
    v.add_argument("--spec", action="append", metavar="SPEC", help="spec name, spec file or formula (repeatable; default: all system specs)")
    v.add_argument("--dot", metavar="DIR", help="write FSA and product DOT files to DIR")
    v.add_argument("--report", metavar="FILE", help="write the text report to FILE")
    v.add_argument("--budget", type=_positive_int, metavar="N", help="state budget (overrides --budget-states)")
    v.add_argument("--emit-smv", metavar="FILE", help="write an SMV model of the product to FILE")
    v.add_argument("--guard-mode", choices=("stable", "source"), default="stable", help="product guard semantics")
    v.set_defaults(func=cmd_verify)

    e = add("exe2fsa", "Compile a plan into its finite-state automaton.")
    e.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    e.add_argument("--plan", required=True, metavar="FILE", help="plan file or bundled plan name")
    e.add_argument("--output", metavar="FILE", help="write DOT (or JSON with --format json) to FILE")
    e.add_argument("--product-dot", metavar="FILE", help="also write the product automaton as DOT")
    e.set_defaults(func=cmd_exe2fsa)

    c = add("compose", "Certify a sequential composition of verified plans.")
    c.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    c.add_argument("--plan", action="append", metavar="FILE", help="plan part in execution order (repeatable)")
    c.add_argument("--manifest", metavar="FILE", help="JSON manifest with parts and optional connections")
    c.add_argument("--spec", action="append", metavar="SPEC", help="spec name, spec file or formula (repeatable)")
    c.add_argument("--direct-check", action="store_true", help="also model-check the joint automaton")
    c.add_argument("--dot", metavar="FILE", help="write the joint automaton as DOT")
    c.set_defaults(func=cmd_compose)

    h = add("harvest", "Generate plans, verify them and emit a fine-tuning dataset.")
    h.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    h.add_argument("--tasks", required=True, metavar="FILE", help="task file (one per line) or bundled task list")
    h.add_argument("--seeds", type=_positive_int, default=1, metavar="N", help="samples per task")
    h.add_argument("--out", required=True, metavar="FILE", help="dataset JSON-Lines output")
    h.add_argument("--mock", metavar="RATIO", help="use the template sampler: a ratio, 'default', or name=rate,...")
    h.add_argument("--endpoint", metavar="URL", help="chat-completions base URL")
    h.add_argument("--model", metavar="NAME", help="model name sent to the endpoint")
    h.add_argument("--retries", type=int, default=2, metavar="N", help="retries per request")
    h.add_argument("--temperature", type=float, default=0.7, metavar="T", help="sampling temperature")
    h.add_argument("--workers", type=_positive_int, default=4, metavar="N", help="parallel requests")
    h.add_argument("--stats", metavar="FILE", help="write the pass-rate table to FILE")
    h.set_defaults(func=cmd_harvest)

    o = add("oracle-check", "Cross-check the checker against brute-force enumeration.")
    o.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    o.add_argument("--plan", required=True, metavar="FILE", help="plan file or bundled plan name")
    o.add_argument("--spec", action="append", metavar="SPEC", help="spec name, spec file or formula (repeatable)")
    o.add_argument("--k", type=_positive_int, metavar="N", help="prefix length bound (default: product x monitor states + 1)")
    o.add_argument("--naive", action="store_true", help="enumerate every prefix instead of prefix classes")
    o.set_defaults(func=cmd_oracle_check)

    x = add("explain", "Print step-by-step counterexample reports.")
    x.add_argument("--system", required=True, metavar="FILE", help="system JSON file or bundled system name")
    x.add_argument("--plan", required=True, metavar="FILE", help="plan file or bundled plan name")
    x.add_argument("--spec", action="append", metavar="SPEC", help="spec name, spec file or formula (repeatable)")
    x.set_defaults(func=cmd_explain)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help()
        return EXIT_ERROR
    if len(argv) == 1 and argv[0] in parser._subparsers._group_actions[0].choices:
        parser._subparsers._group_actions[0].choices[argv[0]].print_help()
        return EXIT_ERROR
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_ERROR
    if ns.command is None:
        parser.print_help()
        return EXIT_ERROR
    logging.basicConfig(level=ns.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    cfg = GlobalConfig.from_args(ns)
    for attr in ("report", "dot", "emit_smv", "output", "product_dot", "out", "stats"):
        value = getattr(ns, attr, None)
        if value and not Path(value).is_absolute():
            setattr(ns, attr, str(cfg.out_dir / value))
    try:
        return ns.func(ns, cfg)
    except _UsageError as exc:
        sys.stderr.write(f"safeplan {ns.command}: {exc}\n")
        return EXIT_ERROR
    except SafeplanError as exc:
        sys.stderr.write(f"safeplan {ns.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
