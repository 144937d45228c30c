"""Regenerate every demo artifact: DOT files, verification reports, the SMV
export, the composed-route joint automaton, and a mock harvest dataset with
its stats table.

    python scripts/reproduce_demos.py --out artifacts/ [--seed 0]

Two runs with the same seed write byte-identical files.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from safeplan.automaton import fsa_to_dot, product, product_to_dot
from safeplan.checker import explain, to_smv, verify_all
from safeplan.composition import CompositionPlan, compose_and_certify
from safeplan.exe2fsa import compile_plan
from safeplan.fixtures import load_fixture_plan, load_fixture_system, load_tasks
from safeplan.harvest import DEFAULT_RATES, MockGenerator, emit_dataset, harvest, stats
from safeplan.system_model import build_transition_system

DEMOS = [
    ("turn_right_90_degrees_1", "driving"),
    ("turn_right_90_degrees_2", "driving"),
    ("bring_backpack_1", "codebotler"),
    ("bring_backpack_2", "codebotler"),
    ("robot_dog_safe", "robot_dog"),
    ("robot_dog_unsafe_person", "robot_dog"),
    ("robot_dog_unsafe_target", "robot_dog"),
    ("robot_dog_unsafe_signal", "robot_dog"),
    ("keyword_while", "robot_dog"),
    ("keyword_if", "robot_dog"),
    ("keyword_if_else", "robot_dog"),
    ("keyword_sequence", "robot_dog"),
]
ROUTE = ("go_straight", "turn_left", "go_straight", "turn_right")


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def verify_demos(out: Path) -> None:
    summary = []
    for plan, system_name in DEMOS:
        system = load_fixture_system(system_name)
        text = load_fixture_plan(plan)
        fsa = compile_plan(text, system)
        ts = build_transition_system(system)
        p = product(fsa, ts)
        write(out / "dot" / f"{plan}.fsa.dot", fsa_to_dot(fsa, plan))
        write(out / "dot" / f"{plan}.product.dot", product_to_dot(p, plan))
        verdicts = verify_all(fsa, ts, system.specs, known_props=[x.name for x in system.props])
        report = "".join(explain(v, text) if not v.passed else f"PASS {v.name}: {v.spec}\n" for v in verdicts)
        write(out / "reports" / f"{plan}.txt", report)
        write(out / "smv" / f"{plan}.smv", to_smv(p, system.specs))
        summary.append({"plan": plan, "system": system_name, "verdicts": {v.name: v.result.value for v in verdicts}})
    write(out / "reports" / "summary.json", json.dumps(summary, indent=2) + "\n")


def compose_demo(out: Path) -> None:
    system = load_fixture_system("driving")
    plan = CompositionPlan(tuple(compile_plan(load_fixture_plan(n), system) for n in ROUTE))
    certs, joint = compose_and_certify(plan, build_transition_system(system), system.specs, known_props=[x.name for x in system.props])
    write(out / "dot" / "route.joint.dot", product_to_dot(joint, "route"))
    lines = [f"{'CERTIFIED' if c.certified else 'NOT CERTIFIED'} {c.name}: {c.spec}" for c in certs]
    write(out / "reports" / "route.txt", "\n".join(lines) + "\n")


def harvest_demo(out: Path, seed: int) -> None:
    system = load_fixture_system("driving_extended")
    rates = {s.name: DEFAULT_RATES[s.name] for s in system.specs}
    result = harvest(MockGenerator(system, rates=rates), system, load_tasks("driving_tasks"), 20, base_seed=seed, workers=4, clock=lambda: 0.0)
    emit_dataset(result.dataset, out / "dataset.jsonl")
    write(out / "stats.txt", stats(result.records).render())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="artifacts")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    verify_demos(out)
    compose_demo(out)
    harvest_demo(out, args.seed)
    print(f"artifacts written to {out}")


if __name__ == "__main__":
    main()
