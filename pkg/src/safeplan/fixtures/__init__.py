"""Bundled systems, plans, specifications and task lists."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..spec_logic import SafetyFormula, parse_spec
from ..system_model import SystemSpec, load_system

KINDS = {"systems": ".json", "plans": ".plan", "specs": ".ltl", "tasks": ".txt"}


def fixture_path(kind: str, name: str) -> Path:
    if kind not in KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}")
    stem = name[: -len(KINDS[kind])] if name.endswith(KINDS[kind]) else name
    path = Path(str(resources.files(__name__))) / kind / f"{stem}{KINDS[kind]}"
    if not path.is_file():
        raise FileNotFoundError(f"no {kind[:-1]} fixture named {name!r}")
    return path


def list_fixtures(kind: str) -> list[str]:
    folder = Path(str(resources.files(__name__))) / kind
    return sorted(p.stem for p in folder.glob(f"*{KINDS[kind]}"))


def load_fixture_system(name: str) -> SystemSpec:
    return load_system(fixture_path("systems", name))


def load_fixture_plan(name: str) -> str:
    return fixture_path("plans", name).read_text(encoding="utf-8")


def read_spec_file(path: str | Path, name: str = "") -> SafetyFormula:
    """Spec files hold one formula; lines starting with '#' are comments."""
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if not l.lstrip().startswith("#")]
    return parse_spec(" ".join(lines).strip(), name=name or Path(path).stem)


def load_fixture_spec(name: str) -> SafetyFormula:
    return read_spec_file(fixture_path("specs", name), name=name)


def load_tasks(path_or_name: str | Path) -> list[str]:
    path = Path(path_or_name)
    if not path.is_file():
        path = fixture_path("tasks", str(path_or_name))
    return [l.strip() for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
