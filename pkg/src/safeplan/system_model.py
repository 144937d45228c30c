"""The autonomous-system tuple and its clique transition system.

A system declares subscribing functions (boolean sensor reads) and execution
functions (actions), the atomic propositions they map to, and the safety
specifications a plan must respect.  Mappings are argument sensitive:
``is_in_room("person")`` and ``is_in_room("backpack")`` may yield different
propositions, with an all-wildcard pattern as per-function fallback.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

from .errors import AmbiguousMapping, ConfigParseError, TooManyProps, ValidationError
from .spec_logic import SafetyFormula, parse_spec

WILDCARD = "*"
DEFAULT_PROP_CAP = 16

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_ ]*")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


class PropKind(str, Enum):
    SENSOR = "sensor"
    EXEC = "exec"


class FunctionKind(str, Enum):
    SUBSCRIBING = "subscribing"
    EXECUTION = "execution"


_KIND_OF = {FunctionKind.SUBSCRIBING: PropKind.SENSOR, FunctionKind.EXECUTION: PropKind.EXEC}


class Unknown:
    """Argument whose value is not a literal (variable, expression)."""

    _instance: Optional["Unknown"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNKNOWN"


UNKNOWN = Unknown()


def normalize_name(name: str) -> str:
    return " ".join(name.split())


@dataclass(frozen=True)
class PropId:
    name: str
    kind: PropKind


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    kind: FunctionKind
    doc: str = ""


@dataclass(frozen=True)
class CallMapping:
    function: str
    arg_pattern: tuple[str, ...]
    prop: str

    @property
    def is_fallback(self) -> bool:
        return all(a == WILDCARD for a in self.arg_pattern)

    def matches(self, args: Sequence[Any]) -> bool:
        if self.is_fallback:
            return True
        if len(args) != len(self.arg_pattern):
            return False
        for pat, arg in zip(self.arg_pattern, args):
            if pat == WILDCARD:
                continue
            if arg is UNKNOWN or str(arg) != pat:
                return False
        return True


def _overlap(a: CallMapping, b: CallMapping) -> bool:
    if len(a.arg_pattern) != len(b.arg_pattern):
        return False
    return all(x == y or WILDCARD in (x, y) for x, y in zip(a.arg_pattern, b.arg_pattern))


@dataclass(frozen=True)
class SystemSpec:
    functions: tuple[FunctionDecl, ...]
    props: tuple[PropId, ...]
    mappings: tuple[CallMapping, ...]
    specs: tuple[SafetyFormula, ...] = ()
    name: str = ""

    @property
    def sensor_props(self) -> tuple[str, ...]:
        return tuple(sorted(p.name for p in self.props if p.kind is PropKind.SENSOR))

    @property
    def exec_props(self) -> tuple[str, ...]:
        return tuple(sorted(p.name for p in self.props if p.kind is PropKind.EXEC))

    def prop(self, name: str) -> Optional[PropId]:
        for p in self.props:
            if p.name == name:
                return p
        return None

    def function(self, name: str) -> Optional[FunctionDecl]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def spec_named(self, name: str) -> Optional[SafetyFormula]:
        for s in self.specs:
            if s.name == name:
                return s
        return None

    def api_description(self) -> str:
        """Function docs, as sent to plan generators."""
        lines = []
        for f in self.functions:
            doc = f" : {f.doc}" if f.doc else ""
            lines.append(f"{f.name} ({f.kind.value}){doc}")
        return "\n".join(lines)


def validate(spec: SystemSpec) -> SystemSpec:
    names = [p.name for p in spec.props]
    for p in spec.props:
        if not _NAME.fullmatch(p.name):
            raise ValidationError(f"invalid proposition name {p.name!r}")
        if names.count(p.name) > 1:
            raise ValidationError(f"duplicate proposition {p.name!r}")
    fnames = [f.name for f in spec.functions]
    for f in spec.functions:
        if not _IDENT.fullmatch(f.name):
            raise ValidationError(f"invalid function name {f.name!r}")
        if fnames.count(f.name) > 1:
            raise ValidationError(f"duplicate function {f.name!r}")
    for m in spec.mappings:
        fn = spec.function(m.function)
        if fn is None:
            raise ValidationError(f"mapping for undeclared function {m.function!r}")
        prop = spec.prop(m.prop)
        if prop is None:
            raise ValidationError(f"mapping to undeclared proposition {m.prop!r}")
        if prop.kind is not _KIND_OF[fn.kind]:
            raise ValidationError(f"{fn.kind.value} function {fn.name!r} mapped to {prop.kind.value} prop {prop.name!r}")
    for fn in spec.functions:
        group = [m for m in spec.mappings if m.function == fn.name]
        if fn.kind is FunctionKind.EXECUTION and not group:
            raise ValidationError(f"execution function {fn.name!r} has no mapping")
        if sum(m.is_fallback for m in group) > 1:
            raise ValidationError(f"function {fn.name!r} has more than one wildcard fallback")
        specific = [m for m in group if not m.is_fallback]
        for i, a in enumerate(specific):
            for b in specific[i + 1 :]:
                if _overlap(a, b):
                    raise ValidationError(f"overlapping patterns for {fn.name!r}: {list(a.arg_pattern)} / {list(b.arg_pattern)}")
    declared = set(names)
    for s in spec.specs:
        missing = s.props() - declared
        if missing:
            raise ValidationError(f"specification {s.text!r} references undeclared {sorted(missing)}")
    return spec


def map_call(spec: SystemSpec, callee: str, args: Sequence[Any] = ()) -> Optional[str]:
    """Proposition for a call, or None when the call is not mapped.

    >>> from safeplan.fixtures import load_fixture_system
    >>> map_call(load_fixture_system("codebotler"), "is_in_room", ["backpack"])
    'backpack'
    """
    group = [m for m in spec.mappings if m.function == callee]
    specific = [m for m in group if not m.is_fallback and m.matches(args)]
    if len(specific) > 1 and len({m.prop for m in specific}) > 1:
        raise AmbiguousMapping(f"call {callee}({', '.join(map(repr, args))}) matches several patterns")
    if specific:
        return specific[0].prop
    for m in group:
        if m.is_fallback:
            return m.prop
    return None


# ------------------------------------------------------------------ (de)serialization


def _kind(enum, raw: Any, what: str):
    try:
        return enum(str(raw).lower())
    except ValueError:
        raise ConfigParseError(f"unknown {what} kind {raw!r}") from None


def system_from_dict(data: dict) -> SystemSpec:
    if not isinstance(data, dict):
        raise ConfigParseError("system config must be a JSON object")
    try:
        functions = tuple(
            FunctionDecl(name=f["name"], kind=_kind(FunctionKind, f["kind"], "function"), doc=f.get("doc", ""))
            for f in data.get("functions", [])
        )
        props = tuple(
            PropId(name=normalize_name(p["name"]), kind=_kind(PropKind, p["kind"], "proposition"))
            for p in data.get("propositions", [])
        )
        mappings = tuple(
            CallMapping(
                function=m["function"],
                arg_pattern=tuple(str(a) for a in m.get("args", [])),
                prop=normalize_name(m["prop"]),
            )
            for m in data.get("mappings", [])
        )
        specs = []
        for entry in data.get("specs", []):
            if isinstance(entry, str):
                specs.append(parse_spec(entry))
            else:
                specs.append(parse_spec(entry["formula"], name=entry.get("name", "")))
    except (KeyError, TypeError) as exc:
        raise ConfigParseError(f"malformed system config: {exc!r}") from None
    return validate(
        SystemSpec(functions=functions, props=props, mappings=mappings, specs=tuple(specs), name=data.get("name", ""))
    )


def system_to_dict(spec: SystemSpec) -> dict:
    out: dict[str, Any] = {}
    if spec.name:
        out["name"] = spec.name
    out["functions"] = [{"name": f.name, "kind": f.kind.value, "doc": f.doc} for f in spec.functions]
    out["propositions"] = [{"name": p.name, "kind": p.kind.value} for p in spec.props]
    out["mappings"] = [{"function": m.function, "args": list(m.arg_pattern), "prop": m.prop} for m in spec.mappings]
    out["specs"] = [{"name": s.name, "formula": s.text} if s.name else s.text for s in spec.specs]
    return out


def load_system(path: str | Path) -> SystemSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from None
    return system_from_dict(data)


def save_system(spec: SystemSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(spec), indent=2) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ transition system


@dataclass(frozen=True)
class TransitionSystem:
    """Complete digraph over all valuations of the sensor props.

    State ``q`` is labeled by the props whose bit is set in ``q`` (bit ``i``
    is ``props[i]``), so state 0 is the empty valuation.
    """

    props: tuple[str, ...]
    labels: tuple[frozenset[str], ...] = field(repr=False)

    @property
    def states(self) -> range:
        return range(len(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def label(self, q: int) -> frozenset[str]:
        return self.labels[q]

    def successors(self, q: int) -> range:
        return self.states

    def transitions(self) -> Iterator[tuple[int, int]]:
        for q in self.states:
            for r in self.states:
                yield (q, r)

    @property
    def n_transitions(self) -> int:
        return len(self.labels) ** 2

    def state_of(self, valuation) -> int:
        present = set(valuation)
        unknown = present - set(self.props)
        if unknown:
            raise ValidationError(f"not sensor props: {sorted(unknown)}")
        return sum(1 << i for i, p in enumerate(self.props) if p in present)


def transition_system_over(props: Sequence[str], cap: int = DEFAULT_PROP_CAP) -> TransitionSystem:
    props = tuple(sorted(set(props)))
    if len(props) > cap:
        raise TooManyProps(f"{len(props)} sensor props exceed the cap of {cap}")
    labels = tuple(frozenset(p for i, p in enumerate(props) if q >> i & 1) for q in range(1 << len(props)))
    return TransitionSystem(props=props, labels=labels)


def build_transition_system(spec: SystemSpec, cap: int = DEFAULT_PROP_CAP) -> TransitionSystem:
    return transition_system_over(spec.sensor_props, cap)
