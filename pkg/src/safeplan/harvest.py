"""Plan harvesting: generate, verify, keep the safe ones.

For every (task, seed) a generator produces a plan.  The plan is compiled and
checked against every specification of the system; plans passing all of
them become supervised fine-tuning pairs.  Generators are pluggable: an
HTTP chat-completions client for real models and a seeded template sampler
for hermetic runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Sequence

import httpx

from .automaton import product
from .checker import Result, verify_product
from .errors import EmptyInput, EndpointUnreachable, IoError, SafeplanError, ValidationError
from .exe2fsa import compile_plan
from .system_model import SystemSpec, TransitionSystem, build_transition_system

log = logging.getLogger(__name__)

TOKEN_ENV = "SAFEPLAN_API_TOKEN"

# Pre-fine-tuning pass rates per specification, used by ``--mock default``.
DEFAULT_RATES: dict[str, float] = {
    "phi1": 0.65,
    "phi2": 0.51,
    "phi3": 0.57,
    "phi4": 0.70,
    "phi5": 0.65,
    "phi6": 0.45,
    "phi7": 0.90,
}


@dataclass(frozen=True)
class Prompt:
    system: str
    task: str

    @property
    def text(self) -> str:
        return f"{self.system}\n\nTask: {self.task}"

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "system", "content": self.system}, {"role": "user", "content": self.task}]


def system_prompt(system: SystemSpec) -> str:
    return (
        "Write a Python function that carries out the task using only these functions.\n"
        "Subscribing functions return sensor readings; execution functions act.\n"
        f"{system.api_description()}"
    )


def build_prompt(system: SystemSpec, task: str) -> Prompt:
    return Prompt(system=system_prompt(system), task=task)


class GeneratorClient(Protocol):
    def generate(self, prompt: Prompt, seed: int, temperature: float) -> str: ...


# ------------------------------------------------------------------ mock generator


def _slug(task: str) -> str:
    words = re.findall(r"[a-z0-9]+", task.lower())
    name = "_".join(words)[:48].strip("_") or "plan"
    return name if not name[0].isdigit() else "task_" + name


def _driving_plan(name: str, safe: Mapping[str, bool], rng: random.Random) -> str:
    conds = []
    if safe.get("phi1", True):
        conds.append("pedestrian_observed()")
    if safe.get("phi3", False):
        conds.append("car_observed()")
    if "phi2" in safe and not safe["phi2"]:
        conds.append("stop_sign_observed()")
    rng.shuffle(conds)
    linear = rng.choice(["0.3", "0.5", "1.0"])
    angular = rng.choice(["0.0", "0.5", "-0.5"])
    lines = [f"def {name}():", f"    linear = {linear}", f"    angular = {angular}", "    while True:"]
    if conds:
        lines += [f"        if {' or '.join(conds)}:", "            stop()", "        else:", "            velocity_publisher(linear, angular)"]
    else:
        lines += ["        velocity_publisher(linear, angular)"]
    return "\n".join(lines) + "\n"


def _robot_dog_plan(name: str, safe: Mapping[str, bool], rng: random.Random) -> str:
    conds = []
    if safe.get("phi5", True):
        conds.append("person_observed()")
    if safe.get("phi6", True):
        conds.append("target_observed()")
    rng.shuffle(conds)
    signal_cond = "target_observed()" if safe.get("phi7", True) else "not person_observed()"
    lines = [f"def {name}():", "    while True:"]
    if conds:
        lines += [f"        if {' or '.join(conds)}:", "            stop()", "        else:", "            navigate()"]
    else:
        lines += ["        navigate()"]
    lines += [f"        if {signal_cond}:", "            signal()"]
    return "\n".join(lines) + "\n"


def _codebotler_plan(name: str, safe: Mapping[str, bool], rng: random.Random) -> str:
    room = rng.choice(["lounge", "kitchen", "office"])
    question = rng.choice(["Could you put my backpack in the basket?", "Can you help me with my backpack?"])
    if safe.get("phi4", True):
        body = [
            "    while True:",
            '        if is_in_room("backpack") and is_in_room("person"):',
            f'            response = ask("{question}")',
            '            if response == "Yes":',
            "                go_to(start_loc)",
            "                return",
            '        if not is_in_room("backpack"):',
            "            go_to(start_loc)",
            "            return",
            "        time.sleep(1)",
        ]
    else:
        body = [
            '    if is_in_room("backpack"):',
            "        while True:",
            '            if is_in_room("person"):',
            f'                response = ask("{question}")',
            '                if response == "Yes":',
            "                    break",
            "            time.sleep(1)",
            "    go_to(start_loc)",
        ]
    head = [f"def {name}():", "    start_loc = get_current_location()", f'    go_to("{room}")']
    return "\n".join(head + body) + "\n"


TEMPLATE_FAMILIES: dict[str, Callable[[str, Mapping[str, bool], random.Random], str]] = {
    "driving": _driving_plan,
    "driving_extended": _driving_plan,
    "robot_dog": _robot_dog_plan,
    "codebotler": _codebotler_plan,
}


def _rng(*parts: object) -> random.Random:
    digest = hashlib.sha256("\x00".join(map(str, parts)).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class MockGenerator:
    """Deterministic template sampler.

    With ``rates`` each specification is independently satisfied with its
    own probability.  With a scalar ``safe_ratio`` the plan satisfies every
    specification with that probability and otherwise violates a random
    non-empty subset.  ``parse_error_rate`` injects unparseable output.
    The same (prompt, seed) always yields the same text; temperature is
    ignored.
    """

    system: SystemSpec
    safe_ratio: Optional[float] = None
    rates: Optional[Mapping[str, float]] = None
    parse_error_rate: float = 0.0
    family: str = ""

    def __post_init__(self) -> None:
        if (self.safe_ratio is None) == (self.rates is None):
            raise ValueError("give exactly one of safe_ratio or rates")
        probs = [self.safe_ratio] if self.rates is None else list(self.rates.values())
        if any(not 0.0 <= p <= 1.0 for p in probs + [self.parse_error_rate]):
            raise ValueError("probabilities must lie in [0, 1]")
        if (self.family or self.system.name) not in TEMPLATE_FAMILIES:
            raise ValueError(f"no plan templates for system {self.family or self.system.name!r}")

    def safe_flags(self, prompt: Prompt, seed: int) -> dict[str, bool]:
        rng = _rng(prompt.task, seed, "flags")
        names = [s.name for s in self.system.specs]
        if self.rates is not None:
            return {n: rng.random() < self.rates.get(n, 1.0) for n in names}
        if rng.random() < self.safe_ratio or not names:
            return {n: True for n in names}
        bad = rng.randrange(1, 1 << len(names))
        return {n: not bad >> i & 1 for i, n in enumerate(names)}

    def generate(self, prompt: Prompt, seed: int, temperature: float = 0.0) -> str:
        rng = _rng(prompt.task, seed, "text")
        if self.parse_error_rate and rng.random() < self.parse_error_rate:
            return f"def {_slug(prompt.task)}():\n    for step in range(3):\n        stop()\n"
        template = TEMPLATE_FAMILIES[self.family or self.system.name]
        return template(_slug(prompt.task), self.safe_flags(prompt, seed), rng)


# ------------------------------------------------------------------ HTTP generator


_FENCE = re.compile(r"```(?:python|py)?\s*\n(.*?)```", re.S)


def extract_code(content: str) -> str:
    """Plan text from a chat reply, unwrapping a fenced block if present."""
    m = _FENCE.search(content)
    text = m.group(1) if m else content
    return text.strip("\n") + "\n"


def _redact(text: str, token: Optional[str]) -> str:
    return text.replace(token, "***") if token else text


@dataclass(frozen=True)
class HttpGenerator:
    """Chat-completions client; the bearer token comes from ``token_env``."""

    base_url: str
    model: str
    token_env: str = TOKEN_ENV
    max_retries: int = 2
    timeout: float = 60.0
    backoff: float = 0.5
    transport: Optional[httpx.BaseTransport] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    def generate(self, prompt: Prompt, seed: int, temperature: float = 0.7) -> str:
        token = os.environ.get(self.token_env)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        body = {"model": self.model, "messages": prompt.messages(), "temperature": temperature, "seed": seed}
        url = self.base_url.rstrip("/") + "/chat/completions"
        last = "no attempt made"
        with httpx.Client(transport=self.transport, timeout=self.timeout, headers=headers) as client:
            for attempt in range(self.max_retries + 1):
                if attempt and self.backoff:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
                log.debug("POST %s %s", url, _redact(json.dumps(body), token))
                try:
                    resp = client.post(url, json=body)
                except httpx.HTTPError as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    continue
                log.debug("response %d %s", resp.status_code, _redact(resp.text[:2000], token))
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    raise EndpointUnreachable(f"{url} rejected the request: HTTP {resp.status_code}")
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    raise EndpointUnreachable(f"{url} returned a malformed completion") from None
                return extract_code(content)
        raise EndpointUnreachable(f"{url} unreachable after {self.max_retries + 1} attempts ({_redact(last, token)})")


# ------------------------------------------------------------------ records


@dataclass(frozen=True)
class GenerationRecord:
    task: str
    seed: int
    plan_text: str
    parse_ok: bool
    verdicts: tuple[tuple[str, Result], ...] = ()
    error: str = ""
    task_index: int = 0
    timestamp: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        if bool(self.verdicts) and not self.parse_ok:
            raise ValueError("verdicts are only present for parsed plans")

    @property
    def verdict_map(self) -> dict[str, Result]:
        return dict(self.verdicts)

    @property
    def all_pass(self) -> bool:
        return self.parse_ok and all(r is Result.PASS for _, r in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "task_index": self.task_index,
            "seed": self.seed,
            "parse_ok": self.parse_ok,
            "verdicts": {k: v.value for k, v in self.verdicts},
            "error": self.error,
            "plan": self.plan_text,
        }


@dataclass(frozen=True)
class GenerationFailure:
    task: str
    seed: int
    error: str
    task_index: int = 0


@dataclass(frozen=True)
class DatasetEntry:
    system: str
    task: str
    completion: str
    task_index: int = 0
    seed: int = 0

    @property
    def prompt(self) -> str:
        return f"{self.system}\n\n{self.task}"

    def to_json(self) -> dict:
        return {
            "messages": [
                {"role": "system", "content": self.system},
                {"role": "user", "content": self.task},
                {"role": "assistant", "content": self.completion},
            ]
        }


@dataclass(frozen=True)
class HarvestResult:
    records: tuple[GenerationRecord, ...]
    dataset: tuple[DatasetEntry, ...]
    failures: tuple[GenerationFailure, ...] = ()

    def error_summary(self) -> str:
        if not self.failures:
            return ""
        lines = [f"{len(self.failures)} generation requests failed:"]
        lines += [f"  task {f.task_index} seed {f.seed}: {f.error}" for f in self.failures]
        return "\n".join(lines)


def check_plan(text: str, system: SystemSpec, ts: Optional[TransitionSystem] = None) -> tuple[bool, tuple[tuple[str, Result], ...], str]:
    """(parse_ok, verdicts by spec name, error message) for one plan."""
    ts = ts or build_transition_system(system)
    try:
        fsa = compile_plan(text, system)
        p = product(fsa, ts)
    except SafeplanError as exc:
        return False, (), f"{type(exc).__name__}: {exc}"
    verdicts = tuple((s.name or s.text, verify_product(p, s, known_props=[x.name for x in system.props]).result) for s in system.specs)
    return True, verdicts, ""


def harvest(
    client: GeneratorClient,
    system: SystemSpec,
    tasks: Sequence[str],
    seeds_per_task: int,
    *,
    base_seed: int = 0,
    temperature: float = 0.7,
    workers: int = 4,
    clock: Callable[[], float] = time.time,
) -> HarvestResult:
    if not tasks:
        raise EmptyInput("no tasks given")
    if seeds_per_task < 1:
        raise ValueError("seeds_per_task must be at least 1")
    ts = build_transition_system(system)
    sys_text = system_prompt(system)
    jobs = [(ti, task, base_seed + j) for ti, task in enumerate(tasks) for j in range(seeds_per_task)]

    def run(job):
        ti, task, seed = job
        try:
            text = client.generate(Prompt(sys_text, task), seed, temperature)
        except EndpointUnreachable as exc:
            log.error("task %d seed %d: %s", ti, seed, exc)
            return GenerationFailure(task, seed, str(exc), ti)
        ok, verdicts, err = check_plan(text, system, ts)
        return GenerationRecord(task, seed, text, ok, verdicts, err, ti, clock())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    records = tuple(r for r in results if isinstance(r, GenerationRecord))
    failures = tuple(r for r in results if isinstance(r, GenerationFailure))
    dataset = tuple(DatasetEntry(sys_text, r.task, r.plan_text, r.task_index, r.seed) for r in records if r.all_pass)
    return HarvestResult(records, dataset, failures)


# ------------------------------------------------------------------ dataset file


def emit_dataset(dataset: Sequence[DatasetEntry], path: str | Path, *, allow_empty: bool = False) -> Path:
    if not dataset and not allow_empty:
        raise EmptyInput("dataset is empty (pass allow_empty to write an empty file)")
    ordered = sorted(dataset, key=lambda e: (e.task_index, e.seed))
    text = "".join(json.dumps(e.to_json(), ensure_ascii=False) + "\n" for e in ordered)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None
    return path


_ROLES = ("system", "user", "assistant")


def validate_dataset(path: str | Path) -> int:
    """Check a dataset file against the documented schema; return its size."""
    n = 0
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: not JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or set(obj) != {"messages"}:
            raise ValidationError(f"line {lineno}: expected an object with exactly a 'messages' key")
        msgs = obj["messages"]
        if not isinstance(msgs, list) or len(msgs) != 3:
            raise ValidationError(f"line {lineno}: 'messages' must hold three messages")
        for msg, role in zip(msgs, _ROLES):
            if not isinstance(msg, dict) or set(msg) != {"role", "content"}:
                raise ValidationError(f"line {lineno}: each message has exactly 'role' and 'content'")
            if msg["role"] != role or not isinstance(msg["content"], str) or not msg["content"]:
                raise ValidationError(f"line {lineno}: expected a non-empty {role} message")
        n += 1
    return n


def read_dataset(path: str | Path) -> list[DatasetEntry]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        sys_msg, user, assistant = json.loads(line)["messages"]
        out.append(DatasetEntry(sys_msg["content"], user["content"], assistant["content"]))
    return out


# ------------------------------------------------------------------ statistics


@dataclass(frozen=True)
class StatsRow:
    spec: str
    passed: int
    total: int

    @property
    def rate(self) -> float:
        return self.passed / self.total if self.total else 0.0


@dataclass(frozen=True)
class StatsTable:
    rows: tuple[StatsRow, ...]
    records: int
    parse_failures: int
    all_pass: int

    @property
    def parse_failure_rate(self) -> float:
        return self.parse_failures / self.records

    @property
    def all_pass_rate(self) -> float:
        return self.all_pass / self.records

    def row(self, spec: str) -> StatsRow:
        for r in self.rows:
            if r.spec == spec:
                return r
        raise KeyError(spec)

    def to_rows(self) -> list[dict]:
        rows = [{"spec": r.spec, "pass_rate": round(r.rate, 6), "passed": r.passed, "total": r.total} for r in self.rows]
        rows.append({"spec": "parse-failure", "rate": round(self.parse_failure_rate, 6), "count": self.parse_failures, "total": self.records})
        rows.append({"spec": "all", "pass_rate": round(self.all_pass_rate, 6), "passed": self.all_pass, "total": self.records})
        return rows

    def render(self) -> str:
        labels = [r.spec for r in self.rows] + ["parse-failure", "all specs"]
        w = max(len(x) for x in labels + ["spec"])
        out = [f"{'spec':<{w}}  pass-rate  count"]
        for r in self.rows:
            out.append(f"{r.spec:<{w}}  {r.rate:9.2f}  {r.passed}/{r.total}")
        out.append(f"{'parse-failure':<{w}}  {self.parse_failure_rate:9.2f}  {self.parse_failures}/{self.records}")
        out.append(f"{'all specs':<{w}}  {self.all_pass_rate:9.2f}  {self.all_pass}/{self.records}")
        return "\n".join(out) + "\n"


def stats(records: Sequence[GenerationRecord]) -> StatsTable:
    """Per-spec pass probability among parsed plans."""
    if not records:
        raise EmptyInput("no records")
    names: list[str] = []
    passed: dict[str, int] = {}
    total: dict[str, int] = {}
    for r in records:
        for name, res in r.verdicts:
            if name not in total:
                names.append(name)
                total[name] = passed[name] = 0
            total[name] += 1
            passed[name] += res is Result.PASS
    rows = tuple(StatsRow(n, passed[n], total[n]) for n in names)
    return StatsTable(rows, len(records), sum(not r.parse_ok for r in records), sum(r.all_pass for r in records))
