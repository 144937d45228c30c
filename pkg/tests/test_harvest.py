from __future__ import annotations

import itertools
import json
import logging
import random

import httpx
import pytest

from safeplan.checker import Result
from safeplan.errors import EmptyInput, EndpointUnreachable, IoError, ValidationError
from safeplan.fixtures import load_fixture_plan, load_fixture_system, load_tasks
from safeplan.harvest import (
    DEFAULT_RATES,
    TEMPLATE_FAMILIES,
    DatasetEntry,
    GenerationRecord,
    HttpGenerator,
    MockGenerator,
    Prompt,
    build_prompt,
    check_plan,
    emit_dataset,
    extract_code,
    harvest,
    read_dataset,
    stats,
    system_prompt,
    validate_dataset,
)

EXT = load_fixture_system("driving_extended")
DRIVING = load_fixture_system("driving")
ROBOT = load_fixture_system("robot_dog")
CODEBOTLER = load_fixture_system("codebotler")
TASKS = load_tasks("driving_tasks")


def fixed_clock():
    return 0.0


def run_mock(system, tasks, seeds, **kw):
    return harvest(MockGenerator(system, **kw), system, tasks, seeds, clock=fixed_clock)


def test_prompt_embeds_api_description():
    p = build_prompt(DRIVING, "turn right at a 90-degree intersection")
    for f in DRIVING.functions:
        assert f.name in p.text
    assert p.messages() == [{"role": "system", "content": system_prompt(DRIVING)}, {"role": "user", "content": p.task}]


@pytest.mark.parametrize("system", [EXT, ROBOT, CODEBOTLER])
def test_template_flags_control_verdicts_exactly(system):
    names = [s.name for s in system.specs]
    gen = MockGenerator(system, safe_ratio=1.0)
    template = TEMPLATE_FAMILIES[system.name]
    for bits in itertools.product((False, True), repeat=len(names)):
        flags = dict(zip(names, bits))
        for seed in range(3):
            text = template("task_plan", flags, random.Random(seed))
            ok, verdicts, err = check_plan(text, system)
            assert ok, err
            assert {n: r is Result.PASS for n, r in verdicts} == flags
    assert gen.generate(Prompt("s", "t"), 1) == gen.generate(Prompt("s", "t"), 1)


@pytest.mark.parametrize("ratio, entries", [(1.0, 100), (0.0, 0)])
def test_mock_extreme_ratios(ratio, entries):
    res = run_mock(EXT, TASKS[:10], 10, safe_ratio=ratio)
    assert len(res.records) == 100
    assert len(res.dataset) == entries
    assert not res.failures


def test_mock_half_ratio_is_pure_and_accurate():
    res = run_mock(EXT, TASKS[:20], 20, safe_ratio=0.5)
    assert len(res.records) == 400
    assert abs(len(res.dataset) / 400 - 0.5) <= 0.05
    for e in res.dataset:
        ok, verdicts, _ = check_plan(e.completion, EXT)
        assert ok and all(r is Result.PASS for _, r in verdicts)


def test_mock_per_spec_rates_for_robot_dog():
    rates = {k: DEFAULT_RATES[k] for k in ("phi5", "phi6", "phi7")}
    tasks = load_tasks("robot_dog_tasks")
    seeds = -(-400 // len(tasks))
    res = run_mock(ROBOT, tasks, seeds, rates=rates)
    table = stats(res.records)
    for name, rate in rates.items():
        assert abs(table.row(name).rate - rate) <= 0.05


def test_mock_is_deterministic(tmp_path):
    a = run_mock(EXT, TASKS[:5], 4, rates={"phi1": 0.65, "phi2": 0.51, "phi3": 0.57})
    b = run_mock(EXT, TASKS[:5], 4, rates={"phi1": 0.65, "phi2": 0.51, "phi3": 0.57})
    assert a == b
    emit_dataset(a.dataset, tmp_path / "a.jsonl")
    emit_dataset(b.dataset, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_workers_do_not_change_order():
    gen = MockGenerator(EXT, safe_ratio=0.5)
    a = harvest(gen, EXT, TASKS[:6], 5, workers=1, clock=fixed_clock)
    b = harvest(gen, EXT, TASKS[:6], 5, workers=8, clock=fixed_clock)
    assert a == b
    assert [(r.task_index, r.seed) for r in a.records] == [(t, s) for t in range(6) for s in range(5)]


def test_parse_errors_are_recorded_not_dropped():
    res = run_mock(EXT, TASKS[:10], 10, safe_ratio=1.0, parse_error_rate=0.3)
    assert len(res.records) == 100
    bad = [r for r in res.records if not r.parse_ok]
    assert bad and all(r.verdicts == () and r.error for r in bad)
    assert len(res.dataset) == 100 - len(bad)


def test_record_invariant():
    with pytest.raises(ValueError):
        GenerationRecord("t", 0, "x", False, (("phi1", Result.PASS),))


def test_dataset_file_layout(tmp_path):
    text = load_fixture_plan("turn_right_90_degrees_2")
    entry = DatasetEntry(system_prompt(DRIVING), "turn right at a 90-degree intersection", text)
    path = emit_dataset([entry], tmp_path / "d.jsonl")
    (line,) = path.read_text(encoding="utf-8").splitlines()
    msgs = json.loads(line)["messages"]
    assert [m["role"] for m in msgs] == ["system", "user", "assistant"]
    assert msgs[2]["content"] == text
    assert read_dataset(path)[0].completion == text


def test_dataset_ordering_and_stability(tmp_path):
    e1 = DatasetEntry("s", "b", "def b():\n    pass\n", task_index=1, seed=0)
    e0 = DatasetEntry("s", "a", "def a():\n    pass\n", task_index=0, seed=3)
    emit_dataset([e1, e0], tmp_path / "x.jsonl")
    emit_dataset([e0, e1], tmp_path / "y.jsonl")
    data = (tmp_path / "x.jsonl").read_bytes()
    assert data == (tmp_path / "y.jsonl").read_bytes()
    assert len(data.splitlines()) == 2
    assert [e.task for e in read_dataset(tmp_path / "x.jsonl")] == ["a", "b"]


def test_hundred_entry_run_validates(tmp_path):
    res = run_mock(EXT, TASKS[:10], 10, safe_ratio=1.0)
    path = emit_dataset(res.dataset, tmp_path / "d.jsonl")
    assert validate_dataset(path) == 100


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        json.dumps({"messages": []}),
        json.dumps({"messages": [{"role": "user", "content": "a"}] * 3}),
        json.dumps({"messages": [{"role": "system", "content": "a"}, {"role": "user", "content": "b"}, {"role": "assistant", "content": ""}]}),
        json.dumps({"messages": [], "extra": 1}),
    ],
)
def test_validator_rejects_bad_lines(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        validate_dataset(path)


def test_emit_errors(tmp_path):
    with pytest.raises(EmptyInput):
        emit_dataset([], tmp_path / "e.jsonl")
    assert emit_dataset([], tmp_path / "e.jsonl", allow_empty=True).read_text() == ""
    with pytest.raises(IoError):
        emit_dataset([DatasetEntry("s", "t", "c")], tmp_path / "missing" / "d.jsonl")


def test_stats_examples():
    recs = [GenerationRecord("t", i, "p", True, (("phi1", Result.PASS if i < 13 else Result.FAIL),)) for i in range(20)]
    table = stats(recs)
    assert table.row("phi1").rate == pytest.approx(0.65)
    assert "phi1" in table.render() and "0.65" in table.render()
    failing = [GenerationRecord("t", i, "p", False, error="PlanSyntaxError") for i in range(4)]
    table = stats(failing)
    assert table.rows == () and table.parse_failure_rate == 1.0
    assert table.to_rows()[0] == {"spec": "parse-failure", "rate": 1.0, "count": 4, "total": 4}
    with pytest.raises(EmptyInput):
        stats([])


def test_stats_render_is_aligned():
    res = run_mock(EXT, TASKS[:4], 5, safe_ratio=0.5)
    lines = stats(res.records).render().splitlines()
    assert lines[0].split() == ["spec", "pass-rate", "count"]
    col = lines[0].index("count")
    assert all(line[col - 1] == " " and line[col] != " " for line in lines[1:])


# ------------------------------------------------------------------ HTTP client


def completion(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def test_http_success_sends_chat_request(monkeypatch):
    monkeypatch.setenv("SAFEPLAN_API_TOKEN", "sekrit")
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(request)
        return httpx.Response(200, json=completion("```python\ndef f():\n    stop()\n```"))

    gen = HttpGenerator("http://model.test/v1/", "m1", transport=httpx.MockTransport(handler))
    text = gen.generate(build_prompt(DRIVING, "stop now"), seed=7, temperature=0.3)
    assert text == "def f():\n    stop()\n"
    (req,) = seen
    assert req.url == "http://model.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer sekrit"
    body = json.loads(req.content)
    assert body["model"] == "m1" and body["seed"] == 7 and body["temperature"] == 0.3
    assert [m["role"] for m in body["messages"]] == ["system", "user"]


def test_http_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else httpx.Response(200, json=completion("def f():\n    pass"))

    gen = HttpGenerator("http://x", "m", max_retries=2, backoff=0, transport=httpx.MockTransport(handler))
    assert gen.generate(Prompt("s", "t"), 0) == "def f():\n    pass\n"
    assert len(calls) == 3


def test_http_retry_bound(monkeypatch, caplog):
    monkeypatch.setenv("SAFEPLAN_API_TOKEN", "sekrit")
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused sekrit", request=request)

    gen = HttpGenerator("http://x", "m", max_retries=1, backoff=0, transport=httpx.MockTransport(handler))
    with caplog.at_level(logging.DEBUG, logger="safeplan"):
        with pytest.raises(EndpointUnreachable) as info:
            gen.generate(Prompt("s", "t"), 0)
    assert len(calls) == 2
    assert "sekrit" not in str(info.value)
    assert "sekrit" not in caplog.text


@pytest.mark.parametrize("response", [httpx.Response(401), httpx.Response(200, json={"choices": []}), httpx.Response(200, text="<html>")])
def test_http_hard_failures(response):
    gen = HttpGenerator("http://x", "m", max_retries=3, backoff=0, transport=httpx.MockTransport(lambda r: response))
    with pytest.raises(EndpointUnreachable):
        gen.generate(Prompt("s", "t"), 0)


def test_harvest_itemizes_endpoint_failures():
    def handler(request):
        seed = json.loads(request.content)["seed"]
        if seed == 1:
            return httpx.Response(500)
        return httpx.Response(200, json=completion(load_fixture_plan("turn_right_90_degrees_2")))

    gen = HttpGenerator("http://x", "m", max_retries=0, backoff=0, transport=httpx.MockTransport(handler))
    res = harvest(gen, DRIVING, ["a", "b"], 3, clock=fixed_clock)
    assert len(res.records) == 4 and len(res.failures) == 2
    assert {(f.task_index, f.seed) for f in res.failures} == {(0, 1), (1, 1)}
    assert "2 generation requests failed" in res.error_summary()
    assert len(res.dataset) == 4


def test_extract_code_without_fence():
    assert extract_code("def f():\n    pass") == "def f():\n    pass\n"


def test_mock_rejects_bad_configuration():
    with pytest.raises(ValueError):
        MockGenerator(EXT)
    with pytest.raises(ValueError):
        MockGenerator(EXT, safe_ratio=1.5)
    with pytest.raises(ValueError):
        MockGenerator(EXT, safe_ratio=0.5, family="nope")
