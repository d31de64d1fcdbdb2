import json
from pathlib import Path

import httpx
import pytest

from afford.analysis import TaskDescription
from afford.errors import (
    FixtureMissError,
    InvalidInputError,
    MalformedOutputError,
    ProviderError,
    ProviderUnavailableError,
)
from afford.reasoner.core import (
    API_KEY_ENV,
    HeuristicProvider,
    ProviderConfig,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    StructuredRequest,
    make_provider,
    make_request,
    parse_json_answer,
    record_fixture,
    request_key,
)
from afford.reasoner.schemas import SCHEMA_IDS, fill_defaults, validation_errors

GOLDEN = Path(__file__).parent / "golden"
CUP = TaskDescription("cup", (0.08, 0.08, 0.10))


def _golden(name: str) -> dict:
    return json.loads((GOLDEN / f"{name}.json").read_text())


def _remote(answers, max_retries=1, seen=None):
    """Remote provider whose endpoint returns ``answers`` in turn."""
    queue = list(answers)

    def handler(request: httpx.Request) -> httpx.Response:
        if seen is not None:
            seen.append(request)
        item = queue.pop(0) if len(queue) > 1 else queue[0]
        if isinstance(item, int):
            return httpx.Response(item)
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": item}}]})

    cfg = ProviderConfig(kind="remote", endpoint="http://reasoner.test", max_retries=max_retries)
    return RemoteProvider(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)))


# heuristic rule tables ---------------------------------------------------------


def test_heuristic_cup_analysis_golden():
    doc = HeuristicProvider().complete(make_request("affordance_analysis", CUP.context()))
    assert doc == _golden("cup_analysis")
    assert doc["ibd"].startswith("Containability")


def test_heuristic_is_deterministic():
    req = make_request("affordance_analysis", CUP.context())
    assert HeuristicProvider().complete(req) == HeuristicProvider().complete(req)


def test_heuristic_unknown_affordance():
    with pytest.raises(ProviderError):
        HeuristicProvider().complete(make_request("affordance_analysis", dict(CUP.context(), affordance="teapot")))


# requests and keys -------------------------------------------------------------


def test_context_whitespace_gives_same_key():
    a = StructuredRequest("affordance_analysis", "p", '{"affordance": "cup", "obb_dims": [0.1, 0.1, 0.1]}')
    b = StructuredRequest("affordance_analysis", "p", '{ "obb_dims":[0.1,0.1,0.1],\n  "affordance":"cup" }')
    assert request_key(a) == request_key(b)


def test_schema_id_changes_key():
    a = StructuredRequest("affordance_analysis", "p", {"x": 1})
    b = StructuredRequest("agent_model", "p", {"x": 1})
    assert a.key != b.key


def test_request_validation():
    with pytest.raises(InvalidInputError):
        StructuredRequest("nonsense", "p", {})
    with pytest.raises(InvalidInputError):
        StructuredRequest("agent_model", "  ", {})


def test_every_schema_has_a_prompt_template():
    for schema_id in SCHEMA_IDS:
        assert make_request(schema_id, {"affordance": "cup"}).prompt.strip()


def test_provider_config_validation():
    with pytest.raises(InvalidInputError):
        ProviderConfig(kind="oracle")
    with pytest.raises(InvalidInputError):
        ProviderConfig(temperature=-1)
    with pytest.raises(InvalidInputError):
        ProviderConfig(kind="replay")
    assert ProviderConfig().temperature == 0.1


# schemas -----------------------------------------------------------------------


def test_negative_radius_fails_schema():
    doc = {"label": "ball", "mass": 0.01, "spheres": [{"offset": [0, 0, 0], "radius": -0.01}]}
    assert validation_errors("agent_model", doc)


def test_missing_optional_fields_are_filled():
    doc = {"plans": [{"plan_id": 0, "description": "d", "start_region": {"anchor": "top"},
                      "move_direction": [0, 0, -1], "travel_distance": 0.1}]}
    assert not validation_errors("motion_plans", doc)
    filled = fill_defaults("motion_plans", doc)
    assert filled["plans"][0]["start_region"]["offset_frac"] == [0.0, 0.0, 0.0]


# fixtures: record and replay ---------------------------------------------------


def test_record_then_replay(tmp_path):
    req = make_request("affordance_analysis", CUP.context())
    recorder = RecordingProvider(HeuristicProvider(), tmp_path)
    doc = recorder.complete(req)
    assert recorder.recorded == [tmp_path / f"{req.key}.json"]
    assert ReplayProvider(tmp_path).complete(req) == doc


def test_replay_returns_stored_document(tmp_path):
    req = make_request("affordance_analysis", CUP.context())
    stored = dict(_golden("cup_analysis"), ibd="A stored answer that differs from the rule table.")
    path = record_fixture(req, stored, tmp_path)
    assert json.loads(path.read_text())["response"] == stored
    assert ReplayProvider(tmp_path).complete(req) == stored


def test_replay_miss(tmp_path):
    with pytest.raises(FixtureMissError):
        ReplayProvider(tmp_path).complete(make_request("affordance_analysis", CUP.context()))


def test_invalid_response_is_not_recorded(tmp_path):
    req = make_request("agent_model", CUP.context())
    with pytest.raises(InvalidInputError):
        record_fixture(req, {"spheres": []}, tmp_path)
    assert not list(tmp_path.iterdir())


def test_make_provider_kinds(tmp_path):
    assert isinstance(make_provider(ProviderConfig()), HeuristicProvider)
    assert isinstance(make_provider(ProviderConfig(kind="replay", fixtures_dir=str(tmp_path))), ReplayProvider)
    assert isinstance(make_provider(ProviderConfig(), record_dir=tmp_path), RecordingProvider)


# remote provider ---------------------------------------------------------------


def test_remote_prose_twice_is_malformed():
    provider = _remote(["I think this object is a cup.", "It is certainly a cup."], max_retries=1)
    with pytest.raises(MalformedOutputError):
        provider.complete(make_request("affordance_analysis", CUP.context()))


def test_remote_reprompts_after_bad_answer(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    seen: list = []
    good = json.dumps(_golden("cup_analysis"))
    provider = _remote(["not json", f"```json\n{good}\n```"], max_retries=1, seen=seen)
    doc = provider.complete(make_request("affordance_analysis", CUP.context()))
    assert doc == _golden("cup_analysis")
    assert len(seen) == 2
    assert seen[0].url == "http://reasoner.test/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer secret"
    body = json.loads(seen[1].content)
    assert body["temperature"] == 0.1 and body["model"] == "gpt-4"
    assert [m["role"] for m in body["messages"]] == ["system", "user", "assistant", "user"]
    assert "rejected" in body["messages"][-1]["content"]


def test_remote_schema_violation_is_malformed():
    bad = json.dumps({"label": "ball", "mass": 0.01, "spheres": [{"offset": [0, 0, 0], "radius": -0.01}]})
    with pytest.raises(MalformedOutputError):
        _remote([bad], max_retries=1).complete(make_request("agent_model", CUP.context()))


def test_remote_http_failure_is_unavailable():
    with pytest.raises(ProviderUnavailableError):
        _remote([503], max_retries=2).complete(make_request("affordance_analysis", CUP.context()))


def test_parse_json_answer_strips_fences():
    assert parse_json_answer('```json\n{"a": 1}\n```') == {"a": 1}
    assert parse_json_answer(' {"a": 1} ') == {"a": 1}
