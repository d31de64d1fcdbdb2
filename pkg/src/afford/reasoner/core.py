"""Structured requests, provider configuration and the providers themselves."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template

from afford.errors import (
    FixtureMissError,
    InvalidInputError,
    MalformedOutputError,
    ProviderError,
    ProviderUnavailableError,
)
from afford.reasoner.schemas import SCHEMA_IDS, fill_defaults, schema_for, validation_errors

log = logging.getLogger(__name__)

API_KEY_ENV = "AFFORD_API_KEY"
PROVIDER_KINDS = ("remote", "replay", "heuristic")


def canonical_json(value) -> str:
    """Whitespace-free, key-sorted JSON; equal payloads give equal text."""
    if isinstance(value, str):
        value = json.loads(value)
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


@dataclass(frozen=True)
class StructuredRequest:
    schema_id: str
    prompt: str
    context: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.schema_id not in SCHEMA_IDS:
            raise InvalidInputError(f"unknown schema_id {self.schema_id!r}")
        if not self.prompt or not self.prompt.strip():
            raise InvalidInputError("prompt must be non-empty")
        if isinstance(self.context, str):
            object.__setattr__(self, "context", json.loads(self.context))

    @property
    def key(self) -> str:
        return request_key(self)


def request_key(req: StructuredRequest) -> str:
    h = hashlib.sha256()
    for part in (req.schema_id, req.prompt, canonical_json(req.context)):
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "heuristic"
    endpoint: str = "http://localhost:8000"
    model: str = "gpt-4"
    temperature: float = 0.1
    max_retries: int = 2
    fixtures_dir: str | None = None
    timeout_s: float = 60.0
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise InvalidInputError(f"provider kind must be one of {PROVIDER_KINDS}")
        if self.temperature < 0:
            raise InvalidInputError("temperature must be non-negative")
        if self.max_retries < 0:
            raise InvalidInputError("max_retries must be non-negative")
        if self.kind == "replay" and not self.fixtures_dir:
            raise InvalidInputError("the replay provider needs fixtures_dir")


# prompt rendering ----------------------------------------------------------


def _template(name: str) -> Template:
    text = resources.files("afford.reasoner").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return json.dumps(value, sort_keys=True)


def render_prompt(schema_id: str, context: dict, **extra) -> str:
    """Fill the template for ``schema_id`` from the context payload."""
    values = {k: _fmt(v) for k, v in context.items()}
    values.update({k: _fmt(v) for k, v in extra.items()})
    values["context_json"] = json.dumps(context, sort_keys=True, indent=2)
    return _template(schema_id).safe_substitute(values)


def make_request(schema_id: str, context: dict, **extra) -> StructuredRequest:
    return StructuredRequest(schema_id, render_prompt(schema_id, context, **extra), context)


def system_prompt(schema_id: str) -> str:
    return _template("system").safe_substitute(schema_json=json.dumps(schema_for(schema_id), sort_keys=True))


# providers -----------------------------------------------------------------


def _checked(schema_id: str, doc, raw: str) -> dict:
    errors = validation_errors(schema_id, doc)
    if errors:
        raise MalformedOutputError("; ".join(errors), raw_text=raw)
    return fill_defaults(schema_id, doc)


class Provider:
    """Base class: ``complete`` returns a schema-valid document."""

    def __init__(self) -> None:
        self.log: list[dict] = []

    def complete(self, req: StructuredRequest) -> dict:
        doc = self._complete(req)
        self.log.append({"key": req.key, "schema_id": req.schema_id, "response": doc})
        log.debug("reasoner %s %s", req.schema_id, req.key[:12])
        return doc

    def _complete(self, req: StructuredRequest) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


class HeuristicProvider(Provider):
    """Offline rule tables; deterministic."""

    def _complete(self, req: StructuredRequest) -> dict:
        from afford.reasoner.heuristic import respond

        doc = respond(req.schema_id, req.context)
        return _checked(req.schema_id, doc, json.dumps(doc))


def fixture_path(fixtures_dir, key: str) -> Path:
    return Path(fixtures_dir) / f"{key}.json"


def record_fixture(req: StructuredRequest, response: dict, fixtures_dir) -> Path:
    """Store ``response`` so the replay provider resolves ``req`` to it."""
    errors = validation_errors(req.schema_id, response)
    if errors:
        raise InvalidInputError("refusing to record a schema-invalid response: " + "; ".join(errors))
    path = fixture_path(fixtures_dir, req.key)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "key": req.key,
        "schema_id": req.schema_id,
        "prompt": req.prompt,
        "context": req.context,
        "response": response,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(record, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


class ReplayProvider(Provider):
    def __init__(self, fixtures_dir) -> None:
        super().__init__()
        self.fixtures_dir = Path(fixtures_dir)

    def _complete(self, req: StructuredRequest) -> dict:
        path = fixture_path(self.fixtures_dir, req.key)
        if not path.is_file():
            raise FixtureMissError(req.key)
        record = json.loads(path.read_text(encoding="utf-8"))
        return _checked(req.schema_id, record["response"], json.dumps(record["response"]))


class RecordingProvider(Provider):
    """Wraps another provider and writes a fixture for every answered request."""

    def __init__(self, inner: Provider, fixtures_dir) -> None:
        super().__init__()
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)
        self.recorded: list[Path] = []

    def _complete(self, req: StructuredRequest) -> dict:
        doc = self.inner.complete(req)
        self.recorded.append(record_fixture(req, doc, self.fixtures_dir))
        return doc


_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


def parse_json_answer(text: str):
    text = text.strip()
    m = _FENCE.match(text)
    if m:
        text = m.group(1)
    return json.loads(text)


class RemoteProvider(Provider):
    """Chat-completions client that validates and re-prompts on bad output."""

    def __init__(self, cfg: ProviderConfig, client=None) -> None:
        super().__init__()
        self.cfg = cfg
        self._client = client
        self._slots = threading.Semaphore(max(1, cfg.max_in_flight))

    def _http(self):
        if self._client is None:
            import httpx

            self._client = httpx.Client(timeout=self.cfg.timeout_s)
        return self._client

    def _post(self, messages: list[dict]) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.cfg.model, "temperature": self.cfg.temperature, "messages": messages}
        url = self.cfg.endpoint.rstrip("/") + "/v1/chat/completions"
        last_exc: Exception | None = None
        for _ in range(self.cfg.max_retries + 1):
            try:
                with self._slots:
                    resp = self._http().post(url, json=body, headers=headers)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last_exc = exc
                log.warning("remote provider request failed: %s", exc)
        raise ProviderUnavailableError(f"remote provider unavailable: {last_exc}")

    def _complete(self, req: StructuredRequest) -> dict:
        messages = [
            {"role": "system", "content": system_prompt(req.schema_id)},
            {"role": "user", "content": req.prompt},
        ]
        raw = ""
        for attempt in range(self.cfg.max_retries + 1):
            raw = self._post(messages)
            self.log.append({"key": req.key, "attempt": attempt, "raw": raw})
            try:
                doc = parse_json_answer(raw)
            except ValueError as exc:
                problem = f"the answer is not valid JSON ({exc})"
            else:
                errors = validation_errors(req.schema_id, doc)
                if not errors:
                    return fill_defaults(req.schema_id, doc)
                problem = "the JSON does not satisfy the schema: " + "; ".join(errors)
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": f"Your previous answer was rejected: {problem}. Reply again with corrected JSON only."},
            ]
        raise MalformedOutputError(f"no schema-valid answer for {req.schema_id} after retries", raw_text=raw)


def make_provider(cfg: ProviderConfig, record_dir=None) -> Provider:
    if cfg.kind == "heuristic":
        provider: Provider = HeuristicProvider()
    elif cfg.kind == "replay":
        provider = ReplayProvider(cfg.fixtures_dir)
    elif cfg.kind == "remote":
        provider = RemoteProvider(cfg)
    else:  # pragma: no cover - guarded by ProviderConfig
        raise ProviderError(cfg.kind)
    if record_dir is not None:
        provider = RecordingProvider(provider, record_dir)
    return provider


def complete_structured(req: StructuredRequest, cfg: ProviderConfig | Provider) -> dict:
    """Answer ``req`` with a schema-valid document."""
    provider = cfg if isinstance(cfg, Provider) else make_provider(cfg)
    return provider.complete(req)
