"""LLM classification: chat transport, output parsing, retry-then-repair,
caching, and multi-run consistency batches.

The model gets max_retries chances to self-correct an invalid verdict
(each retry appends a one-line correction to the conversation) before
deterministic repair kicks in.  `repaired` marks records whose parsed
flag set was transformed; an unparseable-after-retries output falls
back to the neutral verdict with needs_review set and the raw text
preserved.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .corpus import Contribution, PredictionRecord
from .errors import EthoscanError
from .prompting import PromptRendering, PromptSpec, render_prompt
from .taxonomy import FLAGS, FlagSet, repair_flag_set, validate_flag_set

API_KEY_ENV = "LLM_API_KEY"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ClassifierError(EthoscanError):
    pass


class OutputParseError(ClassifierError):
    """Model text contained no usable JSON verdict."""

    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


class TransportError(ClassifierError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_output_tokens: int = 512
    max_retries: int = 2  # correction re-asks per contribution
    timeout: float = 60.0
    cache_enabled: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ClassifierError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ClassifierError("max_retries must be >= 0")


class ChatTransport(Protocol):
    def complete(self, messages: Sequence[dict], config: ModelConfig) -> str:
        """Return the assistant message text for one chat request."""
        ...


class HttpChatTransport:
    """OpenAI-compatible chat-completions client with bounded backoff."""

    def __init__(self, api_key: str | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 transport_retries: int = 3,
                 client: httpx.Client | None = None):
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._sleep = sleep
        self._retries = transport_retries
        self._client = client or httpx.Client()

    def complete(self, messages: Sequence[dict], config: ModelConfig) -> str:
        payload = {
            "model": config.model,
            "messages": list(messages),
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_error = "no attempt made"
        for attempt in range(self._retries + 1):
            try:
                response = self._client.post(config.endpoint, json=payload,
                                             headers=headers,
                                             timeout=config.timeout)
            except httpx.HTTPError as exc:
                last_error = f"network error: {exc}"
            else:
                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise TransportError(
                            f"malformed completion response: {exc}") from None
                if response.status_code not in RETRYABLE_STATUS:
                    raise TransportError(
                        f"chat endpoint returned {response.status_code}: "
                        f"{response.text[:200]}")
                last_error = f"status {response.status_code}"
            if attempt < self._retries:
                self._sleep(0.5 * 2 ** attempt)
        raise TransportError(f"chat endpoint unavailable after "
                             f"{self._retries + 1} attempts ({last_error})")


@dataclass
class _Script:
    match: str  # substring of the user message that selects this script
    replies: list[str]
    repeat_last: bool = True
    cursor: int = 0

    def next_reply(self) -> str:
        if self.cursor < len(self.replies):
            reply = self.replies[self.cursor]
            self.cursor += 1
            return reply
        if self.repeat_last and self.replies:
            return self.replies[-1]
        raise TransportError(f"script for {self.match!r} exhausted")


class ScriptedTransport:
    """Deterministic stub transport driven by a transcript fixture.

    The transcript maps user-message substrings to reply sequences;
    successive calls matching the same entry consume successive replies,
    which is how retry conversations are scripted.  Thread-safe so
    parallel batches can share one instance.
    """

    def __init__(self, scripts: Iterable[_Script], default_reply: str | None = None):
        self._scripts = list(scripts)
        self._default = default_reply
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_dict(cls, obj: dict) -> "ScriptedTransport":
        scripts = [
            _Script(match=item["match"], replies=list(item["replies"]),
                    repeat_last=item.get("repeat_last", True))
            for item in obj.get("items", [])
        ]
        default = obj.get("default", {}).get("reply")
        return cls(scripts, default)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedTransport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def always(cls, reply: str) -> "ScriptedTransport":
        return cls([], default_reply=reply)

    def reset(self) -> None:
        with self._lock:
            for script in self._scripts:
                script.cursor = 0
            self.calls = 0

    def complete(self, messages: Sequence[dict], config: ModelConfig) -> str:
        # retries append correction turns; match against the first user turn,
        # which always carries the contribution body
        first_user = next((m["content"] for m in messages if m["role"] == "user"), "")
        with self._lock:
            self.calls += 1
            for script in self._scripts:
                if script.match in first_user:
                    return script.next_reply()
            if self._default is not None:
                return self._default
        raise TransportError("no scripted reply matches the request")


def parse_model_output(text: str) -> tuple[list[str], dict[str, str]]:
    """Extract (flag id list, rationale map) from raw model text.

    Accepts a bare JSON object, a fenced one, or one buried in prose by
    scanning for the first balanced top-level object.  The object must
    carry a "flags" array of strings; "rationale" is optional; anything
    else in it is ignored.
    """
    obj = _first_json_object(text)
    if obj is None:
        raise OutputParseError("no JSON object in model output", raw=text)
    flags = obj.get("flags")
    if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
        raise OutputParseError('missing or malformed "flags" array', raw=text)
    rationale_raw = obj.get("rationale")
    rationale: dict[str, str] = {}
    if isinstance(rationale_raw, dict):
        rationale = {str(k): str(v) for k, v in rationale_raw.items()}
    return list(dict.fromkeys(flags)), rationale


def _first_json_object(text: str):
    depth = 0
    start = None
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth:
                depth -= 1
                if depth == 0:
                    try:
                        parsed = json.loads(text[start:i + 1])
                    except json.JSONDecodeError:
                        return None
                    return parsed if isinstance(parsed, dict) else None
    return None


class PredictionCache:
    """Content-addressed verdict cache keyed on (prompt hash, model, temperature).

    Concurrent reads are safe; writes go through a temp file + rename so a
    reader never sees a partial entry.
    """

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(content_hash: str, model: str, temperature: float) -> str:
        raw = f"{content_hash}\n{model}\n{temperature!r}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self._dir / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, value: dict) -> None:
        with self._write_lock:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_text(json.dumps(value, ensure_ascii=False), encoding="utf-8")
            tmp.replace(self._path(key))


def _correction_line(problem: str) -> str:
    return (f"Your previous reply was invalid ({problem}). Reply again with "
            "a single JSON object containing a \"flags\" array of flag id "
            "strings and a \"rationale\" object, respecting the group "
            "exclusion constraints.")


@dataclass
class _Verdict:
    labels: FlagSet
    rationale: dict[str, str]
    raw_output: str
    repaired: bool
    needs_review: bool
    notes: tuple[str, ...]
    retries: int

    def to_cache(self) -> dict:
        return {
            "labels": self.labels.sorted_ids(),
            "rationale": self.rationale,
            "raw_output": self.raw_output,
            "repaired": self.repaired,
            "needs_review": self.needs_review,
            "notes": list(self.notes),
            "retries": self.retries,
        }

    @classmethod
    def from_cache(cls, obj: dict) -> "_Verdict":
        return cls(
            labels=FlagSet.from_ids(obj["labels"]),
            rationale=dict(obj["rationale"]),
            raw_output=obj["raw_output"],
            repaired=obj["repaired"],
            needs_review=obj["needs_review"],
            notes=tuple(obj.get("notes", ())),
            retries=obj.get("retries", 0),
        )


def _describe_problem(unknown: list[str], violations: tuple[str, ...]) -> str:
    parts = []
    if unknown:
        parts.append(f"unknown flag ids: {', '.join(unknown)}")
    if violations:
        parts.append(f"constraint violations: {', '.join(violations)}")
    return "; ".join(parts)


def _resolve_verdict(transport: ChatTransport, rendering: PromptRendering,
                     config: ModelConfig) -> _Verdict:
    messages = [
        {"role": "system", "content": rendering.system_text},
        {"role": "user", "content": rendering.user_text},
    ]
    retries = 0
    parsed: tuple[list[str], dict[str, str]] | None = None
    raw = ""
    while True:
        raw = transport.complete(messages, config)
        problem = None
        try:
            flags_raw, rationale = parse_model_output(raw)
        except OutputParseError as exc:
            parsed = None
            problem = str(exc)
        else:
            parsed = (flags_raw, rationale)
            unknown = [f for f in flags_raw if f not in FLAGS]
            verdict = validate_flag_set([f for f in flags_raw if f in FLAGS])
            if not unknown and verdict.valid and flags_raw:
                return _Verdict(
                    labels=FlagSet.from_ids(flags_raw),
                    rationale=rationale,
                    raw_output=raw,
                    repaired=False,
                    needs_review=False,
                    notes=(),
                    retries=retries,
                )
            violations = verdict.violations if not verdict.valid else ()
            if not flags_raw:
                violations = violations or ("empty-set",)
            problem = _describe_problem(unknown, violations)

        if retries < config.max_retries:
            retries += 1
            messages.append({"role": "assistant", "content": raw})
            messages.append({"role": "user", "content": _correction_line(problem)})
            continue

        # out of retries: deterministic fallback
        if parsed is not None:
            flags_raw, rationale = parsed
            repair = repair_flag_set(flags_raw)
            return _Verdict(
                labels=repair.flag_set,
                rationale=rationale,
                raw_output=raw,
                repaired=True,
                needs_review=repair.needs_review,
                notes=repair.notes,
                retries=retries,
            )
        return _Verdict(
            labels=FlagSet.of("F11"),
            rationale={},
            raw_output=raw,
            repaired=False,
            needs_review=True,
            notes=("unparseable output; defaulted to neutral",),
            retries=retries,
        )


def _finalize(verdict: _Verdict, contribution: Contribution, run_id: int,
              spec_version: str, config: ModelConfig,
              latency: float) -> PredictionRecord:
    rationale = {k: v for k, v in verdict.rationale.items()
                 if k in verdict.labels.flags}
    notes = verdict.notes
    dropped = sorted(set(verdict.rationale) - set(rationale))
    if dropped:
        notes = notes + (f"dropped rationale for unassigned {', '.join(dropped)}",)
    if verdict.retries:
        notes = notes + (f"correction retries: {verdict.retries}",)
    return PredictionRecord(
        contribution_id=contribution.id,
        run_id=run_id,
        labels=verdict.labels,
        rationale=rationale,
        raw_output=verdict.raw_output,
        spec_version=spec_version,
        model=config.model,
        repaired=verdict.repaired,
        needs_review=verdict.needs_review,
        latency=latency,
        notes=notes,
    )


def classify_one(contribution: Contribution, spec: PromptSpec,
                 config: ModelConfig, transport: ChatTransport | None = None,
                 cache: PredictionCache | None = None,
                 run_id: int = 1) -> PredictionRecord:
    """Classify a single contribution, consulting the cache first."""
    transport = transport or HttpChatTransport()
    rendering = render_prompt(spec, contribution)
    if cache is None and config.cache_enabled and config.cache_dir:
        cache = PredictionCache(config.cache_dir)
    key = PredictionCache.key(rendering.content_hash, config.model,
                              config.temperature)

    if config.cache_enabled and cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return _finalize(_Verdict.from_cache(hit), contribution, run_id,
                             spec.version, config, latency=0.0)

    started = time.perf_counter()
    try:
        verdict = _resolve_verdict(transport, rendering, config)
    except TransportError as exc:
        raise ClassifierError(
            f"classification failed for {contribution.id}: {exc}") from exc
    latency = time.perf_counter() - started

    if config.cache_enabled and cache is not None:
        cache.put(key, verdict.to_cache())
    return _finalize(verdict, contribution, run_id, spec.version, config, latency)


@dataclass
class BatchResult:
    records: list[PredictionRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)


def classify_batch(contributions: Sequence[Contribution], spec: PromptSpec,
                   config: ModelConfig, transport: ChatTransport | None = None,
                   parallelism: int = 1, cache: PredictionCache | None = None,
                   run_id: int = 1) -> BatchResult:
    """Classify many contributions; output order equals input order.

    Individual failures are isolated and reported in BatchResult.failures;
    only a batch where everything failed raises.
    """
    if parallelism < 1:
        raise ClassifierError("parallelism must be >= 1")
    transport = transport or HttpChatTransport()
    if cache is None and config.cache_enabled and config.cache_dir:
        cache = PredictionCache(config.cache_dir)

    def work(contribution: Contribution):
        return classify_one(contribution, spec, config, transport,
                            cache=cache, run_id=run_id)

    records: list[PredictionRecord] = []
    failures: list[tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [(c.id, pool.submit(work, c)) for c in contributions]
        for cid, future in futures:
            try:
                records.append(future.result())
            except ClassifierError as exc:
                failures.append((cid, str(exc)))
    if contributions and not records:
        raise ClassifierError(
            f"entire batch of {len(contributions)} failed; first error: "
            f"{failures[0][1]}")
    return BatchResult(records, failures)


@dataclass
class RunSet:
    """All prediction records for one contribution set across k runs."""

    k: int
    records: list[PredictionRecord]

    def __post_init__(self):
        per_run: dict[int, set[str]] = {}
        for record in self.records:
            ids = per_run.setdefault(record.run_id, set())
            if record.contribution_id in ids:
                raise ClassifierError(
                    f"duplicate record for {record.contribution_id} in run "
                    f"{record.run_id}")
            ids.add(record.contribution_id)
        if set(per_run) != set(range(1, self.k + 1)):
            raise ClassifierError(
                f"run ids {sorted(per_run)} do not cover 1..{self.k}")
        universes = set(map(frozenset, per_run.values()))
        if len(universes) > 1:
            raise ClassifierError("runs cover different contribution sets")

    def label_runs(self) -> dict[str, list[frozenset]]:
        """id -> flag sets in run order, the shape metrics.consistency eats."""
        by_run: dict[int, dict[str, frozenset]] = {}
        for record in self.records:
            by_run.setdefault(record.run_id, {})[record.contribution_id] = \
                frozenset(record.labels)
        ids = sorted(by_run[1])
        return {cid: [by_run[run][cid] for run in range(1, self.k + 1)]
                for cid in ids}


def run_consistency(contributions: Sequence[Contribution], spec: PromptSpec,
                    config: ModelConfig, k: int,
                    transport: ChatTransport | None = None,
                    parallelism: int = 1) -> RunSet:
    """Execute k genuinely independent full batches (cache bypassed)."""
    if k < 2:
        raise ClassifierError("consistency needs k >= 2 runs")
    no_cache = replace(config, cache_enabled=False)
    records: list[PredictionRecord] = []
    for run_id in range(1, k + 1):
        result = classify_batch(contributions, spec, no_cache,
                                transport=transport, parallelism=parallelism,
                                run_id=run_id)
        if result.failures:
            failed = ", ".join(cid for cid, _ in result.failures)
            raise ClassifierError(
                f"run {run_id} incomplete; failed contributions: {failed}")
        records.extend(result.records)
    return RunSet(k=k, records=records)
