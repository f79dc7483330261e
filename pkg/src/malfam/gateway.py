"""Provider gateway with a record/replay response cache.

Judges are queried through small adapter objects (one ``complete`` call
per prompt). Every response can be persisted to a :class:`ResponseCache`
so later runs replay it offline, byte for byte.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence
from urllib.parse import urlparse

from malfam.corpus import SampleRecord
from malfam.errors import CacheMissError, ConfigError, TransportError
from malfam.prompts import DEFAULT_MAX_INPUT_CHARS, PromptTemplate, render_prompt

log = logging.getLogger(__name__)


class CacheMode(enum.Enum):
    RECORD = "record"
    REPLAY = "replay"
    LIVE = "live"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class JudgeConfig:
    model_id: str
    endpoint: str = ""
    auth_env: str = ""
    timeout_s: float = 60.0
    max_retries: int = 3
    adapter: str = "openai"
    model_name: str = ""
    provider: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 16
    max_input_chars: int = DEFAULT_MAX_INPUT_CHARS
    backoff_s: float = 1.0

    @property
    def provider_key(self) -> str:
        """Concurrency bucket: explicit provider name, else endpoint host."""
        if self.provider:
            return self.provider
        return urlparse(self.endpoint).netloc or self.endpoint or self.model_id

    @classmethod
    def from_dict(cls, data: dict) -> "JudgeConfig":
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown judge config field(s): {sorted(unknown)}")
        if not data.get("model_id"):
            raise ConfigError("judge config needs a model_id")
        return cls(**data)


@dataclass(frozen=True)
class RawResponse:
    sample_id: str
    model_id: str
    prompt_id: str
    response_text: str | None
    latency_s: float = 0.0
    retrieved_from_cache: bool = False
    error: str | None = None
    status: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


# --------------------------------------------------------------------------
# cache


def cache_key(sample_id: str, model_id: str, prompt_id: str) -> str:
    blob = json.dumps([sample_id, model_id, prompt_id], ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class ResponseCache:
    """Directory of one JSON file per (sample, model, prompt) key, plus an
    append-only ``index.jsonl`` manifest.

    Layout::

        <root>/index.jsonl
        <root>/entries/<key[:2]>/<key>.json
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._index_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / "entries" / key[:2] / f"{key}.json"

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._key_locks.setdefault(key, threading.Lock())

    def get(self, sample_id: str, model_id: str, prompt_id: str) -> dict | None:
        path = self._path(cache_key(sample_id, model_id, prompt_id))
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        if (entry.get("sample_id"), entry.get("model_id"), entry.get("prompt_id")) != (sample_id, model_id, prompt_id):
            raise ConfigError(f"cache entry {path} does not match its key")
        return entry

    def contains(self, sample_id: str, model_id: str, prompt_id: str) -> bool:
        return self._path(cache_key(sample_id, model_id, prompt_id)).exists()

    def put(self, sample_id: str, model_id: str, prompt_id: str, response_text: str, request: dict | None = None,
            latency_s: float = 0.0) -> None:
        key = cache_key(sample_id, model_id, prompt_id)
        entry = {
            "sample_id": sample_id,
            "model_id": model_id,
            "prompt_id": prompt_id,
            "response_text": response_text,
            "latency_s": latency_s,
            "request": request or {},
        }
        with self._lock_for(key):
            existed = self._path(key).exists()
            _atomic_write(self._path(key), json.dumps(entry, indent=1, ensure_ascii=False) + "\n")
        if not existed:
            line = json.dumps({"key": key, "sample_id": sample_id, "model_id": model_id, "prompt_id": prompt_id},
                              ensure_ascii=False)
            with self._index_lock:
                self.root.mkdir(parents=True, exist_ok=True)
                with open(self.root / "index.jsonl", "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def keys(self) -> list[tuple[str, str, str]]:
        index = self.root / "index.jsonl"
        if not index.exists():
            return []
        seen = {}
        for line in index.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                seen[rec["key"]] = (rec["sample_id"], rec["model_id"], rec["prompt_id"])
        return sorted(seen.values())

    def snapshot_id(self, keys: Sequence[tuple[str, str, str]] | None = None) -> str:
        """Content hash over the given keys (default: every indexed key)."""
        h = hashlib.sha256()
        for triple in sorted(keys if keys is not None else self.keys()):
            entry = self.get(*triple)
            text = None if entry is None else entry["response_text"]
            h.update(json.dumps([*triple, text], ensure_ascii=False).encode("utf-8"))
        return h.hexdigest()


# --------------------------------------------------------------------------
# providers


class Provider(Protocol):
    def complete(self, judge: JudgeConfig, prompt: str) -> str: ...


class OpenAIChatProvider:
    """Minimal OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, client=None):
        self._client = client

    def complete(self, judge: JudgeConfig, prompt: str) -> str:
        import httpx

        key = os.environ.get(judge.auth_env, "") if judge.auth_env else ""
        if judge.auth_env and not key:
            raise TransportError(f"environment variable {judge.auth_env} is not set", status="missing-credential",
                                 retryable=False)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {
            "model": judge.model_name or judge.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": judge.temperature,
            "max_tokens": judge.max_output_tokens,
        }
        url = judge.endpoint.rstrip("/") + "/chat/completions"
        try:
            if self._client is not None:
                resp = self._client.post(url, json=payload, headers=headers, timeout=judge.timeout_s)
            else:
                resp = httpx.post(url, json=payload, headers=headers, timeout=judge.timeout_s)
        except httpx.HTTPError as exc:
            raise TransportError(f"{judge.model_id}: {exc}", status=type(exc).__name__) from exc
        if resp.status_code >= 400:
            retryable = resp.status_code == 429 or resp.status_code >= 500
            raise TransportError(f"{judge.model_id}: HTTP {resp.status_code}", status=resp.status_code,
                                 retryable=retryable)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{judge.model_id}: unexpected response body", status="bad-body",
                                 retryable=False) from exc


ADAPTERS: dict[str, Callable[[], Provider]] = {"openai": OpenAIChatProvider}


def register_adapter(name: str, factory: Callable[[], Provider]) -> None:
    ADAPTERS[name] = factory


def _provider_for(judge: JudgeConfig, providers: dict[str, Provider] | None) -> Provider:
    if providers and judge.model_id in providers:
        return providers[judge.model_id]
    try:
        return ADAPTERS[judge.adapter]()
    except KeyError:
        raise ConfigError(f"judge {judge.model_id}: unknown adapter {judge.adapter!r}") from None


# --------------------------------------------------------------------------
# classify


def _request_meta(judge: JudgeConfig, prompt: str) -> dict:
    return {
        "endpoint": judge.endpoint,
        "adapter": judge.adapter,
        "model": judge.model_name or judge.model_id,
        "temperature": judge.temperature,
        "max_output_tokens": judge.max_output_tokens,
        "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
    }


def _call_with_retries(provider: Provider, judge: JudgeConfig, prompt: str, sleep=time.sleep) -> tuple[str, float]:
    attempt = 0
    while True:
        start = time.monotonic()
        try:
            text = provider.complete(judge, prompt)
            return text, time.monotonic() - start
        except TransportError as exc:
            if not exc.retryable or attempt >= judge.max_retries:
                raise
            delay = judge.backoff_s * (2 ** attempt)
            log.warning("%s: %s; retry %d/%d in %.1fs", judge.model_id, exc, attempt + 1, judge.max_retries, delay)
            attempt += 1
            if delay > 0:
                sleep(delay)


def classify(
    judge: JudgeConfig,
    prompt: str,
    cache: ResponseCache | None,
    mode: CacheMode | str,
    *,
    sample_id: str,
    prompt_id: str,
    provider: Provider | None = None,
) -> RawResponse:
    """Get one judge's response to one rendered prompt.

    ``replay`` reads the cache and never touches the network; a missing
    entry raises :class:`CacheMissError`. ``record`` serves existing
    entries and otherwise calls the provider and stores the answer.
    ``live`` always calls the provider and leaves the cache alone.
    """
    mode = CacheMode(mode)
    if mode is not CacheMode.LIVE:
        if cache is None:
            raise ConfigError(f"{mode} mode needs a cache directory")
        entry = cache.get(sample_id, judge.model_id, prompt_id)
        if entry is not None:
            return RawResponse(sample_id, judge.model_id, prompt_id, entry["response_text"],
                               latency_s=0.0, retrieved_from_cache=True)
        if mode is CacheMode.REPLAY:
            raise CacheMissError([(sample_id, judge.model_id, prompt_id)])

    provider = provider or _provider_for(judge, None)
    text, latency = _call_with_retries(provider, judge, prompt)
    if mode is CacheMode.RECORD:
        cache.put(sample_id, judge.model_id, prompt_id, text, _request_meta(judge, prompt), latency)
    return RawResponse(sample_id, judge.model_id, prompt_id, text, latency_s=latency)


@dataclass
class _Limits:
    per_provider: int
    sems: dict[str, threading.BoundedSemaphore] = field(default_factory=dict)
    guard: threading.Lock = field(default_factory=threading.Lock)

    def for_provider(self, key: str) -> threading.BoundedSemaphore:
        with self.guard:
            if key not in self.sems:
                self.sems[key] = threading.BoundedSemaphore(self.per_provider)
            return self.sems[key]


def batch_classify(
    judges: Sequence[JudgeConfig],
    samples: Sequence[SampleRecord],
    template: PromptTemplate,
    cache: ResponseCache | None,
    mode: CacheMode | str,
    *,
    providers: dict[str, Provider] | None = None,
    per_provider_limit: int = 4,
    global_limit: int = 16,
) -> list[RawResponse]:
    """Query every judge on every sample.

    Returns ``len(judges) * len(samples)`` records ordered sample-major,
    judge-minor, whatever order the requests completed in. Failures become
    records with ``error`` set; the batch itself never aborts.
    ``providers`` maps model ids to adapter instances and overrides the
    adapter registry.
    """
    mode = CacheMode(mode)
    ids = [j.model_id for j in judges]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate judge model ids: {ids}")
    if per_provider_limit < 1 or global_limit < 1:
        raise ConfigError("concurrency limits must be at least 1")
    if not samples or not judges:
        return []

    resolved = {}
    if mode is not CacheMode.REPLAY:
        resolved = {j.model_id: _provider_for(j, providers) for j in judges}
    limits = _Limits(per_provider_limit)

    def run(sample: SampleRecord, judge: JudgeConfig) -> RawResponse:
        tmpl = template
        if judge.max_input_chars != template.max_input_chars:
            tmpl = PromptTemplate(template.id, template.body, judge.max_input_chars, template.title)
        prompt = render_prompt(tmpl, sample)
        sem = limits.for_provider(judge.provider_key)
        try:
            if mode is not CacheMode.LIVE and cache is not None:
                entry = cache.get(sample.sample_id, judge.model_id, template.id)
                if entry is not None or mode is CacheMode.REPLAY:
                    return classify(judge, prompt, cache, mode, sample_id=sample.sample_id,
                                    prompt_id=template.id)
            with sem:
                return classify(judge, prompt, cache, mode, sample_id=sample.sample_id, prompt_id=template.id,
                                provider=resolved.get(judge.model_id))
        except CacheMissError as exc:
            return RawResponse(sample.sample_id, judge.model_id, template.id, None, error=str(exc),
                               status="cache-miss")
        except TransportError as exc:
            return RawResponse(sample.sample_id, judge.model_id, template.id, None, error=str(exc),
                               status=str(exc.status) if exc.status is not None else "transport")
        except ConfigError:
            raise
        except Exception as exc:  # provider bugs must not sink the batch
            return RawResponse(sample.sample_id, judge.model_id, template.id, None,
                               error=f"{type(exc).__name__}: {exc}", status="error")

    jobs = [(s, j) for s in samples for j in judges]
    with ThreadPoolExecutor(max_workers=min(global_limit, len(jobs))) as pool:
        futures = [pool.submit(run, s, j) for s, j in jobs]
        return [f.result() for f in futures]
