import json

import httpx
import pytest

from malfam.corpus import SampleRecord
from malfam.errors import CacheMissError, ConfigError, TransportError
from malfam.gateway import (
    JudgeConfig,
    OpenAIChatProvider,
    ResponseCache,
    _call_with_retries,
    batch_classify,
    cache_key,
    classify,
)
from malfam.prompts import get_template

P1 = get_template("P1")


def judge(model_id="m1", **kw):
    kw.setdefault("backoff_s", 0.0)
    return JudgeConfig(model_id=model_id, endpoint="https://api.example.test/v1", **kw)


def samples(n):
    return [SampleRecord(f"s{i:03d}", f"int main(){{return {i};}}", ("CreateFileA",)) for i in range(n)]


def test_replay_hit(tmp_path, fake_provider):
    cache = ResponseCache(tmp_path)
    cache.put("s1", "m1", "P1", "Trojan")
    prov = fake_provider()
    r = classify(judge(), "prompt", cache, "replay", sample_id="s1", prompt_id="P1", provider=prov)
    assert (r.response_text, r.retrieved_from_cache, prov.calls) == ("Trojan", True, 0)


def test_replay_miss_never_calls(tmp_path, fake_provider):
    prov = fake_provider()
    with pytest.raises(CacheMissError) as info:
        classify(judge(), "prompt", ResponseCache(tmp_path), "replay", sample_id="s1", prompt_id="P1",
                 provider=prov)
    assert prov.calls == 0
    assert info.value.keys == [("s1", "m1", "P1")]


def test_record_then_replay_identical(tmp_path, fake_provider):
    cache = ResponseCache(tmp_path)
    text = "  ```\nRansomware\n``` é"
    prov = fake_provider(reply=lambda j, p: text)
    first = classify(judge(), "prompt", cache, "record", sample_id="s1", prompt_id="P1", provider=prov)
    again = classify(judge(), "prompt", cache, "replay", sample_id="s1", prompt_id="P1", provider=prov)
    assert first.response_text == again.response_text == text
    assert prov.calls == 1
    assert cache.keys() == [("s1", "m1", "P1")]


def test_record_reuses_existing_entries(tmp_path, fake_provider):
    cache = ResponseCache(tmp_path)
    cache.put("s1", "m1", "P1", "Worm")
    prov = fake_provider()
    r = classify(judge(), "prompt", cache, "record", sample_id="s1", prompt_id="P1", provider=prov)
    assert r.response_text == "Worm" and prov.calls == 0


def test_live_bypasses_cache(tmp_path, fake_provider):
    cache = ResponseCache(tmp_path)
    cache.put("s1", "m1", "P1", "Worm")
    prov = fake_provider()
    r = classify(judge(), "prompt", cache, "live", sample_id="s1", prompt_id="P1", provider=prov)
    assert r.response_text == "Trojan" and prov.calls == 1
    assert cache.get("s1", "m1", "P1")["response_text"] == "Worm"


def test_index_is_append_only_without_duplicates(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("s1", "m1", "P1", "Worm")
    cache.put("s1", "m1", "P1", "Virus")
    cache.put("s2", "m1", "P1", "Virus")
    lines = (tmp_path / "index.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["key"] == cache_key("s1", "m1", "P1")


def test_cache_key_injective():
    triples = [("a", "b", "c"), ("a", "bc", ""), ("ab", "c", ""), ("a,b", "c", ""), ("a", "b,c", ""),
               ('a"', "b", "c"), ("a", '"b', "c")]
    assert len({cache_key(*t) for t in triples}) == len(triples)


def test_snapshot_changes_with_content(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("s1", "m1", "P1", "Worm")
    before = cache.snapshot_id()
    cache.put("s1", "m1", "P1", "Virus")
    assert cache.snapshot_id() != before


class Flaky:
    def __init__(self, failures, status=503):
        self.failures = failures
        self.status = status
        self.calls = 0

    def complete(self, judge, prompt):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("boom", status=self.status)
        return "Virus"


def test_retry_then_success():
    prov = Flaky(2)
    sleeps = []
    text, _ = _call_with_retries(prov, judge(max_retries=3, backoff_s=0.5), "p", sleep=sleeps.append)
    assert text == "Virus" and prov.calls == 3
    assert sleeps == [0.5, 1.0]


def test_retries_exhausted():
    prov = Flaky(10)
    with pytest.raises(TransportError):
        _call_with_retries(prov, judge(max_retries=2), "p", sleep=lambda s: None)
    assert prov.calls == 3


def test_non_retryable_fails_fast():
    prov = Flaky(10, status=400)

    def complete(j, p):
        prov.calls += 1
        raise TransportError("bad request", status=400, retryable=False)

    prov.complete = complete
    with pytest.raises(TransportError):
        _call_with_retries(prov, judge(max_retries=5), "p", sleep=lambda s: None)
    assert prov.calls == 1


def test_batch_shape_and_order(tmp_path, fake_provider):
    judges = [judge(f"m{i}", provider=f"p{i}") for i in range(4)]
    provs = {j.model_id: fake_provider(reply=lambda jj, p: jj.model_id) for j in judges}
    out = batch_classify(judges, samples(200), P1, ResponseCache(tmp_path), "record", providers=provs)
    assert len(out) == 800
    assert [(r.sample_id, r.model_id) for r in out[:5]] == [
        ("s000", "m0"), ("s000", "m1"), ("s000", "m2"), ("s000", "m3"), ("s001", "m0")]
    assert all(r.ok and r.response_text == r.model_id for r in out)


def test_batch_empty(tmp_path):
    assert batch_classify([judge()], [], P1, ResponseCache(tmp_path), "replay") == []


def test_batch_one_failing_judge(tmp_path, fake_provider):
    judges = [judge("good"), judge("bad")]
    provs = {"good": fake_provider(), "bad": fake_provider(fail=True)}
    out = batch_classify(judges, samples(5), P1, ResponseCache(tmp_path), "record", providers=provs)
    good = [r for r in out if r.model_id == "good"]
    bad = [r for r in out if r.model_id == "bad"]
    assert all(r.ok for r in good) and len(good) == 5
    assert all(not r.ok and r.status == "503" for r in bad) and len(bad) == 5


def test_batch_replay_miss_is_a_record(tmp_path, fake_provider):
    out = batch_classify([judge()], samples(2), P1, ResponseCache(tmp_path), "replay")
    assert [r.status for r in out] == ["cache-miss", "cache-miss"]


def test_bounded_concurrency(tmp_path, fake_provider):
    judges = [judge(f"m{i}", provider="shared") for i in range(3)]
    prov = fake_provider(delay=0.01)
    out = batch_classify(judges, samples(20), P1, None, "live", providers={j.model_id: prov for j in judges},
                         per_provider_limit=2, global_limit=8)
    assert len(out) == 60
    assert 1 <= prov.peak <= 2


def test_duplicate_judges_rejected(tmp_path):
    with pytest.raises(ConfigError):
        batch_classify([judge(), judge()], samples(1), P1, ResponseCache(tmp_path), "replay")


def test_unknown_adapter(tmp_path):
    with pytest.raises(ConfigError):
        batch_classify([judge(adapter="nope")], samples(1), P1, ResponseCache(tmp_path), "record")


def test_judge_config_from_dict():
    j = JudgeConfig.from_dict({"model_id": "x", "endpoint": "https://h.example/v1"})
    assert j.provider_key == "h.example"
    with pytest.raises(ConfigError):
        JudgeConfig.from_dict({"model_id": "x", "colour": "red"})
    with pytest.raises(ConfigError):
        JudgeConfig.from_dict({"endpoint": "x"})


def test_openai_adapter_request(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Dropper"}}]})

    monkeypatch.setenv("TEST_JUDGE_KEY", "sk-test")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    j = judge(auth_env="TEST_JUDGE_KEY", model_name="gpt-x")
    assert OpenAIChatProvider(client).complete(j, "hello") == "Dropper"
    assert seen["url"] == "https://api.example.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["model"] == "gpt-x" and seen["body"]["temperature"] == 0.0


@pytest.mark.parametrize("code, retryable", [(429, True), (500, True), (401, False)])
def test_openai_adapter_http_errors(monkeypatch, code, retryable):
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(code)))
    with pytest.raises(TransportError) as info:
        OpenAIChatProvider(client).complete(judge(), "hello")
    assert info.value.retryable is retryable


def test_openai_adapter_missing_credential(monkeypatch):
    monkeypatch.delenv("ABSENT_KEY_FOR_TEST", raising=False)
    with pytest.raises(TransportError) as info:
        OpenAIChatProvider().complete(judge(auth_env="ABSENT_KEY_FOR_TEST"), "hello")
    assert info.value.status == "missing-credential"
    assert not info.value.retryable
