"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the summary
table is printed at the end of any pytest session that includes it.
"""

import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from malfam.calibration import calibrate_weights
from malfam.cli import main
from malfam.corpus import GoldRecord, gold_distribution, load_gold
from malfam.ensemble import EnsembleMode, Stage, WeightVector, decide, decide_hierarchical
from malfam.fixtures import oracle_decide
from malfam.metrics import cohen_kappa, evaluate
from malfam.normalizer import normalize
from malfam.pipeline import read_predictions
from malfam.taxonomy import DEFAULT_SPECIFICITY, FAMILIES, FamilyLabel
from oracles import naive_metrics

F = FamilyLabel
RESULTS: list[tuple[int, str, bool, float]] = []


@contextmanager
def criterion(number, title, budget_s=None):
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        RESULTS.append((number, title, ok, elapsed))
        print(f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s) {title}")


# ---------------------------------------------------------------- 1


def test_c01_weight_calibration():
    with criterion(1, "calibrated weights from reference accuracies", budget_s=1.0):
        acc = {"A": 0.695, "B": 0.420, "C": 0.710, "D": 0.675}
        assert sum(Fraction(str(a)) for a in acc.values()) == Fraction(5, 2)
        w = calibrate_weights(acc)
        expected = {m: float(Fraction(str(a)) / Fraction(5, 2)) for m, a in acc.items()}
        for m in acc:
            assert abs(w[m] - expected[m]) <= 1e-9
        assert {m: round(w[m], 3) for m in acc} == {"A": 0.278, "B": 0.168, "C": 0.284, "D": 0.270}


# ---------------------------------------------------------------- 2


def test_c02_oracle_equivalence():
    with criterion(2, "decide_hierarchical == oracle on 10^4 exhaustive + 10^5 random tuples", budget_s=60.0):
        ids = ["A", "B", "C", "D"]
        w = WeightVector.uniform(ids)
        exact = {m: Fraction(1, 4) for m in ids}
        n_exhaustive = 0
        for labels in product(FAMILIES, repeat=4):
            preds = list(zip(ids, labels))
            got = decide_hierarchical(preds, w).label
            assert got.display == oracle_decide(preds, exact, DEFAULT_SPECIFICITY), labels
            n_exhaustive += 1
        assert n_exhaustive == 10_000

        rng = random.Random("acceptance-c02")
        choices = [None, *FAMILIES]
        for i in range(100_000):
            n = rng.randint(1, 7)
            mids = [f"m{k}" for k in range(n)]
            raw = [rng.randint(1, 100) for _ in mids]
            total = sum(raw)
            labels = [rng.choice(choices) for _ in mids]
            preds = list(zip(mids, labels))
            got = decide_hierarchical(preds, WeightVector.from_raw(dict(zip(mids, raw)))).label
            want = oracle_decide(preds, {m: Fraction(r, total) for m, r in zip(mids, raw)}, DEFAULT_SPECIFICITY)
            assert (got.display if got else None) == want, (i, preds, raw)


# ---------------------------------------------------------------- 3

N_PROP = 10_000
PROP_SETTINGS = settings(max_examples=N_PROP, deadline=None, database=None,
                         suppress_health_check=[HealthCheck.too_slow])
raw_weight = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)
label = st.sampled_from(FAMILIES)


@st.composite
def ballots(draw, allow_invalid=True):
    n = draw(st.integers(1, 8))
    raw = draw(st.lists(raw_weight, min_size=n, max_size=n))
    labels = draw(st.lists(st.one_of(st.none(), label) if allow_invalid else label, min_size=n, max_size=n))
    ids = [f"m{i}" for i in range(n)]
    return ids, raw, list(zip(ids, labels))


def test_c03_voting_invariants():
    counts = dict.fromkeys(["unanimity", "single_judge", "scale_invariance", "conservation"], 0)

    @PROP_SETTINGS
    @given(ballots(allow_invalid=False), label)
    def unanimity(data, family):
        ids, raw, _ = data
        w = WeightVector.from_raw(dict(zip(ids, raw)))
        for mode in EnsembleMode:
            assert decide([(m, family) for m in ids], w, mode).label is family
        counts["unanimity"] += 1

    @PROP_SETTINGS
    @given(label, raw_weight)
    def single_judge(family, raw):
        w = WeightVector.from_raw({"solo": raw})
        for mode in EnsembleMode:
            d = decide([("solo", family)], w, mode)
            assert (d.label, d.stage) == (family, Stage.FAMILY_MAJORITY)
        counts["single_judge"] += 1

    @PROP_SETTINGS
    @given(ballots(), st.floats(1e-6, 1e6))
    def scale_invariance(data, c):
        ids, raw, preds = data
        a = decide_hierarchical(preds, WeightVector.from_raw(dict(zip(ids, raw))))
        b = decide_hierarchical(preds, WeightVector.from_raw({m: r * c for m, r in zip(ids, raw)}))
        assert (a.label, a.stage) == (b.label, b.stage)
        counts["scale_invariance"] += 1

    @PROP_SETTINGS
    @given(ballots())
    def conservation(data):
        import math

        ids, raw, preds = data
        w = WeightVector.from_raw(dict(zip(ids, raw)))
        d = decide_hierarchical(preds, w)
        total = math.fsum(w[m] for m, lab in preds if lab is not None)
        assert abs(math.fsum(d.family_scores.values()) - total) <= 1e-12
        assert abs(math.fsum(d.group_scores.values()) - total) <= 1e-12
        counts["conservation"] += 1

    with criterion(3, f"voting invariants, >= {N_PROP} generated cases per property"):
        for prop in (unanimity, single_judge, scale_invariance, conservation):
            prop()
        assert all(n >= N_PROP for n in counts.values()), counts


# ---------------------------------------------------------------- 4


def test_c04_metric_oracle():
    with criterion(4, "macro metrics == naive counting oracle; 2-class example"):
        rng = random.Random("acceptance-c04")
        for _ in range(200):
            n = rng.randint(1, 50)
            gold = [GoldRecord(f"s{i}", rng.choice(FAMILIES)) for i in range(n)]
            preds = {g.sample_id: rng.choice(FAMILIES) for g in gold}
            for merge in (False, True):
                got = evaluate(preds, gold, merge_equivalent=merge).summary()
                for key, value in naive_metrics(preds, gold, merge=merge).items():
                    assert abs(got[key] - value) <= 1e-12, (key, got[key], value)

        gold = [GoldRecord("a", F.WORM), GoldRecord("b", F.WORM), GoldRecord("c", F.VIRUS), GoldRecord("d", F.VIRUS)]
        preds = {"a": F.WORM, "b": F.VIRUS, "c": F.VIRUS, "d": F.VIRUS}
        assert abs(evaluate(preds, gold).macro_f1 - 0.7333333333333333) <= 1e-9


# ---------------------------------------------------------------- 5


def test_c05_cohen_kappa():
    with criterion(5, "Cohen's kappa reference cases and direct formula"):
        assert cohen_kappa(list("ABCA"), list("ABCA")) == 1.0
        assert cohen_kappa(list("AABB"), list("ABAB")) == 0.0
        assert cohen_kappa(list("AAAB"), list("BBBA")) < 0
        assert cohen_kappa(list("AB"), list("BA")) < 0
        rng = random.Random("acceptance-c05")
        for _ in range(500):
            n = rng.randint(2, 60)
            a = [rng.choice("ABCD") for _ in range(n)]
            b = [rng.choice("ABCD") for _ in range(n)]
            p_o = sum(x == y for x, y in zip(a, b)) / n
            p_e = sum(a.count(c) * b.count(c) for c in "ABCD") / (n * n)
            if p_e < 1:
                assert abs(cohen_kappa(a, b) - (p_o - p_e) / (1 - p_e)) <= 1e-12


# ---------------------------------------------------------------- 6


def swap(label):
    return {F.TROJAN: F.BACKDOOR, F.BACKDOOR: F.TROJAN}.get(label, label)


def test_c06_evaluation_equivalence(shipped_fixture, tmp_path):
    with criterion(6, "Trojan <-> Backdoor relabeling leaves merged metrics unchanged"):
        rng = random.Random("acceptance-c06")
        cases = []
        for _ in range(200):
            n = rng.randint(1, 50)
            gold = [GoldRecord(f"s{i}", rng.choice(FAMILIES)) for i in range(n)]
            cases.append(({g.sample_id: rng.choice([None, *FAMILIES]) for g in gold}, gold))
        assert main(["predict", "--config", str(shipped_fixture["config"]), "--out-dir", str(tmp_path)]) == 0
        _, models, table = read_predictions(tmp_path / "predictions.jsonl")
        gold = load_gold(shipped_fixture["gold"])
        cases += [(table[m], gold) for m in models]
        for preds, gold in cases:
            a = evaluate(preds, gold, merge_equivalent=True)
            b = evaluate({s: swap(p) for s, p in preds.items()}, gold, merge_equivalent=True)
            assert a.to_dict() == b.to_dict()


# ---------------------------------------------------------------- 7


def test_c07_replay_determinism(shipped_fixture, tmp_path, fake_provider, no_network):
    with criterion(7, "two replay pipeline runs are byte-identical with zero network calls", budget_s=30.0):
        config = json.loads(shipped_fixture["config"].read_text())
        spy = fake_provider()
        providers = {j["model_id"]: spy for j in config["judges"]}
        outputs = []
        for run in ("run1", "run2"):
            out = str(tmp_path / run)
            base = ["--config", str(shipped_fixture["config"]), "--out-dir", out]
            assert main(["predict", *base], providers=providers) == 0
            assert main(["calibrate", *base]) == 0
            assert main(["ensemble", *base]) == 0
            assert main(["evaluate", *base]) == 0
            files = sorted((tmp_path / run).iterdir())
            outputs.append({p.name: p.read_bytes() for p in files})
        assert set(outputs[0]) >= {"predictions.jsonl", "weights.json", "decisions_weighted_hierarchical.jsonl",
                                   "metrics.json", "metrics.txt", "manifest.json"}
        assert outputs[0] == outputs[1]
        assert len(outputs[0]["predictions.jsonl"].splitlines()) == 800
        assert spy.calls == 0
        assert no_network == []


# ---------------------------------------------------------------- 8


def test_c08_fixture_gold_distribution(shipped_fixture):
    with criterion(8, "shipped fixture gold distribution"):
        dist = gold_distribution(load_gold(shipped_fixture["gold"]))
        assert dist == {F.TROJAN: 82, F.BACKDOOR: 44, F.SPYWARE: 42, F.DOWNLOADER: 11, F.WORM: 6, F.BOT: 5,
                        F.RANSOMWARE: 4, F.DROPPER: 4, F.PACKED: 2, F.VIRUS: 0}
        assert sum(dist.values()) == 200


# ---------------------------------------------------------------- 9


def test_c09_ensemble_beats_mean(shipped_fixture, tmp_path):
    with criterion(9, "weighted hierarchical accuracy >= mean individual accuracy on synthetic judges"):
        base = ["--config", str(shipped_fixture["config"]), "--out-dir", str(tmp_path)]
        for cmd in ("predict", "calibrate", "ensemble", "evaluate"):
            assert main([cmd, *base]) == 0
        units = json.loads((tmp_path / "metrics.json").read_text())["units"]
        judges = [u["accuracy"] for u in units if u["kind"] == "judge"]
        ensemble = next(u["accuracy"] for u in units if u["name"] == "ensemble:weighted_hierarchical")
        assert len(judges) == 4
        assert 0.4 <= min(judges) <= 0.5 and 0.7 <= max(judges) <= 0.75
        print(f"    judges={judges} mean={sum(judges) / 4:.4f} ensemble={ensemble:.4f}")
        assert ensemble >= sum(judges) / len(judges)


# ---------------------------------------------------------------- 10

NORMALIZER_CASES = [
    # canonical strings
    ("Trojan", "Trojan"),
    ("Worm", "Worm"),
    ("Virus", "Virus"),
    ("Ransomware", "Ransomware"),
    ("Backdoor / Remote Access Trojan", "Backdoor / Remote Access Trojan"),
    ("Dropper", "Dropper"),
    ("Downloader", "Downloader"),
    ("Packed / Obfuscated Malware", "Packed / Obfuscated Malware"),
    ("Spyware / Infostealer", "Spyware / Infostealer"),
    ("Bot / Botnet Client", "Bot / Botnet Client"),
    # fences and backticks
    ("```\nTrojan\n```", "Trojan"),
    ("```text\nWorm\n```", "Worm"),
    ("`Ransomware`", "Ransomware"),
    # synonyms
    ("RAT", "Backdoor / Remote Access Trojan"),
    ("rat", "Backdoor / Remote Access Trojan"),
    ("Remote Access Trojan", "Backdoor / Remote Access Trojan"),
    ("Backdoor/RAT", "Backdoor / Remote Access Trojan"),
    ("Infostealer", "Spyware / Infostealer"),
    ("keylogger", "Spyware / Infostealer"),
    ("Stealer", "Spyware / Infostealer"),
    ("Botnet", "Bot / Botnet Client"),
    ("botnet client", "Bot / Botnet Client"),
    ("Obfuscated", "Packed / Obfuscated Malware"),
    ("packed malware", "Packed / Obfuscated Malware"),
    # echoes and wrapping
    ("Family: Virus", "Virus"),
    ("family: worm.", "Worm"),
    ("**Family:** Bot", "Bot / Botnet Client"),
    ("Malware Family: Downloader", "Downloader"),
    ("Trojan.", "Trojan"),
    ("  **Spyware**  ", "Spyware / Infostealer"),
    # explanations with one family
    ("The sample is a Dropper that writes a payload to disk.", "Dropper"),
    ("Answer: Backdoor", "Backdoor / Remote Access Trojan"),
    ("This looks like a Remote Access Trojan (RAT).", "Backdoor / Remote Access Trojan"),
    # multi-label
    ("Trojan or Worm", "invalid:multi-label"),
    ("Worm / Virus", "invalid:multi-label"),
    ("Ransomware, Spyware", "invalid:multi-label"),
    ("It is a Dropper and a Downloader", "invalid:multi-label"),
    ("Trojan (possibly a Worm)", "invalid:multi-label"),
    # empty
    ("", "invalid:empty"),
    ("   ", "invalid:empty"),
    ("\n\t", "invalid:empty"),
    # formatting only
    ("```\n```", "invalid:format-artifact-only"),
    ("**", "invalid:format-artifact-only"),
    ("``", "invalid:format-artifact-only"),
    ("...", "invalid:format-artifact-only"),
    ("Family:", "invalid:format-artifact-only"),
    # unmappable
    ("Adware", "invalid:unmappable"),
    ("Riskware", "invalid:unmappable"),
    ("I cannot determine the family.", "invalid:unmappable"),
    ("robotics toolkit", "invalid:unmappable"),
]


def test_c10_normalizer_corpus():
    with criterion(10, f"normalizer corpus ({len(NORMALIZER_CASES)} cases) at 100% agreement"):
        assert len(NORMALIZER_CASES) == 50
        mismatches = [(raw, want, normalize(raw).outcome()) for raw, want in NORMALIZER_CASES
                      if normalize(raw).outcome() != want]
        assert mismatches == []
