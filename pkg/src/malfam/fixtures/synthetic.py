"""Synthetic corpus and simulated judges for offline pipeline runs."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from malfam.corpus import GoldRecord, SampleRecord
from malfam.gateway import ResponseCache
from malfam.taxonomy import FAMILIES, FamilyLabel, behavior_group_of

# Gold-set family counts (200 samples; no Virus).
GOLD_COUNTS: Mapping[FamilyLabel, int] = {
    FamilyLabel.TROJAN: 82,
    FamilyLabel.BACKDOOR: 44,
    FamilyLabel.SPYWARE: 42,
    FamilyLabel.DOWNLOADER: 11,
    FamilyLabel.WORM: 6,
    FamilyLabel.BOT: 5,
    FamilyLabel.RANSOMWARE: 4,
    FamilyLabel.DROPPER: 4,
    FamilyLabel.PACKED: 2,
    FamilyLabel.VIRUS: 0,
}

_IMPORTS = {
    FamilyLabel.TROJAN: ["kernel32.CreateProcessA", "advapi32.RegSetValueExA", "kernel32.WriteFile"],
    FamilyLabel.BACKDOOR: ["ws2_32.connect", "ws2_32.recv", "kernel32.CreatePipe", "kernel32.CreateProcessA"],
    FamilyLabel.SPYWARE: ["user32.GetAsyncKeyState", "user32.GetForegroundWindow", "crypt32.CryptUnprotectData"],
    FamilyLabel.DOWNLOADER: ["urlmon.URLDownloadToFileA", "shell32.ShellExecuteA"],
    FamilyLabel.DROPPER: ["kernel32.FindResourceA", "kernel32.LoadResource", "kernel32.WinExec"],
    FamilyLabel.WORM: ["netapi32.NetShareEnum", "mpr.WNetAddConnection2A", "kernel32.CopyFileA"],
    FamilyLabel.VIRUS: ["kernel32.FindFirstFileA", "kernel32.MapViewOfFile"],
    FamilyLabel.BOT: ["ws2_32.gethostbyname", "wininet.InternetOpenUrlA", "kernel32.CreateThread"],
    FamilyLabel.RANSOMWARE: ["advapi32.CryptEncrypt", "kernel32.FindNextFileA", "kernel32.MoveFileExA"],
    FamilyLabel.PACKED: ["kernel32.VirtualAlloc", "kernel32.VirtualProtect", "kernel32.GetProcAddress"],
}

_STUB = """#include <windows.h>

/* {sample_id}: synthetic stub, {n_calls} call sites */
int WINAPI WinMain(HINSTANCE h, HINSTANCE p, LPSTR cmd, int show)
{{
{body}    return 0;
}}
"""


def make_corpus(seed: int = 0, counts: Mapping[FamilyLabel, int] = GOLD_COUNTS
                ) -> tuple[list[SampleRecord], list[GoldRecord]]:
    """Templated C stubs with a gold label per sample, shuffled under ``seed``."""
    labels = [fam for fam in FAMILIES for _ in range(counts.get(fam, 0))]
    rng = random.Random(f"corpus:{seed}")
    rng.shuffle(labels)
    samples, gold = [], []
    for i, fam in enumerate(labels, start=1):
        sid = f"syn-{i:04d}"
        imports = list(_IMPORTS[fam])
        rng.shuffle(imports)
        body = "".join(f"    /* {name} */\n" for name in imports)
        source = _STUB.format(sample_id=sid, n_calls=len(imports), body=body)
        samples.append(SampleRecord(sid, source, tuple(imports)))
        gold.append(GoldRecord(sid, fam))
    return samples, gold


_SYNONYMS = {
    FamilyLabel.BACKDOOR: ["RAT", "Backdoor", "Remote Access Trojan"],
    FamilyLabel.SPYWARE: ["Infostealer", "Spyware", "Keylogger", "Stealer"],
    FamilyLabel.BOT: ["Botnet", "Bot", "Botnet Client"],
    FamilyLabel.PACKED: ["Packed", "Obfuscated", "Packed Malware"],
    FamilyLabel.DOWNLOADER: ["downloader"],
    FamilyLabel.DROPPER: ["dropper"],
}


@dataclass(frozen=True)
class SyntheticJudgeProfile:
    """A simulated judge.

    ``confusion[true][out]`` is the probability of answering ``out`` for a
    sample whose gold family is ``true``; rows sum to one. The ``*_rate``
    fields are per-response probabilities of each formatting quirk.
    """

    model_id: str
    confusion: Mapping[FamilyLabel, Mapping[FamilyLabel, float]]
    seed: int = 0
    empty_rate: float = 0.0
    fence_rate: float = 0.0
    synonym_rate: float = 0.0
    explanation_rate: float = 0.0
    echo_rate: float = 0.0

    def __post_init__(self):
        for fam in FAMILIES:
            row = self.confusion.get(fam)
            if row is None or abs(sum(row.values()) - 1.0) > 1e-9 or any(p < 0 for p in row.values()):
                raise ValueError(f"profile {self.model_id}: confusion row for {fam} must be a distribution")

    @classmethod
    def with_accuracy(cls, model_id: str, accuracy: float | Mapping[FamilyLabel, float], seed: int = 0,
                      same_group_share: float = 0.5, **quirks) -> "SyntheticJudgeProfile":
        """Build a confusion matrix from per-class correctness.

        Errors go to the other members of the true family's behavior group
        with probability ``same_group_share`` (when there are any), the rest
        spread evenly over the remaining families. Trojan and Backdoor/RAT
        never absorb each other's errors, so nominal and merged-evaluation
        accuracy agree.
        """
        confusion = {}
        for true in FAMILIES:
            p = accuracy[true] if isinstance(accuracy, Mapping) else float(accuracy)
            partner = {FamilyLabel.TROJAN: FamilyLabel.BACKDOOR, FamilyLabel.BACKDOOR: FamilyLabel.TROJAN}.get(true)
            wrong = [f for f in FAMILIES if f is not true and f is not partner]
            near = [f for f in wrong if behavior_group_of(f) is behavior_group_of(true)]
            far = [f for f in wrong if f not in near]
            row = {f: 0.0 for f in FAMILIES}
            row[true] = p
            share = same_group_share if near else 0.0
            for f in near:
                row[f] += (1 - p) * share / len(near)
            for f in far:
                row[f] += (1 - p) * (1 - share) / len(far)
            confusion[true] = row
        return cls(model_id, confusion, seed, **quirks)


def _style(label: FamilyLabel, profile: SyntheticJudgeProfile, rng: random.Random) -> str:
    if rng.random() < profile.empty_rate:
        return ""
    text = label.display
    if label in _SYNONYMS and rng.random() < profile.synonym_rate:
        text = rng.choice(_SYNONYMS[label])
    if rng.random() < profile.explanation_rate:
        text = f"This program is best described as {text}, judging from its API usage."
    if rng.random() < profile.echo_rate:
        text = f"Family: {text}"
    if rng.random() < profile.fence_rate:
        text = f"```\n{text}\n```"
    return text


def simulate_response(profile: SyntheticJudgeProfile, sample_id: str, gold: FamilyLabel, prompt_id: str,
                      seed: int = 0) -> str:
    # str seeds hash via SHA-512, so this is stable across processes.
    rng = random.Random(f"{seed}:{profile.seed}:{profile.model_id}:{prompt_id}:{sample_id}")
    row = profile.confusion[gold]
    families = [f for f in FAMILIES if row[f] > 0]
    out = rng.choices(families, weights=[row[f] for f in families])[0]
    return _style(out, profile, rng)


def generate_fixture_cache(
    profiles: Sequence[SyntheticJudgeProfile],
    samples: Sequence[SampleRecord],
    gold: Sequence[GoldRecord],
    prompt_id: str,
    seed: int,
    cache: ResponseCache,
) -> ResponseCache:
    """Fill ``cache`` with one simulated response per (sample, judge) key."""
    if not profiles:
        raise ValueError("generate_fixture_cache needs at least one profile")
    truth = {g.sample_id: g.label for g in gold}
    for sample in samples:
        label = truth[sample.sample_id]
        for profile in profiles:
            text = simulate_response(profile, sample.sample_id, label, prompt_id, seed)
            cache.put(sample.sample_id, profile.model_id, prompt_id, text,
                      request={"adapter": "synthetic", "model": profile.model_id})
    return cache


DEFAULT_QUIRKS = dict(empty_rate=0.03, fence_rate=0.08, synonym_rate=0.4, explanation_rate=0.1, echo_rate=0.05)


def default_profiles() -> list[SyntheticJudgeProfile]:
    """Four judges with accuracies spread roughly like a strong/weak model mix."""
    spec = [("qwen", 0.72, 11), ("codellama", 0.45, 12), ("gpt-4.1", 0.74, 13), ("gpt-5.1", 0.70, 14)]
    return [SyntheticJudgeProfile.with_accuracy(m, acc, seed=s, **DEFAULT_QUIRKS) for m, acc, s in spec]
