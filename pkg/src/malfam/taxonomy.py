"""Fixed label space: the ten malware families, their behavior groups,
the specificity ranking used for tie-breaks, and the synonym dictionary.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from malfam.errors import ConfigError


class FamilyLabel(enum.Enum):
    TROJAN = "Trojan"
    WORM = "Worm"
    VIRUS = "Virus"
    RANSOMWARE = "Ransomware"
    BACKDOOR = "Backdoor / Remote Access Trojan"
    DROPPER = "Dropper"
    DOWNLOADER = "Downloader"
    PACKED = "Packed / Obfuscated Malware"
    SPYWARE = "Spyware / Infostealer"
    BOT = "Bot / Botnet Client"

    @property
    def display(self) -> str:
        return self.value

    @classmethod
    def from_display(cls, text: str) -> "FamilyLabel":
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"not a canonical family name: {text!r}") from None

    def __str__(self) -> str:
        return self.value


FAMILIES: tuple[FamilyLabel, ...] = tuple(FamilyLabel)


class BehaviorGroup(enum.Enum):
    TROJAN_LIKE = "TROJAN_LIKE"
    INSTALLER = "INSTALLER"
    SELF_REPLICATING = "SELF_REPLICATING"
    RANSOMWARE = "RANSOMWARE"
    OBFUSCATED = "OBFUSCATED"

    def __str__(self) -> str:
        return self.value


GROUPS: tuple[BehaviorGroup, ...] = tuple(BehaviorGroup)

_GROUP_OF = MappingProxyType(
    {
        FamilyLabel.TROJAN: BehaviorGroup.TROJAN_LIKE,
        FamilyLabel.BACKDOOR: BehaviorGroup.TROJAN_LIKE,
        FamilyLabel.SPYWARE: BehaviorGroup.TROJAN_LIKE,
        FamilyLabel.BOT: BehaviorGroup.TROJAN_LIKE,
        FamilyLabel.DROPPER: BehaviorGroup.INSTALLER,
        FamilyLabel.DOWNLOADER: BehaviorGroup.INSTALLER,
        FamilyLabel.WORM: BehaviorGroup.SELF_REPLICATING,
        FamilyLabel.VIRUS: BehaviorGroup.SELF_REPLICATING,
        FamilyLabel.RANSOMWARE: BehaviorGroup.RANSOMWARE,
        FamilyLabel.PACKED: BehaviorGroup.OBFUSCATED,
    }
)


def behavior_group_of(family: FamilyLabel) -> BehaviorGroup:
    return _GROUP_OF[family]


def families_in_group(group: BehaviorGroup) -> tuple[FamilyLabel, ...]:
    return tuple(f for f in FAMILIES if _GROUP_OF[f] is group)


DEFAULT_RANKS: Mapping[FamilyLabel, int] = MappingProxyType(
    {
        FamilyLabel.RANSOMWARE: 1,
        FamilyLabel.BOT: 2,
        FamilyLabel.SPYWARE: 3,
        FamilyLabel.BACKDOOR: 4,
        FamilyLabel.DOWNLOADER: 5,
        FamilyLabel.DROPPER: 6,
        FamilyLabel.WORM: 7,
        FamilyLabel.VIRUS: 8,
        FamilyLabel.PACKED: 9,
        FamilyLabel.TROJAN: 10,
    }
)


@dataclass(frozen=True)
class SpecificityTable:
    """Strict total order over families; lower rank means more specific.

    Validated on construction: every family ranked, ranks distinct positive
    integers, Backdoor/RAT ahead of Trojan and Downloader ahead of Dropper.
    """

    ranks: Mapping[FamilyLabel, int] = field(default_factory=lambda: dict(DEFAULT_RANKS))

    def __post_init__(self):
        ranks = dict(self.ranks)
        missing = [f.display for f in FAMILIES if f not in ranks]
        if missing:
            raise ConfigError(f"specificity table missing families: {missing}")
        values = list(ranks.values())
        if any(not isinstance(r, int) or isinstance(r, bool) or r <= 0 for r in values):
            raise ConfigError("specificity ranks must be positive integers")
        if len(set(values)) != len(values):
            raise ConfigError("specificity ranks must be distinct")
        if not ranks[FamilyLabel.BACKDOOR] < ranks[FamilyLabel.TROJAN]:
            raise ConfigError("specificity table must rank Backdoor/RAT ahead of Trojan")
        if not ranks[FamilyLabel.DOWNLOADER] < ranks[FamilyLabel.DROPPER]:
            raise ConfigError("specificity table must rank Downloader ahead of Dropper")
        object.__setattr__(self, "ranks", MappingProxyType(ranks))

    def rank(self, family: FamilyLabel) -> int:
        return self.ranks[family]

    def most_specific(self, candidates: Iterable[FamilyLabel]) -> FamilyLabel:
        candidates = list(candidates)
        if not candidates:
            raise ValueError("most_specific() of an empty candidate set")
        return min(candidates, key=self.ranks.__getitem__)


DEFAULT_SPECIFICITY = SpecificityTable()


def specificity_rank(family: FamilyLabel, table: SpecificityTable = DEFAULT_SPECIFICITY) -> int:
    return table.rank(family)


_DEFAULT_ALIASES = {
    "rat": FamilyLabel.BACKDOOR,
    "backdoor": FamilyLabel.BACKDOOR,
    "remote access trojan": FamilyLabel.BACKDOOR,
    "backdoor / rat": FamilyLabel.BACKDOOR,
    "spyware": FamilyLabel.SPYWARE,
    "infostealer": FamilyLabel.SPYWARE,
    "info-stealer": FamilyLabel.SPYWARE,
    "stealer": FamilyLabel.SPYWARE,
    "keylogger": FamilyLabel.SPYWARE,
    "bot": FamilyLabel.BOT,
    "botnet": FamilyLabel.BOT,
    "botnet client": FamilyLabel.BOT,
    "packed": FamilyLabel.PACKED,
    "obfuscated": FamilyLabel.PACKED,
    "packed malware": FamilyLabel.PACKED,
    "obfuscated malware": FamilyLabel.PACKED,
    "packed / obfuscated": FamilyLabel.PACKED,
    "downloader": FamilyLabel.DOWNLOADER,
    "dropper": FamilyLabel.DROPPER,
}


@dataclass(frozen=True)
class SynonymTable:
    """Lowercase alias -> family. Canonical display strings always resolve
    to themselves, whatever else the table contains."""

    entries: Mapping[str, FamilyLabel] = field(default_factory=lambda: dict(_DEFAULT_ALIASES))

    def __post_init__(self):
        merged: dict[str, FamilyLabel] = {}
        for alias, family in dict(self.entries).items():
            if not isinstance(family, FamilyLabel):
                raise ConfigError(f"synonym {alias!r} must map to a FamilyLabel")
            key = " ".join(alias.casefold().split())
            if not key:
                raise ConfigError("empty synonym alias")
            if key in merged and merged[key] is not family:
                raise ConfigError(f"alias {alias!r} maps to two families")
            merged[key] = family
        for family in FAMILIES:
            key = family.display.casefold()
            if merged.get(key, family) is not family:
                raise ConfigError(f"canonical name {family.display!r} cannot be remapped")
            merged[key] = family
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(merged.items()))))

    def lookup(self, alias: str) -> FamilyLabel | None:
        return self.entries.get(" ".join(alias.casefold().split()))

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def scan_pattern(self) -> re.Pattern:
        """Alternation of all aliases, longest first, anchored at word edges."""
        alts = sorted(self.entries, key=lambda a: (-len(a), a))
        body = "|".join(re.escape(a).replace(r"\ ", r"\s+") for a in alts)
        return re.compile(rf"(?<!\w)(?:{body})(?!\w)")


DEFAULT_SYNONYMS = SynonymTable()


@dataclass(frozen=True)
class Taxonomy:
    synonyms: SynonymTable = DEFAULT_SYNONYMS
    specificity: SpecificityTable = DEFAULT_SPECIFICITY

    def digest(self) -> str:
        """Stable hash of the configured tables, recorded in run manifests."""
        payload = {
            "synonyms": {a: f.display for a, f in self.synonyms.entries.items()},
            "ranks": {f.display: self.specificity.rank(f) for f in FAMILIES},
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


DEFAULT_TAXONOMY = Taxonomy()


def _parse_family(name: str, where: str) -> FamilyLabel:
    try:
        return FamilyLabel(name)
    except ValueError:
        raise ConfigError(f"{where}: unknown family {name!r}") from None


def load_taxonomy(path: str | Path | None) -> Taxonomy:
    """Load a taxonomy override file (JSON).

    The file may carry ``synonyms`` (alias -> canonical display string),
    which extend the default dictionary, and ``specificity`` (display
    string -> rank), which replaces the default ranking wholesale.
    """
    if path is None:
        return DEFAULT_TAXONOMY
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read taxonomy file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("taxonomy file must contain a JSON object")

    aliases = dict(_DEFAULT_ALIASES)
    for alias, name in (data.get("synonyms") or {}).items():
        aliases[alias] = _parse_family(name, f"synonym {alias!r}")
    synonyms = SynonymTable(aliases)

    specificity = DEFAULT_SPECIFICITY
    if data.get("specificity"):
        ranks = {_parse_family(n, "specificity"): r for n, r in data["specificity"].items()}
        specificity = SpecificityTable(ranks)
    return Taxonomy(synonyms=synonyms, specificity=specificity)
