"""Turn raw judge output into a canonical family or an explicit invalid verdict.

Cleaning runs strict-first: fences, backticks, emphasis markers and a
leading ``Family:`` echo are stripped, then the remainder is looked up
verbatim in the synonym table. Only when that fails is the full text
scanned for aliases; exactly one distinct family must be found.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from malfam.taxonomy import DEFAULT_SYNONYMS, FamilyLabel, SynonymTable


class InvalidReason(enum.Enum):
    EMPTY = "empty"
    UNMAPPABLE = "unmappable"
    MULTI_LABEL = "multi-label"
    FORMAT_ARTIFACT_ONLY = "format-artifact-only"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class NormalizedPrediction:
    raw_text: str
    label: FamilyLabel | None = None
    reason: InvalidReason | None = None

    def __post_init__(self):
        if (self.label is None) == (self.reason is None):
            raise ValueError("exactly one of label / reason must be set")

    @property
    def is_valid(self) -> bool:
        return self.label is not None

    @classmethod
    def valid(cls, label: FamilyLabel, raw_text: str | None = None) -> "NormalizedPrediction":
        return cls(raw_text=label.display if raw_text is None else raw_text, label=label)

    @classmethod
    def invalid(cls, reason: InvalidReason, raw_text: str = "") -> "NormalizedPrediction":
        return cls(raw_text=raw_text, reason=reason)

    def outcome(self) -> str:
        """Label display string, or ``invalid:<reason>``."""
        return self.label.display if self.label is not None else f"invalid:{self.reason.value}"


_FENCE_LINE = re.compile(r"^[ \t]*(```|~~~).*$", re.MULTILINE)
_ECHO = re.compile(r"^\s*(?:malware\s+)?family\s*:\s*")
_EDGE_JUNK = " \t\r\n*_#>\"'“”‘’`"
_TRAILING = ".,;:!?)" + _EDGE_JUNK
_SLASH = re.compile(r"\s*/\s*")


def _fold(text: str) -> str:
    # upper() first so that dotless-i, long-s and similar fold the same way
    # regardless of the input's case.
    return text.upper().casefold()


def clean(raw: str) -> str:
    """Apply the artifact-stripping steps and return folded, trimmed text."""
    text = _FENCE_LINE.sub("", raw).replace("`", "")
    text = _fold(text)
    text = text.strip(_EDGE_JUNK)
    text = _ECHO.sub("", text)
    text = text.strip(_EDGE_JUNK).rstrip(_TRAILING).lstrip("(" + _EDGE_JUNK)
    text = " ".join(text.split())
    return _SLASH.sub(" / ", text)


def scan_aliases(text: str, synonyms: SynonymTable = DEFAULT_SYNONYMS) -> list[FamilyLabel]:
    """Distinct families whose aliases occur in ``text``, in order of first hit."""
    found: list[FamilyLabel] = []
    for match in synonyms.scan_pattern.finditer(text):
        family = synonyms.lookup(match.group(0))
        if family is not None and family not in found:
            found.append(family)
    return found


def normalize(
    raw: str | None,
    synonyms: SynonymTable = DEFAULT_SYNONYMS,
    *,
    strict: bool = False,
) -> NormalizedPrediction:
    """Map one raw response to a :class:`NormalizedPrediction`.

    With ``strict=True`` only an exact canonical or synonym match is
    accepted; the free-text alias scan is skipped. Gold labels are parsed
    this way.
    """
    raw = "" if raw is None else raw
    if not raw.strip():
        return NormalizedPrediction.invalid(InvalidReason.EMPTY, raw)

    text = clean(raw)
    if not text:
        return NormalizedPrediction.invalid(InvalidReason.FORMAT_ARTIFACT_ONLY, raw)

    family = synonyms.lookup(text)
    if family is not None:
        return NormalizedPrediction(raw_text=raw, label=family)
    if strict:
        return NormalizedPrediction.invalid(InvalidReason.UNMAPPABLE, raw)

    found = scan_aliases(text, synonyms)
    if len(found) == 1:
        return NormalizedPrediction(raw_text=raw, label=found[0])
    if found:
        return NormalizedPrediction.invalid(InvalidReason.MULTI_LABEL, raw)
    return NormalizedPrediction.invalid(InvalidReason.UNMAPPABLE, raw)
