"""Sample and gold-label ingestion.

Samples are JSON Lines, one object per line with ``id``, ``source`` and
``imports``. Gold labels are a UTF-8 CSV with header ``sample_id,label``
whose labels must be canonical names or known synonyms.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from malfam.errors import DataValidationError
from malfam.normalizer import normalize
from malfam.taxonomy import DEFAULT_SYNONYMS, FAMILIES, FamilyLabel, SynonymTable


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    source_code: str = ""
    api_imports: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "api_imports", tuple(self.api_imports))
        if not self.source_code and not self.api_imports:
            raise ValueError(f"sample {self.sample_id!r} has neither source code nor imports")

    def to_json(self) -> dict:
        return {"id": self.sample_id, "source": self.source_code, "imports": list(self.api_imports)}


@dataclass(frozen=True)
class GoldRecord:
    sample_id: str
    label: FamilyLabel


def _parse_sample(obj, lineno: int) -> SampleRecord:
    if not isinstance(obj, dict):
        raise DataValidationError(f"line {lineno}: expected a JSON object")
    sid = obj.get("id")
    if not isinstance(sid, str) or not sid:
        raise DataValidationError(f"line {lineno}: 'id' must be a non-empty string")
    source = obj.get("source", "")
    imports = obj.get("imports", [])
    if not isinstance(source, str):
        raise DataValidationError(f"line {lineno}: 'source' must be a string")
    if not isinstance(imports, list) or not all(isinstance(x, str) for x in imports):
        raise DataValidationError(f"line {lineno}: 'imports' must be a list of strings")
    try:
        return SampleRecord(sid, source, tuple(imports))
    except ValueError as exc:
        raise DataValidationError(f"line {lineno}: {exc}") from None


def load_samples(path: str | Path) -> list[SampleRecord]:
    """Read a JSON Lines sample file.

    Blank lines are skipped. Every problem found is reported in one
    :class:`DataValidationError`, with line numbers.
    """
    records: list[SampleRecord] = []
    first_seen: dict[str, int] = {}
    problems: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: malformed JSON ({exc.msg})")
                continue
            try:
                rec = _parse_sample(obj, lineno)
            except DataValidationError as exc:
                problems.append(str(exc))
                continue
            if rec.sample_id in first_seen:
                problems.append(
                    f"duplicate id {rec.sample_id!r} on lines {first_seen[rec.sample_id]} and {lineno}"
                )
                continue
            first_seen[rec.sample_id] = lineno
            records.append(rec)
    if problems:
        raise DataValidationError("; ".join(problems))
    return records


def dump_samples(samples: Iterable[SampleRecord]) -> str:
    return "".join(json.dumps(s.to_json(), ensure_ascii=False) + "\n" for s in samples)


def load_gold(path: str | Path, synonyms: SynonymTable = DEFAULT_SYNONYMS) -> list[GoldRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return parse_gold(text, synonyms)


def parse_gold(text: str, synonyms: SynonymTable = DEFAULT_SYNONYMS) -> list[GoldRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataValidationError("gold file is empty") from None
    if header[:2] != ["sample_id", "label"]:
        raise DataValidationError(f"gold header must be 'sample_id,label', got {','.join(header)!r}")

    records: list[GoldRecord] = []
    seen: dict[str, int] = {}
    for rowno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise DataValidationError(f"row {rowno}: expected sample_id,label")
        sid, raw_label = row[0].strip(), row[1]
        if not sid:
            raise DataValidationError(f"row {rowno}: empty sample_id")
        pred = normalize(raw_label, synonyms, strict=True)
        if pred.label is None:
            raise DataValidationError(f"row {rowno}: label {raw_label!r} is not in the taxonomy")
        if sid in seen:
            raise DataValidationError(f"row {rowno}: duplicate sample_id {sid!r} (first at row {seen[sid]})")
        seen[sid] = rowno
        records.append(GoldRecord(sid, pred.label))
    return records


def dump_gold(records: Iterable[GoldRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "label"])
    for r in records:
        writer.writerow([r.sample_id, r.label.display])
    return buf.getvalue()


def gold_distribution(records: Iterable[GoldRecord]) -> dict[FamilyLabel, int]:
    """Per-family counts, largest first; families absent from the gold set
    are listed last with a zero count."""
    counts = Counter(r.label for r in records)
    order = sorted(FAMILIES, key=lambda f: (-counts[f], FAMILIES.index(f)))
    return {f: counts[f] for f in order}
