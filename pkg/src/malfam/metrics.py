"""Evaluation metrics with the Trojan / Backdoor evaluation equivalence.

The confusion matrix is laid out ``[predicted, gold]``; its final row
collects invalid or unresolved predictions, which are always scored as
wrong.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from malfam.corpus import GoldRecord
from malfam.errors import DataValidationError
from malfam.taxonomy import FAMILIES, FamilyLabel

MERGED_CLASS = "Trojan ≡ Backdoor / Remote Access Trojan"
INVALID_ROW = "(invalid)"


def evaluation_class(label: FamilyLabel, merge_equivalent: bool = True) -> str:
    if merge_equivalent and label in (FamilyLabel.TROJAN, FamilyLabel.BACKDOOR):
        return MERGED_CLASS
    return label.display


def evaluation_classes(merge_equivalent: bool = True) -> tuple[str, ...]:
    return tuple(dict.fromkeys(evaluation_class(f, merge_equivalent) for f in FAMILIES))


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # shape (len(classes) + 1, len(classes)), rows = predicted

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def gold_support(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "layout": "rows=predicted (last row invalid), columns=gold",
            "classes": list(self.classes),
            "rows": list(self.classes) + [INVALID_ROW],
            "counts": self.counts.astype(int).tolist(),
        }


def confusion_matrix(
    preds: Mapping[str, FamilyLabel | None],
    gold: Sequence[GoldRecord],
    merge_equivalent: bool = True,
) -> ConfusionMatrix:
    """Tally predictions against gold. Gold samples without a prediction
    land in the invalid row."""
    classes = evaluation_classes(merge_equivalent)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes) + 1, len(classes)), dtype=np.int64)
    for rec in gold:
        col = index[evaluation_class(rec.label, merge_equivalent)]
        pred = preds.get(rec.sample_id)
        row = len(classes) if pred is None else index[evaluation_class(pred, merge_equivalent)]
        counts[row, col] += 1
    return ConfusionMatrix(classes, counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: Mapping[str, ClassMetrics]
    confusion: ConfusionMatrix
    n_samples: int
    n_invalid: int = 0
    averaged_classes: tuple[str, ...] = field(default=())

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "n_samples": self.n_samples,
            "n_invalid": self.n_invalid,
            "averaged_classes": list(self.averaged_classes),
            "per_class": {
                c: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for c, m in self.per_class.items()
            },
            "confusion": self.confusion.to_dict(),
        }


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den else 0.0


def macro_metrics(confusion: ConfusionMatrix, include_zero_support: bool = False) -> MetricsReport:
    """Accuracy plus macro-averaged precision, recall and F1.

    Macro averages cover classes with gold support unless
    ``include_zero_support`` is set, in which case every evaluation class
    counts (empty classes contribute zeros).
    """
    counts = confusion.counts
    n = int(counts.sum())
    if n == 0:
        raise DataValidationError("cannot compute metrics over zero samples")
    k = len(confusion.classes)
    tp = np.diag(counts[:k, :k])
    predicted = counts[:k, :].sum(axis=1)
    support = counts.sum(axis=0)

    per_class: dict[str, ClassMetrics] = {}
    for i, name in enumerate(confusion.classes):
        p = _ratio(tp[i], predicted[i])
        r = _ratio(tp[i], support[i])
        f1 = _ratio(2 * p * r, p + r)
        per_class[name] = ClassMetrics(p, r, f1, int(support[i]))

    averaged = tuple(c for c in confusion.classes if include_zero_support or per_class[c].support > 0)

    def mean(attr: str) -> float:
        return float(np.mean([getattr(per_class[c], attr) for c in averaged]))

    return MetricsReport(
        accuracy=_ratio(tp.sum(), n),
        macro_precision=mean("precision"),
        macro_recall=mean("recall"),
        macro_f1=mean("f1"),
        per_class=per_class,
        confusion=confusion,
        n_samples=n,
        n_invalid=int(counts[k, :].sum()),
        averaged_classes=averaged,
    )


def evaluate(
    preds: Mapping[str, FamilyLabel | None],
    gold: Sequence[GoldRecord],
    merge_equivalent: bool = True,
    include_zero_support: bool = False,
) -> MetricsReport:
    if not gold:
        raise DataValidationError("gold set is empty")
    return macro_metrics(confusion_matrix(preds, gold, merge_equivalent), include_zero_support)


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two aligned label sequences."""
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ValueError("cohen_kappa needs at least one labeled item")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


HEADER = ("Accuracy", "Macro-P", "Macro-R", "Macro-F1")


def format_rows(rows: Sequence[tuple[Sequence[str], MetricsReport]], labels: Sequence[str] = ("Model",)) -> str:
    """Aligned text table, one row per evaluated unit, three decimals."""
    header = [*labels, *HEADER]
    body = [
        [*key, *(f"{v:.3f}" for v in (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1))]
        for key, r in rows
    ]
    widths = [max(len(str(row[i])) for row in [header, *body]) for i in range(len(header))]
    lines = []
    for j, row in enumerate([header, *body]):
        cells = [str(c).ljust(w) if i < len(labels) else str(c).rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def dumps(obj) -> str:
    """Canonical JSON used for every machine-readable output file."""
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"
