"""Gold-set calibration of judge weights (linear normalization of a
per-model score)."""

from __future__ import annotations

import enum
import math
from typing import Mapping, Sequence

from malfam.corpus import GoldRecord
from malfam.ensemble import WeightVector
from malfam.errors import ConfigError
from malfam.metrics import evaluate, evaluation_class
from malfam.taxonomy import FamilyLabel


class CalibrationMetric(enum.Enum):
    ACCURACY = "accuracy"
    MACRO_F1 = "macro_f1"

    def __str__(self) -> str:
        return self.value


def per_model_accuracy(preds: Mapping[str, FamilyLabel | None], gold: Sequence[GoldRecord]) -> float:
    """Share of gold samples predicted correctly, Trojan and Backdoor/RAT
    counted as the same class. Missing or invalid predictions are wrong."""
    if not gold:
        raise ConfigError("gold set is empty")
    hits = 0
    for rec in gold:
        pred = preds.get(rec.sample_id)
        if pred is not None and evaluation_class(pred) == evaluation_class(rec.label):
            hits += 1
    return hits / len(gold)


def per_model_score(
    preds: Mapping[str, FamilyLabel | None],
    gold: Sequence[GoldRecord],
    metric: CalibrationMetric | str = CalibrationMetric.ACCURACY,
) -> float:
    metric = CalibrationMetric(metric)
    if metric is CalibrationMetric.ACCURACY:
        return per_model_accuracy(preds, gold)
    if not gold:
        raise ConfigError("gold set is empty")
    return evaluate(preds, gold, merge_equivalent=True).macro_f1


def calibrate_weights(scores: Mapping[str, float]) -> WeightVector:
    """w_i = score_i / sum_j score_j."""
    if not scores:
        raise ConfigError("no models to calibrate")
    bad = {m: s for m, s in scores.items() if not math.isfinite(s) or s < 0}
    if bad:
        raise ConfigError(f"calibration scores must be finite and nonnegative: {bad}")
    total = math.fsum(scores.values())
    if total <= 0:
        raise ConfigError("every model scored zero on the gold set; weights are undefined")
    return WeightVector({m: s / total for m, s in scores.items()})
