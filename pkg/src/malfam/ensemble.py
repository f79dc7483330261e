"""Decision-level aggregation of judge predictions.

``decide_hierarchical`` is the three-stage procedure: a strict weighted
family majority, then behavior-group consensus, then a specificity
tie-break. ``decide_flat`` gives the uniform and weighted plurality votes
used as ablation baselines.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

from malfam.errors import ConfigError
from malfam.normalizer import NormalizedPrediction
from malfam.taxonomy import (
    DEFAULT_SPECIFICITY,
    FAMILIES,
    GROUPS,
    BehaviorGroup,
    FamilyLabel,
    SpecificityTable,
    families_in_group,
)

# Relative slack for score comparisons, so that ties that are exact in real
# arithmetic stay ties after floating-point normalization of the weights.
REL_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-9


class Stage(enum.Enum):
    FAMILY_MAJORITY = "FAMILY_MAJORITY"
    GROUP_CONSENSUS = "GROUP_CONSENSUS"
    SPECIFICITY_TIEBREAK = "SPECIFICITY_TIEBREAK"
    UNRESOLVED = "UNRESOLVED"

    def __str__(self) -> str:
        return self.value


class EnsembleMode(enum.Enum):
    UNIFORM = "uniform"
    WEIGHTED = "weighted"
    WEIGHTED_HIERARCHICAL = "weighted_hierarchical"

    def __str__(self) -> str:
        return self.value


class DenominatorPolicy(enum.Enum):
    """Whose weights form the majority threshold."""

    VALID_VOTERS = "valid_voters"
    ALL_MODELS = "all_models"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class WeightVector:
    """Per-model reliability weights; nonnegative and summing to one."""

    weights: Mapping[str, float]

    def __post_init__(self):
        weights = {str(k): float(v) for k, v in dict(self.weights).items()}
        if not weights:
            raise ConfigError("weight vector is empty")
        bad = {k: v for k, v in weights.items() if not math.isfinite(v) or v < 0}
        if bad:
            raise ConfigError(f"weights must be finite and nonnegative: {bad}")
        total = math.fsum(weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ConfigError(f"weights must sum to 1 (got {total!r})")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, model_ids: Iterable[str]) -> "WeightVector":
        ids = list(dict.fromkeys(model_ids))
        if not ids:
            raise ConfigError("uniform weights need at least one model")
        return cls({m: 1.0 / len(ids) for m in ids})

    @classmethod
    def from_raw(cls, raw: Mapping[str, float]) -> "WeightVector":
        """Normalize arbitrary nonnegative scores to sum to one."""
        total = math.fsum(raw.values())
        if not total > 0:
            raise ConfigError("cannot normalize weights that sum to zero")
        return cls({k: v / total for k, v in raw.items()})

    def __getitem__(self, model_id: str) -> float:
        try:
            return self.weights[model_id]
        except KeyError:
            raise ConfigError(f"no weight for model {model_id!r}") from None

    def __contains__(self, model_id: object) -> bool:
        return model_id in self.weights

    def __iter__(self):
        return iter(self.weights)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class EnsembleDecision:
    label: FamilyLabel | None
    stage: Stage
    family_scores: Mapping[FamilyLabel, float]
    group_scores: Mapping[BehaviorGroup, float]
    participating_models: tuple[str, ...]
    mode: EnsembleMode = EnsembleMode.WEIGHTED_HIERARCHICAL
    total_weight: float = 0.0
    trace: tuple[str, ...] = field(default=())

    @property
    def resolved(self) -> bool:
        return self.label is not None

    def to_dict(self) -> dict:
        return {
            "label": self.label.display if self.label else None,
            "stage": self.stage.value,
            "mode": self.mode.value,
            "total_weight": self.total_weight,
            "participating_models": list(self.participating_models),
            "family_scores": {f.display: self.family_scores[f] for f in FAMILIES},
            "group_scores": {g.value: self.group_scores[g] for g in GROUPS},
            "trace": list(self.trace),
        }


Vote = Union[FamilyLabel, NormalizedPrediction, None]


def _as_label(vote: Vote) -> FamilyLabel | None:
    if isinstance(vote, NormalizedPrediction):
        return vote.label
    if vote is None or isinstance(vote, FamilyLabel):
        return vote
    raise TypeError(f"unsupported prediction type: {type(vote).__name__}")


def _split_votes(preds: Sequence[tuple[str, Vote]]) -> tuple[list[tuple[str, FamilyLabel]], list[str]]:
    seen: set[str] = set()
    valid: list[tuple[str, FamilyLabel]] = []
    everyone: list[str] = []
    for model_id, vote in preds:
        if model_id in seen:
            raise ConfigError(f"model {model_id!r} has more than one prediction")
        seen.add(model_id)
        everyone.append(model_id)
        label = _as_label(vote)
        if label is not None:
            valid.append((model_id, label))
    return valid, everyone


def weighted_family_scores(
    preds: Sequence[tuple[str, FamilyLabel]], weights: WeightVector
) -> dict[FamilyLabel, float]:
    """S(f): total weight of the models voting for each family."""
    votes: dict[FamilyLabel, list[float]] = {f: [] for f in FAMILIES}
    seen: set[str] = set()
    for model_id, family in preds:
        if model_id in seen:
            raise ConfigError(f"model {model_id!r} has more than one prediction")
        seen.add(model_id)
        votes[family].append(weights[model_id])
    return {f: math.fsum(ws) for f, ws in votes.items()}


def group_scores(family_scores: Mapping[FamilyLabel, float]) -> dict[BehaviorGroup, float]:
    return {g: math.fsum(family_scores[f] for f in families_in_group(g)) for g in GROUPS}


def _unresolved(everyone, mode, fam, grp, threshold=0.0) -> EnsembleDecision:
    return EnsembleDecision(
        label=None,
        stage=Stage.UNRESOLVED,
        family_scores=fam,
        group_scores=grp,
        participating_models=(),
        mode=mode,
        total_weight=threshold,
        trace=(f"no valid predictions among {len(everyone)} model(s)",),
    )


def _top(scores: Mapping, candidates, tol: float) -> list:
    best = max(scores[c] for c in candidates)
    return [c for c in candidates if scores[c] >= best - tol]


def decide_hierarchical(
    preds: Sequence[tuple[str, Vote]],
    weights: WeightVector,
    spec: SpecificityTable = DEFAULT_SPECIFICITY,
    policy: DenominatorPolicy = DenominatorPolicy.VALID_VOTERS,
) -> EnsembleDecision:
    """Weighted hierarchical decision for one sample.

    ``preds`` pairs each model id with its prediction; invalid predictions
    (``None`` or an invalid :class:`NormalizedPrediction`) are dropped
    before scoring. The majority threshold is half the weight of the
    valid voters unless ``policy`` says to count every model.
    """
    mode = EnsembleMode.WEIGHTED_HIERARCHICAL
    valid, everyone = _split_votes(preds)
    fam = weighted_family_scores(valid, weights)
    grp = group_scores(fam)
    participating = tuple(m for m, _ in valid)
    if policy is DenominatorPolicy.ALL_MODELS:
        total = math.fsum(weights[m] for m in everyone)
    else:
        total = math.fsum(weights[m] for m in participating)
    if not valid:
        return _unresolved(everyone, mode, fam, grp, total)

    half = total / 2
    tol = REL_TOL * max(total, math.fsum(fam.values()), 1e-300)

    def decision(label, stage, *trace):
        return EnsembleDecision(label, stage, fam, grp, participating, mode, total, tuple(trace))

    # Stage 1: strict weighted family majority.
    leader = max(FAMILIES, key=lambda f: fam[f])
    if fam[leader] - half > tol:
        return decision(leader, Stage.FAMILY_MAJORITY, f"S({leader})={fam[leader]!r} > {half!r}")

    # Stage 2: behavior-group consensus.
    top_group = max(GROUPS, key=lambda g: grp[g])
    if grp[top_group] - half > tol:
        voted = {lbl for _, lbl in valid}
        members = [f for f in families_in_group(top_group) if f in voted]
        tied = _top(fam, members, tol)
        note = f"S({top_group})={grp[top_group]!r} > {half!r}"
        if len(tied) == 1:
            return decision(tied[0], Stage.GROUP_CONSENSUS, note)
        chosen = spec.most_specific(tied)
        return decision(
            chosen,
            Stage.SPECIFICITY_TIEBREAK,
            note,
            "within-group tie: " + ", ".join(f"{f}(R={spec.rank(f)})" for f in tied),
        )

    # Stage 3: global tie-break over the highest-scoring predicted families.
    voted = list(dict.fromkeys(lbl for _, lbl in valid))
    tied = _top(fam, voted, tol)
    chosen = spec.most_specific(tied)
    return decision(
        chosen,
        Stage.SPECIFICITY_TIEBREAK,
        f"no family or group above {half!r}",
        "global tie: " + ", ".join(f"{f}(R={spec.rank(f)})" for f in tied),
    )


def decide_flat(
    preds: Sequence[tuple[str, Vote]],
    weights: WeightVector | None = None,
    spec: SpecificityTable = DEFAULT_SPECIFICITY,
    mode: EnsembleMode | str = EnsembleMode.WEIGHTED,
) -> EnsembleDecision:
    """Plurality vote without the group stage.

    In uniform mode ``weights`` is ignored and each valid voter counts
    equally. Ties on the top score go to the most specific family.
    """
    mode = EnsembleMode(mode)
    if mode is EnsembleMode.WEIGHTED_HIERARCHICAL:
        raise ConfigError("decide_flat handles only uniform and weighted modes")
    valid, everyone = _split_votes(preds)
    participating = tuple(m for m, _ in valid)
    if mode is EnsembleMode.UNIFORM:
        if valid:
            weights = WeightVector.uniform(participating)
    elif weights is None:
        raise ConfigError("weighted mode needs a weight vector")
    if not valid:
        zeros = {f: 0.0 for f in FAMILIES}
        unknown = [m for m in everyone if mode is EnsembleMode.WEIGHTED and m not in weights]
        if unknown:
            raise ConfigError(f"no weight for model(s) {unknown}")
        return _unresolved(everyone, mode, zeros, group_scores(zeros))

    fam = weighted_family_scores(valid, weights)
    grp = group_scores(fam)
    total = math.fsum(weights[m] for m in participating)
    tol = REL_TOL * max(total, 1e-300)
    voted = list(dict.fromkeys(lbl for _, lbl in valid))
    tied = _top(fam, voted, tol)
    if len(tied) == 1:
        return EnsembleDecision(
            tied[0], Stage.FAMILY_MAJORITY, fam, grp, participating, mode, total,
            (f"plurality S({tied[0]})={fam[tied[0]]!r}",),
        )
    chosen = spec.most_specific(tied)
    return EnsembleDecision(
        chosen, Stage.SPECIFICITY_TIEBREAK, fam, grp, participating, mode, total,
        ("plurality tie: " + ", ".join(f"{f}(R={spec.rank(f)})" for f in tied),),
    )


def decide(
    preds: Sequence[tuple[str, Vote]],
    weights: WeightVector | None,
    mode: EnsembleMode | str,
    spec: SpecificityTable = DEFAULT_SPECIFICITY,
    policy: DenominatorPolicy = DenominatorPolicy.VALID_VOTERS,
) -> EnsembleDecision:
    mode = EnsembleMode(mode)
    if mode is EnsembleMode.WEIGHTED_HIERARCHICAL:
        if weights is None:
            raise ConfigError("weighted_hierarchical mode needs a weight vector")
        return decide_hierarchical(preds, weights, spec, policy)
    return decide_flat(preds, weights, spec, mode)
