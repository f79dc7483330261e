"""Shipped offline fixture: a 200-sample synthetic corpus, its gold labels
and a replay cache of four simulated judges under prompt P0.

Regenerate with ``python -m malfam.fixtures <out_dir>``.
"""

from __future__ import annotations

import json
from pathlib import Path

from malfam.corpus import dump_gold, dump_samples
from malfam.fixtures.oracle import oracle_decide
from malfam.fixtures.synthetic import (
    GOLD_COUNTS,
    SyntheticJudgeProfile,
    default_profiles,
    generate_fixture_cache,
    make_corpus,
    simulate_response,
)
from malfam.gateway import ResponseCache

FIXTURE_DIR = Path(__file__).parent / "data"
FIXTURE_SEED = 0

__all__ = [
    "FIXTURE_DIR",
    "GOLD_COUNTS",
    "SyntheticJudgeProfile",
    "build_fixture",
    "default_profiles",
    "fixture_paths",
    "generate_fixture_cache",
    "make_corpus",
    "oracle_decide",
    "simulate_response",
]


def fixture_paths(root: str | Path = FIXTURE_DIR) -> dict[str, Path]:
    root = Path(root)
    return {
        "samples": root / "samples.jsonl",
        "gold": root / "gold.csv",
        "cache": root / "cache",
        "config": root / "config.json",
    }


def build_fixture(out_dir: str | Path, seed: int = FIXTURE_SEED, prompt_ids=("P0",)) -> dict[str, Path]:
    paths = fixture_paths(out_dir)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    samples, gold = make_corpus(seed)
    paths["samples"].write_text(dump_samples(samples), encoding="utf-8")
    paths["gold"].write_text(dump_gold(gold), encoding="utf-8")
    cache = ResponseCache(paths["cache"])
    profiles = default_profiles()
    for pid in prompt_ids:
        generate_fixture_cache(profiles, samples, gold, pid, seed, cache)
    config = {
        "samples": paths["samples"].name,
        "gold": paths["gold"].name,
        "cache": paths["cache"].name,
        "cache_mode": "replay",
        "judges": [{"model_id": p.model_id, "adapter": "synthetic"} for p in profiles],
        "prompt_id": prompt_ids[0],
        "ensemble_mode": "weighted_hierarchical",
        "calibration_metric": "accuracy",
        "denominator_policy": "valid_voters",
    }
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return paths
