"""Pipeline stages behind the CLI: predict, calibrate, ensemble, evaluate,
sweep and report. Each stage reads and writes files in an output directory
and records its provenance in ``manifest.json`` there.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import SimpleNamespace
from typing import Sequence

from malfam.calibration import CalibrationMetric, calibrate_weights, per_model_score
from malfam.corpus import GoldRecord, load_gold, load_samples
from malfam.ensemble import DenominatorPolicy, EnsembleMode, WeightVector, decide
from malfam.errors import CacheMissError, ConfigError, DataValidationError, TransportError
from malfam.gateway import CacheMode, JudgeConfig, Provider, ResponseCache, _atomic_write, batch_classify
from malfam.metrics import MetricsReport, dumps, evaluate, format_rows
from malfam.normalizer import normalize
from malfam.prompts import PROMPT_IDS, SWEEP_PROMPT_IDS, get_template
from malfam.taxonomy import FamilyLabel, Taxonomy, load_taxonomy

log = logging.getLogger(__name__)

PREDICTIONS = "predictions.jsonl"
WEIGHTS = "weights.json"
METRICS_JSON, METRICS_TXT = "metrics.json", "metrics.txt"
SWEEP_JSON, SWEEP_TXT = "sweep.json", "sweep.txt"
MANIFEST = "manifest.json"
MODE_ORDER = [m.value for m in EnsembleMode]


def decisions_name(mode: EnsembleMode | str) -> str:
    return f"decisions_{EnsembleMode(mode).value}.jsonl"


@dataclass
class RunConfig:
    judges: list[JudgeConfig] = field(default_factory=list)
    prompt_id: str = "P0"
    ensemble_mode: str = EnsembleMode.WEIGHTED_HIERARCHICAL.value
    calibration_metric: str = CalibrationMetric.ACCURACY.value
    denominator_policy: str = DenominatorPolicy.VALID_VOTERS.value
    cache_mode: str = CacheMode.REPLAY.value
    samples: str | None = None
    gold: str | None = None
    cache: str | None = None
    weights: str | None = None
    predictions: str | None = None
    decisions: list[str] = field(default_factory=list)
    out_dir: str = "run"
    taxonomy: str | None = None
    per_provider_limit: int = 4
    global_limit: int = 16
    holdout_fraction: float = 0.0
    split_seed: int = 0
    held_out: bool = False
    merge_equivalent: bool = True
    include_zero_support: bool = False
    sweep_prompts: list[str] = field(default_factory=lambda: list(SWEEP_PROMPT_IDS))

    def __post_init__(self):
        self.judges = [j if isinstance(j, JudgeConfig) else JudgeConfig.from_dict(j) for j in self.judges]
        ids = [j.model_id for j in self.judges]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"judge model ids must be unique: {ids}")
        for name, enum_cls in (("ensemble_mode", EnsembleMode), ("calibration_metric", CalibrationMetric),
                               ("denominator_policy", DenominatorPolicy), ("cache_mode", CacheMode)):
            try:
                setattr(self, name, enum_cls(getattr(self, name)).value)
            except ValueError:
                choices = ", ".join(e.value for e in enum_cls)
                raise ConfigError(f"{name} must be one of: {choices}") from None
        if self.prompt_id not in PROMPT_IDS:
            raise ConfigError(f"unknown prompt id {self.prompt_id!r}")
        bad = [p for p in self.sweep_prompts if p not in SWEEP_PROMPT_IDS]
        if bad:
            raise ConfigError(f"sweep prompts must be drawn from {', '.join(SWEEP_PROMPT_IDS)}; got {bad}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)")

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
            unknown = set(data) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
            base = Path(path).parent
            for key in ("samples", "gold", "cache", "weights", "predictions", "taxonomy"):
                if data.get(key):
                    data[key] = str(base / data[key])
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def semantic_hash(self, *keys: str) -> str:
        """Hash of the settings that shape outputs; file paths are excluded."""
        payload = {"judges": [asdict(j) for j in self.judges]} if "judges" in keys else {}
        payload.update({k: getattr(self, k) for k in keys if k != "judges"})
        return _sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))

    def taxonomy_obj(self) -> Taxonomy:
        return load_taxonomy(self.taxonomy)


# -------------------------------------------------------------------- helpers


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _file_hash(path: Path) -> str:
    return _sha256(Path(path).read_bytes())


def _require(path: str | Path | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"missing {what} path")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _write_jsonl(path: Path, rows) -> None:
    _atomic_write(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
    return rows


def _update_manifest(out: Path, command: str, entry: dict) -> None:
    path = out / MANIFEST
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    manifest[command] = entry
    _atomic_write(path, dumps(dict(sorted(manifest.items()))))


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ predictions


def prediction_rows(responses, taxonomy: Taxonomy) -> list[dict]:
    rows = []
    for r in responses:
        row = {"sample_id": r.sample_id, "model_id": r.model_id, "prompt_id": r.prompt_id,
               "raw_text": r.response_text, "label": None, "invalid_reason": None, "error": None}
        if r.ok:
            norm = normalize(r.response_text, taxonomy.synonyms)
            row["label"] = norm.label.display if norm.label else None
            row["invalid_reason"] = norm.reason.value if norm.reason else None
        else:
            row["error"] = r.error
        rows.append(row)
    return rows


def read_predictions(path: Path) -> tuple[list[str], list[str], dict[str, dict[str, FamilyLabel | None]]]:
    """Returns (sample order, model order, {model: {sample: label}})."""
    samples: dict[str, None] = {}
    models, table = [], {}
    for row in _read_jsonl(path):
        sid, mid = row["sample_id"], row["model_id"]
        samples.setdefault(sid)
        if mid not in table:
            models.append(mid)
            table[mid] = {}
        if sid in table[mid]:
            raise DataValidationError(f"{path}: two predictions for ({sid}, {mid})")
        table[mid][sid] = FamilyLabel(row["label"]) if row.get("label") else None
    return list(samples), models, table


def cmd_predict(cfg: RunConfig, providers: dict[str, Provider] | None = None) -> Path:
    if not cfg.judges:
        raise ConfigError("no judges configured")
    taxonomy = cfg.taxonomy_obj()
    samples = load_samples(_require(cfg.samples, "samples file"))
    cache = ResponseCache(cfg.cache) if cfg.cache else None
    template = get_template(cfg.prompt_id)
    responses = batch_classify(cfg.judges, samples, template, cache, cfg.cache_mode, providers=providers,
                               per_provider_limit=cfg.per_provider_limit, global_limit=cfg.global_limit)
    rows = prediction_rows(responses, taxonomy)
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = cfg.out / PREDICTIONS
    _write_jsonl(out, rows)

    failed = [r for r in responses if not r.ok]
    for r in failed[:10]:
        _warn(f"{r.sample_id}/{r.model_id}: {r.error}")
    if len(failed) > 10:
        _warn(f"... {len(failed) - 10} more failed entries")

    keys = [(r.sample_id, r.model_id, r.prompt_id) for r in responses if r.ok]
    _update_manifest(cfg.out, "predict", {
        "config_hash": cfg.semantic_hash("judges", "prompt_id", "cache_mode"),
        "taxonomy_hash": taxonomy.digest(),
        "cache_snapshot": cache.snapshot_id(keys) if cache is not None and cfg.cache_mode != "live" else None,
        "inputs": {"samples": _file_hash(Path(cfg.samples))},
        "outputs": {PREDICTIONS: _file_hash(out)},
        "rows": len(rows),
        "failed": len(failed),
    })
    if responses and len(failed) == len(responses):
        raise TransportError(f"every request failed ({len(failed)} entries)")
    return out


# ------------------------------------------------------------------ calibrate


def split_gold(gold: Sequence[GoldRecord], holdout_fraction: float, seed: int
               ) -> tuple[list[GoldRecord], list[GoldRecord]]:
    """Deterministic (calibration, held-out) partition of the gold set."""
    if holdout_fraction <= 0:
        return list(gold), []
    ids = sorted(g.sample_id for g in gold)
    random.Random(f"split:{seed}").shuffle(ids)
    n_hold = round(len(ids) * holdout_fraction)
    hold = set(ids[:n_hold])
    calib = [g for g in gold if g.sample_id not in hold]
    held = [g for g in gold if g.sample_id in hold]
    if not calib or not held:
        raise ConfigError(f"holdout fraction {holdout_fraction} leaves an empty calibration or evaluation split")
    return calib, held


def cmd_calibrate(cfg: RunConfig) -> Path:
    taxonomy = cfg.taxonomy_obj()
    pred_path = _require(cfg.predictions or cfg.out / PREDICTIONS, "predictions file")
    gold = load_gold(_require(cfg.gold, "gold file"), taxonomy.synonyms)
    _, models, table = read_predictions(pred_path)
    if not models:
        raise DataValidationError("predictions file is empty")
    calib, held = split_gold(gold, cfg.holdout_fraction, cfg.split_seed)
    overlap = {g.sample_id for g in calib} & {g.sample_id for g in held}
    if overlap:
        raise ConfigError(f"calibration and held-out splits overlap: {sorted(overlap)[:10]}")
    if not held:
        _warn("weights are calibrated on the full gold set; evaluating on it afterwards reuses the same labels")

    metric = CalibrationMetric(cfg.calibration_metric)
    scores = {m: per_model_score(table[m], calib, metric) for m in models}
    weights = calibrate_weights(scores)
    doc = {
        "metric": metric.value,
        "models": {m: {"metric_value": scores[m], "weight": weights[m]} for m in models},
        "calibration_ids": sorted(g.sample_id for g in calib),
        "holdout_ids": sorted(g.sample_id for g in held),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = cfg.out / WEIGHTS
    _atomic_write(out, dumps(doc))
    _update_manifest(cfg.out, "calibrate", {
        "config_hash": cfg.semantic_hash("calibration_metric", "holdout_fraction", "split_seed"),
        "taxonomy_hash": taxonomy.digest(),
        "inputs": {"predictions": _file_hash(pred_path), "gold": _file_hash(Path(cfg.gold))},
        "outputs": {WEIGHTS: _file_hash(out)},
    })
    return out


def load_weights(path: str | Path) -> tuple[WeightVector, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        weights = WeightVector({m: v["weight"] for m, v in doc["models"].items()})
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read weights file {path}: {exc}") from exc
    return weights, doc


# ------------------------------------------------------------------ ensemble


def run_ensemble(samples: Sequence[str], models: Sequence[str], table, weights: WeightVector | None,
                 mode: EnsembleMode, taxonomy: Taxonomy, policy: DenominatorPolicy) -> list[dict]:
    rows = []
    for sid in samples:
        preds = [(m, table[m].get(sid)) for m in models]
        decision = decide(preds, weights, mode, taxonomy.specificity, policy)
        rows.append({"sample_id": sid, **decision.to_dict()})
    return rows


def cmd_ensemble(cfg: RunConfig) -> Path:
    taxonomy = cfg.taxonomy_obj()
    mode = EnsembleMode(cfg.ensemble_mode)
    policy = DenominatorPolicy(cfg.denominator_policy)
    pred_path = _require(cfg.predictions or cfg.out / PREDICTIONS, "predictions file")
    samples, models, table = read_predictions(pred_path)

    weights, inputs = None, {"predictions": _file_hash(pred_path)}
    if mode is not EnsembleMode.UNIFORM:
        wpath = Path(cfg.weights) if cfg.weights else cfg.out / WEIGHTS
        if not wpath.exists():
            raise ConfigError(f"{mode.value} mode needs a weights file (run 'calibrate' first): {wpath}")
        weights, _ = load_weights(wpath)
        missing = [m for m in models if m not in weights]
        if missing:
            raise ConfigError(f"weights file has no entry for model(s): {missing}")
        inputs["weights"] = _file_hash(wpath)

    rows = run_ensemble(samples, models, table, weights, mode, taxonomy, policy)
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = cfg.out / decisions_name(mode)
    _write_jsonl(out, rows)
    unresolved = sum(r["label"] is None for r in rows)
    if unresolved:
        _warn(f"{unresolved} sample(s) UNRESOLVED (every judge output invalid)")
    _update_manifest(cfg.out, f"ensemble:{mode.value}", {
        "config_hash": cfg.semantic_hash("ensemble_mode", "denominator_policy"),
        "taxonomy_hash": taxonomy.digest(),
        "inputs": inputs,
        "outputs": {out.name: _file_hash(out)},
    })
    return out


# ------------------------------------------------------------------ evaluate


def _restrict(gold: list[GoldRecord], unit: str, labels: dict[str, FamilyLabel | None]) -> None:
    missing = sorted(g.sample_id for g in gold if g.sample_id not in labels)
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise DataValidationError(f"{unit}: {len(missing)} gold sample(s) have no prediction: {shown}")


def cmd_evaluate(cfg: RunConfig) -> Path:
    taxonomy = cfg.taxonomy_obj()
    gold = load_gold(_require(cfg.gold, "gold file"), taxonomy.synonyms)
    inputs = {"gold": _file_hash(Path(cfg.gold))}

    wpath = Path(cfg.weights) if cfg.weights else cfg.out / WEIGHTS
    calib_ids: set[str] = set()
    if wpath.exists():
        _, wdoc = load_weights(wpath)
        calib_ids = set(wdoc.get("calibration_ids", []))
    if cfg.held_out:
        if not calib_ids:
            raise ConfigError("--held-out needs a weights file recording its calibration ids")
        gold = [g for g in gold if g.sample_id not in calib_ids]
        if not gold:
            raise ConfigError("no gold samples remain outside the calibration split")

    units: list[tuple[str, str, dict]] = []
    pred_path = Path(cfg.predictions) if cfg.predictions else cfg.out / PREDICTIONS
    if pred_path.exists():
        _, models, table = read_predictions(pred_path)
        inputs["predictions"] = _file_hash(pred_path)
        units += [(m, "judge", table[m]) for m in models]

    if cfg.decisions:
        dec_paths = [Path(p) for p in cfg.decisions]
    else:
        dec_paths = [cfg.out / decisions_name(m) for m in MODE_ORDER if (cfg.out / decisions_name(m)).exists()]
    used_weights = False
    for path in dec_paths:
        rows = _read_jsonl(_require(path, "decisions file"))
        mode = rows[0]["mode"] if rows else path.stem
        used_weights |= mode != EnsembleMode.UNIFORM.value
        labels = {r["sample_id"]: FamilyLabel(r["label"]) if r["label"] else None for r in rows}
        extra = set(labels) - {g.sample_id for g in gold}
        if extra and not cfg.held_out:
            _warn(f"{path.name}: {len(extra)} decision(s) have no gold label and are not scored")
        units.append((f"ensemble:{mode}", "ensemble", labels))
        inputs[path.name] = _file_hash(path)
    if not units:
        raise ConfigError("nothing to evaluate: no predictions or decisions files found")

    if used_weights and calib_ids & {g.sample_id for g in gold}:
        _warn("evaluation set overlaps the gold samples used to calibrate weights")

    reports: list[tuple[str, str, MetricsReport]] = []
    for name, kind, labels in units:
        _restrict(gold, name, labels)
        reports.append((name, kind, evaluate(labels, gold, cfg.merge_equivalent, cfg.include_zero_support)))

    doc = {
        "merge_equivalent": cfg.merge_equivalent,
        "include_zero_support": cfg.include_zero_support,
        "n_gold": len(gold),
        "units": [{"name": n, "kind": k, **r.to_dict()} for n, k, r in reports],
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = cfg.out / METRICS_JSON
    _atomic_write(out, dumps(doc))
    table_txt = format_rows([((n,), r) for n, _, r in reports], labels=("Model",))
    _atomic_write(cfg.out / METRICS_TXT, table_txt)
    _update_manifest(cfg.out, "evaluate", {
        "config_hash": cfg.semantic_hash("merge_equivalent", "include_zero_support", "held_out"),
        "taxonomy_hash": taxonomy.digest(),
        "inputs": inputs,
        "outputs": {METRICS_JSON: _file_hash(out), METRICS_TXT: _file_hash(cfg.out / METRICS_TXT)},
    })
    return out


# ------------------------------------------------------------------ sweep


def cmd_sweep(cfg: RunConfig, providers: dict[str, Provider] | None = None) -> Path:
    """Per-prompt metrics for every judge plus the ensemble (``FinalLabel``)."""
    if not cfg.judges:
        raise ConfigError("no judges configured")
    taxonomy = cfg.taxonomy_obj()
    samples = load_samples(_require(cfg.samples, "samples file"))
    gold = load_gold(_require(cfg.gold, "gold file"), taxonomy.synonyms)
    cache = ResponseCache(cfg.cache) if cfg.cache else None
    mode = EnsembleMode(cfg.ensemble_mode)
    policy = DenominatorPolicy(cfg.denominator_policy)
    fixed_weights = load_weights(cfg.weights)[0] if cfg.weights else None

    if cfg.cache_mode == CacheMode.REPLAY.value:
        if cache is None:
            raise ConfigError("replay mode needs a cache directory")
        missing = [(s.sample_id, j.model_id, p) for p in cfg.sweep_prompts for s in samples for j in cfg.judges
                   if not cache.contains(s.sample_id, j.model_id, p)]
        if missing:
            raise CacheMissError(missing)

    sample_ids = [s.sample_id for s in samples]
    models = [j.model_id for j in cfg.judges]
    results = []
    leaked = False
    for pid in cfg.sweep_prompts:
        responses = batch_classify(cfg.judges, samples, get_template(pid), cache, cfg.cache_mode,
                                   providers=providers, per_provider_limit=cfg.per_provider_limit,
                                   global_limit=cfg.global_limit)
        table: dict[str, dict[str, FamilyLabel | None]] = {m: {} for m in models}
        for row in prediction_rows(responses, taxonomy):
            table[row["model_id"]][row["sample_id"]] = FamilyLabel(row["label"]) if row["label"] else None

        weights = fixed_weights
        if mode is not EnsembleMode.UNIFORM and weights is None:
            metric = CalibrationMetric(cfg.calibration_metric)
            weights = calibrate_weights({m: per_model_score(table[m], gold, metric) for m in models})
            leaked = True
        decisions = run_ensemble(sample_ids, models, table, weights, mode, taxonomy, policy)
        final = {d["sample_id"]: FamilyLabel(d["label"]) if d["label"] else None for d in decisions}

        for name, labels in [*((m, table[m]) for m in models), ("FinalLabel", final)]:
            report = evaluate(labels, gold, cfg.merge_equivalent, cfg.include_zero_support)
            results.append({"prompt_id": pid, "model": name, **report.summary()})
    if leaked:
        _warn("sweep weights were calibrated on the same gold set they are evaluated on")

    doc = {"ensemble_mode": mode.value, "rows": results}
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = cfg.out / SWEEP_JSON
    _atomic_write(out, dumps(doc))
    _atomic_write(cfg.out / SWEEP_TXT, format_sweep(results))
    _update_manifest(cfg.out, "sweep", {
        "config_hash": cfg.semantic_hash("judges", "sweep_prompts", "ensemble_mode", "calibration_metric",
                                         "denominator_policy", "cache_mode"),
        "taxonomy_hash": taxonomy.digest(),
        "cache_snapshot": cache.snapshot_id(
            [(s, m, p) for p in cfg.sweep_prompts for s in sample_ids for m in models]) if cache else None,
        "outputs": {SWEEP_JSON: _file_hash(out), SWEEP_TXT: _file_hash(cfg.out / SWEEP_TXT)},
    })
    return out


def format_sweep(rows: Sequence[dict]) -> str:
    return format_rows([((r["prompt_id"], r["model"]), SimpleNamespace(**r)) for r in rows],
                       labels=("Prompt", "Model"))


# ------------------------------------------------------------------ report


def cmd_report(cfg: RunConfig) -> str:
    parts = []
    metrics = cfg.out / METRICS_JSON
    if metrics.exists():
        doc = json.loads(metrics.read_text(encoding="utf-8"))
        parts.append(f"Evaluation over {doc['n_gold']} gold samples\n")
        parts.append(format_rows([((u["kind"], u["name"]), SimpleNamespace(**u)) for u in doc["units"]],
                                 labels=("Kind", "Unit")))
    for mode in MODE_ORDER:
        path = cfg.out / decisions_name(mode)
        if path.exists():
            counts: dict[str, int] = {}
            for row in _read_jsonl(path):
                counts[row["stage"]] = counts.get(row["stage"], 0) + 1
            summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
            parts.append(f"\n{mode} decision stages: {summary}\n")
    sweep = cfg.out / SWEEP_JSON
    if sweep.exists():
        doc = json.loads(sweep.read_text(encoding="utf-8"))
        parts.append(f"\nPrompt sensitivity ({doc['ensemble_mode']})\n")
        parts.append(format_sweep(doc["rows"]))
    if not parts:
        raise ConfigError(f"no metrics, decisions or sweep results in {cfg.out}")
    return "".join(parts)


__all__ = [
    "RunConfig", "cmd_predict", "cmd_calibrate", "cmd_ensemble", "cmd_evaluate", "cmd_sweep", "cmd_report",
    "read_predictions", "load_weights", "split_gold",
]
