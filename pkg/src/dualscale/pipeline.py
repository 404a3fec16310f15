"""Stage-by-stage pipeline over a single YAML config.

Every stage reads its inputs from the config paths or from artifacts an
earlier stage left in the output directory, and writes its own artifacts
there. Artifacts are stamped with the config hash (a ``# config_hash:``
first line in CSVs, a ``config_hash`` key in JSON); a stage refuses an
artifact stamped by a different config unless ``force`` is set.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

import dualscale
from dualscale import btrank, comparisons, corpus_io, pair_design, pointwise_eval, prediction_stats, rank_eval
from dualscale.errors import DualscaleError, ValidationError

log = logging.getLogger(__name__)

STAGES = ("aggregate", "ensemble", "pointwise-eval", "sample-pairs", "win-matrix", "fit-bt", "rank-eval")

HUMAN_MATRICES = {"human_agg": "agg", "human_left": "left", "human_right": "right"}


@dataclass
class PipelineConfig:
    predictions: str | None = None
    pointwise: str | None = None
    pairwise: str | None = None
    arguments: str | None = None
    output_dir: str = "out"
    ensembles: dict = field(default_factory=lambda: {
        "E1": {"members": "all"},
        "E3": {"select": "high_confidence"},
    })
    reference_ensemble: str = "E3"
    bucket_counts: dict = field(default_factory=lambda: {"H_pol": 400, "L": 200, "H_apol": 400})
    binarize_threshold: float = 0.5
    intra_per_bin: int = 44
    inter_per_binpair: int = 22
    reg: float = btrank.DEFAULT_REG
    tol: float = btrank.DEFAULT_TOL
    max_iter: int = btrank.DEFAULT_MAX_ITER
    margin: float = 0.25
    tie_mode: str = "loss"
    seed: int = 0

    PATH_KEYS = ("predictions", "pointwise", "pairwise", "arguments", "output_dir")

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> "PipelineConfig":
        data: dict = {}
        base = None
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ValidationError(f"config file not found: {path}")
            loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            if not isinstance(loaded, dict):
                raise ValidationError("config must be a mapping")
            data.update(loaded)
            base = path.parent
        for k, v in (overrides or {}).items():
            if v is not None:
                data[k] = v
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        if base is not None:
            # relative paths in a config file are relative to that file
            for key in cls.PATH_KEYS:
                value = getattr(cfg, key)
                if value is not None and (overrides or {}).get(key) is None and not Path(value).is_absolute():
                    setattr(cfg, key, str(base / value))
        cfg.validate()
        return cfg

    def validate(self):
        if self.reference_ensemble not in self.ensembles:
            raise ValidationError(f"reference ensemble {self.reference_ensemble!r} is not defined")
        if self.intra_per_bin < 0 or self.inter_per_binpair < 0:
            raise ValidationError("pair quotas must be >= 0")
        if any(int(v) < 0 for v in self.bucket_counts.values()):
            raise ValidationError("bucket counts must be >= 0")
        for key in self.bucket_counts:
            pointwise_eval.ConfidenceBucket(key)
        if not 0 < self.margin <= 0.5:
            raise ValidationError("margin must lie in (0, 0.5]")
        if self.reg < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("invalid BT settings")
        if self.tie_mode not in ("loss", "random"):
            raise ValidationError(f"unknown tie_mode {self.tie_mode!r}")
        if not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")

    def analysis_settings(self) -> dict:
        """Everything except file locations; this is what the config hash covers."""
        return {k: v for k, v in asdict(self).items() if k not in self.PATH_KEYS}

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.analysis_settings(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def bt(self) -> dict:
        return {"reg": self.reg, "tol": self.tol, "max_iter": self.max_iter}

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


# -- artifact I/O ---------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def csv_text(rows, columns, config_hash: str, seed: int | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash: {config_hash}\n")
    if seed is not None:
        buf.write(f"# seed: {seed}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return buf.getvalue()


def json_text(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


class Workspace:
    """Output directory bound to one config; writes and hash-checks artifacts."""

    def __init__(self, cfg: PipelineConfig, force: bool = False):
        self.cfg = cfg
        self.force = force
        self.root = cfg.out
        self.written: list[str] = []

    @property
    def hash(self) -> str:
        return self.cfg.config_hash

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str):
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        if name not in self.written:
            self.written.append(name)
        log.info("wrote %s", p)

    def write_csv(self, name, rows, columns):
        self.write_text(name, csv_text(rows, columns, self.hash, self.cfg.seed))

    def write_json(self, name, payload: dict):
        self.write_text(name, json_text({"config_hash": self.hash, **payload}))

    def _check(self, name: str, stamp: str | None):
        if stamp != self.hash and not self.force:
            raise ValidationError(f"artifact {name} was produced by a different config "
                                  f"(hash {stamp!r}); rerun the producing stage or pass --force")

    def read_text(self, name: str) -> str:
        p = self.path(name)
        if not p.exists():
            raise ValidationError(f"missing artifact {p}; run the producing stage first")
        text = p.read_text(encoding="utf-8")
        first = text.split("\n", 1)[0]
        stamp = first.split(":", 1)[1].strip() if first.startswith("# config_hash:") else None
        self._check(name, stamp)
        return text

    def read_csv(self, name: str) -> list[dict]:
        text = self.read_text(name)
        lines = [line for line in text.splitlines() if not line.startswith("#")]
        return list(csv.DictReader(lines))

    def read_json(self, name: str) -> dict:
        p = self.path(name)
        if not p.exists():
            raise ValidationError(f"missing artifact {p}; run the producing stage first")
        data = json.loads(p.read_text(encoding="utf-8"))
        self._check(name, data.get("config_hash"))
        return data


# -- inputs ---------------------------------------------------------------

def _require(cfg: PipelineConfig, key: str) -> str:
    value = getattr(cfg, key)
    if not value:
        raise ValidationError(f"config does not name a {key} input")
    if not Path(value).exists():
        raise ValidationError(f"{key} file not found: {value}")
    return value


def _predictions(cfg):
    return corpus_io.load_predictions(_require(cfg, "predictions"))


def _ensemble_specs(ws: Workspace) -> list[prediction_stats.EnsembleSpec]:
    data = ws.read_json("ensembles.json")
    return [prediction_stats.EnsembleSpec(e, tuple(m)) for e, m in sorted(data["members"].items())]


def _all_summaries(ws: Workspace) -> dict[str, list[prediction_stats.PredictionSummary]]:
    rows = ws.read_csv("summaries.csv") + ws.read_csv("ensemble_summaries.csv")
    grouped: dict[str, list] = {}
    for s in prediction_stats.summaries_from_rows(rows):
        grouped.setdefault(s.scorer_id, []).append(s)
    return dict(sorted(grouped.items()))


# -- stages ---------------------------------------------------------------

def stage_aggregate(ws: Workspace) -> None:
    records = _predictions(ws.cfg)
    if ws.cfg.arguments:
        known = {a.argument_id for a in corpus_io.load_arguments(_require(ws.cfg, "arguments"))}
        unknown = sorted({r.argument_id for r in records} - known)
        if unknown:
            raise ValidationError(f"predictions reference arguments missing from {ws.cfg.arguments}: {unknown[:5]}")
    summaries = prediction_stats.summarize_all(records)
    ws.write_csv("summaries.csv", prediction_stats.summaries_to_rows(summaries), prediction_stats.SUMMARY_COLUMNS)


def stage_ensemble(ws: Workspace) -> None:
    cfg = ws.cfg
    records = _predictions(cfg)
    specs = prediction_stats.resolve_ensembles(cfg.ensembles, records)
    summaries = []
    for spec in specs:
        summaries.extend(prediction_stats.pool_ensemble(spec, records))
    ws.write_json("ensembles.json", {
        "members": {s.ensemble_id: list(s.member_model_ids) for s in specs},
        "definitions": cfg.ensembles,
    })
    ws.write_csv("ensemble_summaries.csv", prediction_stats.summaries_to_rows(summaries),
                 prediction_stats.SUMMARY_COLUMNS)


def stage_pointwise_eval(ws: Workspace) -> None:
    cfg = ws.cfg
    summaries = _all_summaries(ws)
    reference = summaries.get(cfg.reference_ensemble)
    if reference is None:
        raise ValidationError(f"no summaries for reference ensemble {cfg.reference_ensemble!r}")
    annotations = corpus_io.load_annotations(_require(cfg, "pointwise"), "pointwise")

    sample = pointwise_eval.sample_dataset(reference, cfg.bucket_counts, cfg.seed)
    ws.write_csv("pointwise_sample.csv",
                 [{"argument_id": a, "bucket": b.value} for a, b in sample.members.items()],
                 ("argument_id", "bucket"))

    annotated = {a.argument_id for a in annotations}
    dataset = pointwise_eval.PointwiseDataset.from_summaries(reference, restrict_to=annotated)
    ensemble_ids = {s.ensemble_id for s in _ensemble_specs(ws)}
    model_ids = [s for s in summaries if s not in ensemble_ids]
    result = pointwise_eval.evaluate_pointwise(summaries, annotations, dataset, cfg.binarize_threshold,
                                               inter_model_ids=model_ids)
    ws.write_csv("pointwise_metrics.csv", result["rows"], pointwise_eval.METRIC_COLUMNS)
    ws.write_json("pointwise_agreement.json", {
        "human_alpha_nominal": result["human_alpha"],
        "inter_model_alpha_nominal": result["inter_model_alpha"],
        "n_annotated": result["n_annotated"],
        "n_unanimous": result["n_unanimous"],
        "partition_sizes": {p: len(dataset.partition(p)) for p in pointwise_eval.PARTITIONS},
        "bucket_sizes": {b.value: len(dataset.bucket(b)) for b in pointwise_eval.ConfidenceBucket},
        "threshold": cfg.binarize_threshold,
    })


def _pair_items(cfg) -> tuple[list[str], list]:
    annotations = corpus_io.load_annotations(_require(cfg, "pairwise"), "pairwise")
    items = sorted({x for a in annotations for x in (a.arg_i, a.arg_j)})
    return items, annotations


def stage_sample_pairs(ws: Workspace) -> None:
    cfg = ws.cfg
    summaries = _all_summaries(ws)
    reference = {s.argument_id: s for s in summaries[cfg.reference_ensemble]}
    items, annotations = _pair_items(cfg)
    missing = [i for i in items if i not in reference or reference[i].mean_score is None]
    if missing:
        raise ValidationError(f"pairwise items without a reference mean score: {missing[:5]}")
    binning = pair_design.bin_scores({i: reference[i].mean_score for i in items})
    design = pair_design.sample_pairs(binning, cfg.intra_per_bin, cfg.inter_per_binpair, cfg.seed)
    annotated = pair_design.PairSet(tuple(comparisons.annotated_pairs(annotations)))
    ws.write_json("binning.json", {
        "reference_ensemble": cfg.reference_ensemble,
        "occupied_deciles": list(binning.occupied_deciles),
        "assignment": dict(binning.assignment),
    })
    ws.write_csv("pairs.csv",
                 [{"arg_i": a, "arg_j": b, "stratum": t} for (a, b), t in zip(design.pairs, design.strata)],
                 ("arg_i", "arg_j", "stratum"))
    ws.write_json("pair_diagnostics.json", {
        "seed": cfg.seed,
        "quotas": {"intra_per_bin": cfg.intra_per_bin, "inter_per_binpair": cfg.inter_per_binpair},
        "sampled_design": pair_design.design_diagnostics(design, binning),
        "annotated_pairs": pair_design.design_diagnostics(annotated, binning),
    })


def _binning(ws: Workspace) -> pair_design.PositionBinning:
    data = ws.read_json("binning.json")
    return pair_design.PositionBinning(tuple(data["occupied_deciles"]), data["assignment"])


def stage_win_matrix(ws: Workspace) -> None:
    cfg = ws.cfg
    records = _predictions(cfg)
    binning = _binning(ws)
    items = binning.items
    _, annotations = _pair_items(cfg)
    # wins depend only on bin order, so raw deciles stand in for relabelled bins
    scorers = {m: [m] for m in prediction_stats.model_ids(records)}
    scorers.update({s.ensemble_id: list(s.member_model_ids) for s in _ensemble_specs(ws)})
    matrices = {}
    skipped = {}
    for name in sorted(scorers):
        reps = comparisons.binned_repetitions(records, scorers[name], pair_design.decile_of, items)
        try:
            matrices[name] = comparisons.model_win_matrix(reps, items)
        except ValidationError as exc:
            log.warning("scorer %s skipped: %s", name, exc)
            skipped[name] = str(exc)
    human = comparisons.human_win_matrices(annotations, items)
    for fname, key in HUMAN_MATRICES.items():
        ws.write_text(f"matrices/{fname}.csv", f"# config_hash: {ws.hash}\n" + comparisons.matrix_to_csv(human[key]))
    for name, Wm in matrices.items():
        ws.write_text(f"matrices/{_safe_name(name)}.csv", f"# config_hash: {ws.hash}\n" + comparisons.matrix_to_csv(Wm))

    pairs = comparisons.annotated_pairs(annotations)
    if cfg.reference_ensemble not in matrices:
        raise ValidationError(f"reference ensemble {cfg.reference_ensemble!r} has no win matrix")
    ref = matrices[cfg.reference_ensemble]
    conf = comparisons.confidence_partition(comparisons.normalized(ref, pairs),
                                            comparisons.normalized(human["agg"], pairs), pairs, cfg.margin)
    pair_rows = []
    for label, Wm in (("human_agg", human["agg"]), (cfg.reference_ensemble, ref)):
        for row in comparisons.pair_rows(Wm, pairs, cfg.margin):
            pair_rows.append({"matrix": label, **row})
    ws.write_csv("win_pairs.csv", pair_rows, ("matrix", *comparisons.PAIR_COLUMNS))
    ws.write_csv("pair_confidence.csv",
                 [{"arg_i": a, "arg_j": b, "model_confident": m, "human_confident": h,
                   "subset": comparisons.subset_name((m, h))} for (a, b), (m, h) in conf.labels.items()],
                 ("arg_i", "arg_j", "model_confident", "human_confident", "subset"))
    ws.write_json("matrices/index.json", {
        "scorers": {name: f"{_safe_name(name)}.csv" for name in matrices},
        "human": {key: f"{fname}.csv" for fname, key in HUMAN_MATRICES.items()},
        "skipped": skipped,
        "reference_ensemble": cfg.reference_ensemble,
        "margin": cfg.margin,
        "subset_sizes": {comparisons.subset_name(k): len(v) for k, v in conf.subsets.items()},
    })


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _load_matrices(ws: Workspace):
    index = ws.read_json("matrices/index.json")
    scorers = {name: comparisons.matrix_from_csv(ws.read_text(f"matrices/{f}"))
               for name, f in sorted(index["scorers"].items())}
    human = {key: comparisons.matrix_from_csv(ws.read_text(f"matrices/{f}")) for key, f in index["human"].items()}
    return scorers, human


def stage_fit_bt(ws: Workspace) -> None:
    cfg = ws.cfg
    scorers, human = _load_matrices(ws)
    scales = {}
    for fname, key in HUMAN_MATRICES.items():
        scales[fname] = btrank.fit_bt_ilsr(human[key], **cfg.bt).as_dict()
    for name, Wm in scorers.items():
        scales[name] = btrank.fit_bt_ilsr(Wm, **cfg.bt).as_dict()
    ws.write_json("scales.json", {"bt": cfg.bt, "scales": scales})
    agg = btrank.LatentScale.from_dict(scales["human_agg"])
    ws.write_text("probabilities_human_agg.csv",
                  f"# config_hash: {ws.hash}\n" + comparisons.square_to_csv(agg.ids, btrank.probability_matrix(agg)))


def _load_confidence(ws: Workspace, margin: float) -> comparisons.PairConfidence:
    labels = {}
    for row in ws.read_csv("pair_confidence.csv"):
        labels[(row["arg_i"], row["arg_j"])] = (int(row["model_confident"]), int(row["human_confident"]))
    return comparisons.PairConfidence(dict(sorted(labels.items())), margin)


def stage_rank_eval(ws: Workspace) -> None:
    cfg = ws.cfg
    scorers, human = _load_matrices(ws)
    ws.read_json("scales.json")  # fit-bt must have run under this config
    conf = _load_confidence(ws, cfg.margin)
    ensembles = [s.ensemble_id for s in _ensemble_specs(ws)]
    ordered = {k: scorers[k] for k in [*[e for e in ensembles if e in scorers],
                                       *[m for m in scorers if m not in ensembles]]}
    rows = rank_eval.evaluate_scorers(ordered, human, conf, cfg.bt, cfg.tie_mode, cfg.seed)
    ws.write_json("report.json", {
        "tool_version": dualscale.__version__,
        "seed": cfg.seed,
        "settings": cfg.analysis_settings(),
        "rows": rows,
    })
    rounded = [{k: (round(v, 3) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]
    ws.write_csv("report.csv", rounded, rank_eval.REPORT_COLUMNS)


STAGE_FUNCS: dict[str, Callable[[Workspace], None]] = {
    "aggregate": stage_aggregate,
    "ensemble": stage_ensemble,
    "pointwise-eval": stage_pointwise_eval,
    "sample-pairs": stage_sample_pairs,
    "win-matrix": stage_win_matrix,
    "fit-bt": stage_fit_bt,
    "rank-eval": stage_rank_eval,
}


class StageError(DualscaleError):
    def __init__(self, stage: str, cause: DualscaleError):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


def run_stage(name: str, cfg: PipelineConfig, force: bool = False) -> Workspace:
    ws = Workspace(cfg, force)
    ws.root.mkdir(parents=True, exist_ok=True)
    try:
        STAGE_FUNCS[name](ws)
    except DualscaleError as exc:
        raise StageError(name, exc) from exc
    return ws


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    """Run every stage in order and write ``manifest.json``; returns the manifest."""
    ws = Workspace(cfg, force)
    ws.root.mkdir(parents=True, exist_ok=True)
    for name in STAGES:
        try:
            STAGE_FUNCS[name](ws)
        except DualscaleError as exc:
            raise StageError(name, exc) from exc
    artifacts = {}
    for name in sorted(ws.written):
        artifacts[name] = hashlib.sha256(ws.path(name).read_bytes()).hexdigest()
    manifest = {
        "tool_version": dualscale.__version__,
        "seed": cfg.seed,
        "stages": list(STAGES),
        "settings": cfg.analysis_settings(),
        "artifacts": artifacts,
    }
    ws.write_json("manifest.json", manifest)
    return {"config_hash": ws.hash, **manifest}
