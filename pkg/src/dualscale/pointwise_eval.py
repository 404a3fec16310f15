"""Pointwise study: NA-probability buckets, dataset partitions, and classification metrics."""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from dualscale._rng import stream_rng
from dualscale.corpus_io import PointwiseAnnotation
from dualscale.errors import ComputationError, ValidationError
from dualscale.prediction_stats import PredictionSummary
from dualscale.reliability import ReliabilityGrid, krippendorff_alpha, majority_label, two_party_alpha

log = logging.getLogger(__name__)

POLITICAL = "political"
APOLITICAL = "apolitical"
PARTITIONS = ("full", "conf", "ambig")
METRIC_COLUMNS = ("scorer_id", "partition", "n", "macro_f1", "micro_f1", "precision", "recall",
                  "balanced_accuracy", "alpha_human_model")


class ConfidenceBucket(str, enum.Enum):
    H_POL = "H_pol"
    L = "L"
    H_APOL = "H_apol"


DEFAULT_COUNTS = {ConfidenceBucket.H_POL: 400, ConfidenceBucket.L: 200, ConfidenceBucket.H_APOL: 400}


def assign_bucket(pi: float) -> ConfidenceBucket | None:
    """Bucket for an NA probability, or None in the gaps (0.05, 0.45) and (0.55, 0.95)."""
    if not 0.0 <= pi <= 1.0:
        raise ValidationError(f"NA probability outside [0, 1]: {pi!r}")
    if pi <= 0.05:
        return ConfidenceBucket.H_POL
    if 0.45 <= pi <= 0.55:
        return ConfidenceBucket.L
    if pi >= 0.95:
        return ConfidenceBucket.H_APOL
    return None


@dataclass(frozen=True)
class PointwiseDataset:
    members: Mapping[str, ConfidenceBucket]

    @property
    def full(self) -> frozenset[str]:
        return frozenset(self.members)

    @property
    def conf(self) -> frozenset[str]:
        return frozenset(a for a, b in self.members.items() if b is not ConfidenceBucket.L)

    @property
    def ambig(self) -> frozenset[str]:
        return frozenset(a for a, b in self.members.items() if b is ConfidenceBucket.L)

    def bucket(self, tag: ConfidenceBucket) -> frozenset[str]:
        return frozenset(a for a, b in self.members.items() if b is tag)

    def partition(self, name: str) -> frozenset[str]:
        if name not in PARTITIONS:
            raise ValidationError(f"unknown partition {name!r}")
        return getattr(self, name)

    @classmethod
    def from_summaries(cls, summaries: Iterable[PredictionSummary],
                       restrict_to: Iterable[str] | None = None) -> "PointwiseDataset":
        """Bucket every (or every listed) argument; arguments in the gaps are dropped."""
        wanted = None if restrict_to is None else set(restrict_to)
        members = {}
        for s in summaries:
            if wanted is not None and s.argument_id not in wanted:
                continue
            bucket = assign_bucket(s.na_probability)
            if bucket is None:
                log.warning("argument %s (pi=%.3f) falls outside every bucket; dropped",
                            s.argument_id, s.na_probability)
                continue
            members[s.argument_id] = bucket
        return cls(dict(sorted(members.items())))


def sample_dataset(summaries: Iterable[PredictionSummary],
                   counts: Mapping[ConfidenceBucket | str, int] | None = None,
                   seed: int = 0) -> PointwiseDataset:
    """Uniform sample without replacement from each bucket's candidate pool."""
    counts = DEFAULT_COUNTS if counts is None else {ConfidenceBucket(k): int(v) for k, v in counts.items()}
    pools = defaultdict(list)
    for s in summaries:
        bucket = assign_bucket(s.na_probability)
        if bucket is not None:
            pools[bucket].append(s.argument_id)
    members = {}
    for stream, tag in enumerate(ConfidenceBucket):
        want = counts.get(tag, 0)
        if want < 0:
            raise ValidationError(f"negative count for bucket {tag.value}")
        pool = sorted(pools[tag])
        if want > len(pool):
            raise ValidationError(f"bucket {tag.value}: requested {want}, only {len(pool)} candidates "
                                  f"(shortfall {want - len(pool)})")
        if want == 0:
            continue
        picks = stream_rng(seed, stream).choice(len(pool), size=want, replace=False)
        for i in sorted(picks):
            members[pool[i]] = tag
    return PointwiseDataset(dict(sorted(members.items())))


def binarize_prediction(summary: PredictionSummary | float, threshold: float = 0.5) -> str:
    pi = summary.na_probability if isinstance(summary, PredictionSummary) else float(summary)
    return APOLITICAL if pi > threshold else POLITICAL


def classification_metrics(truth: Mapping[str, str], pred: Mapping[str, str], subset: Iterable[str],
                           positive: str = POLITICAL, classes: Sequence[str] = (POLITICAL, APOLITICAL)) -> dict:
    """Binary classification metrics with ``truth`` as ground truth.

    Precision and recall are for the ``positive`` class. Macro F1 gives each
    class equal weight (0 for a class with no support and no predictions).
    Micro F1 is instance-level accuracy. Balanced accuracy averages recall
    over the classes present in ``truth``.
    """
    subset = sorted(subset)
    if not subset:
        raise ValidationError("empty evaluation subset")
    missing = [u for u in subset if u not in truth or u not in pred]
    if missing:
        raise ValidationError(f"subset items lacking truth or prediction: {missing[:5]}")
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for u in subset:
        t, p = truth[u], pred[u]
        if t not in tp or p not in tp:
            raise ValidationError(f"unknown class label at {u!r}: {t!r}/{p!r}")
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1

    def ratio(a, b):
        return a / b if b else 0.0

    f1 = {c: ratio(2 * tp[c], 2 * tp[c] + fp[c] + fn[c]) for c in classes}
    recalls = [tp[c] / (tp[c] + fn[c]) for c in classes if tp[c] + fn[c]]
    return {
        "macro_f1": sum(f1.values()) / len(classes),
        "micro_f1": sum(tp.values()) / len(subset),
        "precision": ratio(tp[positive], tp[positive] + fp[positive]),
        "recall": ratio(tp[positive], tp[positive] + fn[positive]),
        "balanced_accuracy": sum(recalls) / len(recalls),
    }


def inter_model_alpha(predictions: Mapping[str, Mapping[str, str]], subset: Iterable[str] | None = None) -> float:
    """Nominal alpha with models as raters over the arguments in ``subset``."""
    if len(predictions) < 2:
        raise ValidationError("inter-model alpha needs at least two models")
    keep = None if subset is None else set(subset)
    values = {(u, m): label for m, by_unit in predictions.items() for u, label in by_unit.items()
              if keep is None or u in keep}
    return krippendorff_alpha(ReliabilityGrid(values, "nominal"))


def human_majority(annotations: Iterable[PointwiseAnnotation]) -> dict[str, tuple[str, bool]]:
    """Majority label and unanimity flag per argument."""
    grouped = defaultdict(list)
    for a in annotations:
        grouped[a.argument_id].append(a.label)
    return {u: majority_label(grouped[u]) for u in sorted(grouped)}


def human_alpha(annotations: Iterable[PointwiseAnnotation], subset: Iterable[str] | None = None) -> float:
    keep = None if subset is None else set(subset)
    values = {(a.argument_id, a.annotator_id): a.label for a in annotations
              if keep is None or a.argument_id in keep}
    return krippendorff_alpha(ReliabilityGrid(values, "nominal"))


def _safe(fn, *args):
    try:
        return fn(*args)
    except (ComputationError, ValidationError) as exc:
        log.info("metric undefined: %s", exc)
        return None


def evaluate_pointwise(summaries: Mapping[str, Sequence[PredictionSummary]],
                       annotations: Sequence[PointwiseAnnotation],
                       dataset: PointwiseDataset,
                       threshold: float = 0.5,
                       inter_model_ids: Iterable[str] | None = None) -> dict:
    """Score every scorer on every partition against human majority labels.

    Returns a dict with ``rows`` (one per scorer and partition), human
    inter-annotator alpha per partition and inter-model alpha per partition.
    Undefined alphas are reported as None. Inter-model alpha uses
    ``inter_model_ids`` (default: every scorer) as raters.
    """
    majority = human_majority(annotations)
    truth = {u: lab for u, (lab, _) in majority.items()}
    preds = {
        scorer: {s.argument_id: binarize_prediction(s, threshold) for s in rows}
        for scorer, rows in sorted(summaries.items())
    }
    out_rows = []
    human = {}
    models = {}
    for part in PARTITIONS:
        subset = sorted(dataset.partition(part) & set(truth))
        human[part] = _safe(human_alpha, annotations, subset)
        raters = preds if inter_model_ids is None else {k: preds[k] for k in inter_model_ids if k in preds}
        models[part] = _safe(inter_model_alpha, raters, subset) if len(raters) > 1 else None
        for scorer, pred in preds.items():
            scored = [u for u in subset if u in pred]
            row = {"scorer_id": scorer, "partition": part, "n": len(scored)}
            metrics = _safe(classification_metrics, truth, pred, scored)
            for key in METRIC_COLUMNS[3:8]:
                row[key] = None if metrics is None else metrics[key]
            row["alpha_human_model"] = _safe(two_party_alpha, {u: truth[u] for u in scored},
                                             {u: pred[u] for u in scored})
            out_rows.append(row)
    unanimous = sum(1 for _, (_, unan) in majority.items() if unan)
    return {
        "rows": out_rows,
        "human_alpha": human,
        "inter_model_alpha": models,
        "n_annotated": len(majority),
        "n_unanimous": unanimous,
        "threshold": threshold,
    }
