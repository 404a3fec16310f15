"""Per-scorer summaries over repetitions, and ensemble construction."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from dualscale.corpus_io import PredictionRecord
from dualscale.errors import ValidationError

SUMMARY_COLUMNS = ("scorer_id", "argument_id", "mean_score", "score_sd", "na_probability", "n_reps")


@dataclass(frozen=True)
class PredictionSummary:
    """Repetition statistics of one scorer on one argument.

    ``mean_score`` and ``score_sd`` are ``None`` when every repetition is NA.
    ``score_sd`` is the population standard deviation of the numeric scores.
    """

    scorer_id: str
    argument_id: str
    mean_score: float | None
    score_sd: float | None
    na_count: int
    n_reps: int

    @property
    def na_probability(self) -> float:
        return self.na_count / self.n_reps

    @property
    def n_scored(self) -> int:
        return self.n_reps - self.na_count


@dataclass(frozen=True)
class EnsembleSpec:
    ensemble_id: str
    member_model_ids: tuple[str, ...]

    def __post_init__(self):
        members = tuple(self.member_model_ids)
        if not members:
            raise ValidationError(f"ensemble {self.ensemble_id!r} has no members")
        if len(set(members)) != len(members):
            raise ValidationError(f"ensemble {self.ensemble_id!r} lists a member twice")
        object.__setattr__(self, "member_model_ids", tuple(sorted(members)))


def _summary(scorer_id: str, argument_id: str, values: Sequence[float | None]) -> PredictionSummary:
    if not values:
        raise ValidationError(f"no repetitions for scorer {scorer_id!r} on {argument_id!r}")
    scores = [v for v in values if v is not None]
    na_count = len(values) - len(scores)
    if scores:
        # fsum is correctly rounded, hence independent of summation order
        mean = math.fsum(scores) / len(scores)
        sd = math.sqrt(math.fsum((s - mean) ** 2 for s in scores) / len(scores))
    else:
        mean = sd = None
    return PredictionSummary(scorer_id, argument_id, mean, sd, na_count, len(values))


def model_ids(records: Iterable[PredictionRecord]) -> list[str]:
    return sorted({r.model_id for r in records})


def repetitions_by_argument(records: Iterable[PredictionRecord],
                            models: Iterable[str] | None = None) -> dict[str, list[float | None]]:
    """Pool the repetition values of ``models`` per argument, in canonical order."""
    wanted = None if models is None else set(models)
    pooled: dict[str, list[float | None]] = defaultdict(list)
    for rec in sorted(records, key=PredictionRecord.sort_key):
        if wanted is None or rec.model_id in wanted:
            pooled[rec.argument_id].append(rec.score)
    return {k: pooled[k] for k in sorted(pooled)}


def summarize(records: Sequence[PredictionRecord], scorer_id: str | None = None) -> list[PredictionSummary]:
    """Summaries per argument for the records of a single scorer."""
    if not records:
        raise ValidationError("empty record group")
    scorers = {r.model_id for r in records}
    if scorer_id is None:
        if len(scorers) != 1:
            raise ValidationError(f"summarize expects one scorer, got {sorted(scorers)}")
        scorer_id = next(iter(scorers))
    return [_summary(scorer_id, arg, vals) for arg, vals in repetitions_by_argument(records).items()]


def summarize_all(records: Sequence[PredictionRecord]) -> list[PredictionSummary]:
    by_model: dict[str, list[PredictionRecord]] = defaultdict(list)
    for rec in records:
        by_model[rec.model_id].append(rec)
    out = []
    for model in sorted(by_model):
        out.extend(summarize(by_model[model], model))
    return out


def pool_ensemble(spec: EnsembleSpec, records: Sequence[PredictionRecord]) -> list[PredictionSummary]:
    """Summaries over the union of all member repetitions (not a mean of member means)."""
    present = {r.model_id for r in records}
    missing = [m for m in spec.member_model_ids if m not in present]
    if missing:
        raise ValidationError(f"ensemble {spec.ensemble_id!r}: no records for members {missing}")
    pooled = repetitions_by_argument(records, spec.member_model_ids)
    return [_summary(spec.ensemble_id, arg, vals) for arg, vals in pooled.items()]


def _is_political_majority(values: Sequence[float | None]) -> bool:
    scored = sum(v is not None for v in values)
    return scored > len(values) - scored


def select_high_confidence_models(records: Sequence[PredictionRecord],
                                  candidate_models: Iterable[str]) -> set[str]:
    """Models that call more arguments political than apolitical.

    An argument counts as political for a model when most of that model's
    repetitions are numeric scores; an exact tie counts as apolitical. The
    inequality is strict, so a model at 500 vs 500 is excluded.
    """
    candidates = sorted(set(candidate_models))
    if not candidates:
        raise ValidationError("empty candidate set")
    per_model: dict[str, dict[str, list]] = {m: defaultdict(list) for m in candidates}
    for rec in records:
        if rec.model_id in per_model:
            per_model[rec.model_id][rec.argument_id].append(rec.score)
    argument_sets = {m: frozenset(per_model[m]) for m in candidates}
    reference = argument_sets[candidates[0]]
    for m in candidates:
        if not argument_sets[m]:
            raise ValidationError(f"candidate model {m!r} has no predictions")
        if argument_sets[m] != reference:
            raise ValidationError(f"candidate model {m!r} covers a different argument set")
    selected = set()
    for m in candidates:
        political = sum(_is_political_majority(v) for v in per_model[m].values())
        if political > len(per_model[m]) - political:
            selected.add(m)
    return selected


def resolve_ensembles(definitions: Mapping[str, Mapping], records: Sequence[PredictionRecord]) -> list[EnsembleSpec]:
    """Turn config-declared ensembles into concrete member lists.

    Each definition holds either ``members`` (a list of model ids or the
    string ``"all"``) or ``select: high_confidence`` with optional
    ``candidates`` (list or ``"all"``, the default).
    """
    available = model_ids(records)
    specs = []
    for ensemble_id in sorted(definitions):
        definition = definitions[ensemble_id] or {}
        if "select" in definition:
            if definition["select"] != "high_confidence":
                raise ValidationError(f"ensemble {ensemble_id!r}: unknown selection rule {definition['select']!r}")
            pool = _member_list(definition.get("candidates", "all"), available, ensemble_id)
            members = sorted(select_high_confidence_models(records, pool))
            if not members:
                raise ValidationError(f"ensemble {ensemble_id!r}: no candidate passes the high-confidence rule")
        else:
            members = _member_list(definition.get("members"), available, ensemble_id)
        specs.append(EnsembleSpec(ensemble_id, tuple(members)))
    return specs


def _member_list(value, available: list[str], ensemble_id: str) -> list[str]:
    if value == "all":
        return list(available)
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError(f"ensemble {ensemble_id!r}: members must be a nonempty list or 'all'")
    unknown = [m for m in value if m not in available]
    if unknown:
        raise ValidationError(f"ensemble {ensemble_id!r}: unknown models {unknown}")
    return [str(m) for m in value]


def summaries_to_rows(summaries: Iterable[PredictionSummary]) -> list[dict]:
    def fmt(x):
        return "" if x is None else repr(x)

    return [
        {"scorer_id": s.scorer_id, "argument_id": s.argument_id, "mean_score": fmt(s.mean_score),
         "score_sd": fmt(s.score_sd), "na_probability": repr(s.na_probability), "n_reps": s.n_reps}
        for s in sorted(summaries, key=lambda s: (s.scorer_id, s.argument_id))
    ]


def summaries_from_rows(rows: Iterable[Mapping]) -> list[PredictionSummary]:
    out = []
    for n, row in enumerate(rows, start=1):
        try:
            n_reps = int(row["n_reps"])
            na_count = round(float(row["na_probability"]) * n_reps)
            mean = float(row["mean_score"]) if row["mean_score"] not in ("", None) else None
            sd = float(row["score_sd"]) if row["score_sd"] not in ("", None) else None
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"summaries row {n}: {exc}") from None
        out.append(PredictionSummary(row["scorer_id"], row["argument_id"], mean, sd, na_count, n_reps))
    return out
