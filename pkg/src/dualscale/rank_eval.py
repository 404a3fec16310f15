"""Agreement between rankings and between pairwise judgments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from dualscale.btrank import (
    DEFAULT_MAX_ITER,
    DEFAULT_REG,
    DEFAULT_TOL,
    LatentScale,
    fit_bt_ilsr,
    random_baseline,
    worst_case_baseline,
)
from dualscale.comparisons import SUBSET_KEYS, PairConfidence, WinMatrix, normalized, subset_name
from dualscale.errors import ComputationError, DualscaleError, ValidationError
from dualscale.pointwise_eval import classification_metrics
from dualscale.reliability import ReliabilityGrid, alpha_fraction

log = logging.getLogger(__name__)

WIN, LOSS = "win", "loss"
REPORT_COLUMNS = ("scorer", "subset", "n_pairs", "d_footrule", "d_tau", "alpha_o", "macro_f1")
HUMAN_AGG, HUMAN_LEFT, HUMAN_RIGHT = "Human (agg)", "Human (left)", "Human (right)"
RANDOM_ROW, WORST_ROW = "Random Baseline", "Worst-case Baseline"


@dataclass(frozen=True)
class Ranking:
    """Items from rank 1 (most right-wing) to rank n."""

    order: tuple[str, ...]

    def __post_init__(self):
        order = tuple(self.order)
        if len(set(order)) != len(order):
            raise ValidationError("ranking lists an item twice")
        object.__setattr__(self, "order", order)

    @classmethod
    def from_scale(cls, scale: LatentScale) -> "Ranking":
        return cls(tuple(scale.ranking))

    @property
    def rank(self) -> dict[str, int]:
        return {item: k for k, item in enumerate(self.order, start=1)}

    def __len__(self):
        return len(self.order)


def _as_ranking(r) -> Ranking:
    if isinstance(r, Ranking):
        return r
    if isinstance(r, LatentScale):
        return Ranking.from_scale(r)
    return Ranking(tuple(r))


def _aligned_ranks(r1, r2) -> tuple[np.ndarray, np.ndarray]:
    r1, r2 = _as_ranking(r1), _as_ranking(r2)
    if set(r1.order) != set(r2.order):
        raise ValidationError("rankings cover different item sets")
    if len(r1) < 2:
        raise ValidationError("rank similarities need at least two items")
    a, b = r1.rank, r2.rank
    items = sorted(a)
    return np.array([a[i] for i in items]), np.array([b[i] for i in items])


def footrule_similarity(r1, r2) -> float:
    """``1 - F / floor(n^2 / 2)`` with F the summed absolute rank displacement."""
    a, b = _aligned_ranks(r1, r2)
    n = len(a)
    return 1.0 - int(np.abs(a - b).sum()) / (n * n // 2)


def discordant_pairs(r1, r2) -> int:
    a, b = _aligned_ranks(r1, r2)
    order = np.argsort(a)
    b = b[order]
    # pairs (i < j) in r1 order that r2 puts the other way round
    return int(np.triu(b[:, None] > b[None, :], 1).sum())


def kendall_similarity(r1, r2) -> float:
    a, _ = _aligned_ranks(r1, r2)
    n = len(a)
    return 1.0 - discordant_pairs(r1, r2) / (n * (n - 1) // 2)


def _rank_grid(r1, r2) -> ReliabilityGrid:
    a, b = _as_ranking(r1).rank, _as_ranking(r2).rank
    if set(a) != set(b):
        raise ValidationError("rankings cover different item sets")
    values = {}
    for item in a:
        values[(item, "first")] = a[item]
        values[(item, "second")] = b[item]
    return ReliabilityGrid(values, "ordinal")


def ordinal_alpha_fraction(r1, r2) -> Fraction:
    return alpha_fraction(_rank_grid(r1, r2))


def ordinal_alpha_rankings(r1, r2) -> float:
    """Ordinal alpha with the two rankings as raters and ranks as categories."""
    return float(ordinal_alpha_fraction(r1, r2))


def _label(value: float) -> str | None:
    if value > 0.5:
        return WIN
    if value < 0.5:
        return LOSS
    return None


def pairwise_macro_f1(model_norm: Mapping[tuple, float], human_norm: Mapping[tuple, float],
                      subset: Iterable[tuple], tie_mode: str = "loss",
                      rng: np.random.Generator | None = None) -> float:
    """Macro F1 of win/loss labels for the first argument of each pair.

    Human ties (exactly 0.5) are left out. Model ties count as a loss, or,
    with ``tie_mode="random"``, as a fair coin flip drawn from ``rng``.
    """
    if tie_mode not in ("loss", "random"):
        raise ValidationError(f"unknown tie mode {tie_mode!r}")
    if tie_mode == "random" and rng is None:
        rng = np.random.default_rng(0)
    truth, pred = {}, {}
    for p in sorted(subset):
        if p not in human_norm or p not in model_norm:
            raise ComputationError(f"undefined normalized entry for pair {p}")
        label = _label(human_norm[p])
        if label is None:
            continue
        truth[p] = label
        guess = _label(model_norm[p])
        if guess is None:
            guess = (WIN if rng.random() < 0.5 else LOSS) if tie_mode == "random" else LOSS
        pred[p] = guess
    if not truth:
        raise ValidationError("no untied human judgments in the subset")
    return classification_metrics(truth, pred, truth, positive=WIN, classes=(WIN, LOSS))["macro_f1"]


def rank_metrics(candidate, reference) -> dict:
    return {
        "d_footrule": footrule_similarity(candidate, reference),
        "d_tau": kendall_similarity(candidate, reference),
        "alpha_o": ordinal_alpha_rankings(candidate, reference),
    }


def _fit(Wm: WinMatrix, bt: Mapping) -> LatentScale:
    return fit_bt_ilsr(Wm, reg=bt.get("reg", DEFAULT_REG), tol=bt.get("tol", DEFAULT_TOL),
                       max_iter=bt.get("max_iter", DEFAULT_MAX_ITER))


def _lenient_norm(Wm: WinMatrix, pairs: Sequence[tuple]) -> dict:
    """Normalized entries; pairs this matrix never compared count as ties."""
    mass = Wm.mass
    out = {}
    for a, b in pairs:
        i, j = Wm.index(a), Wm.index(b)
        out[(a, b)] = float(Wm.W[i, j] / mass[i, j]) if mass[i, j] > 0 else 0.5
    return out


def evaluate_scorers(scorers: Mapping[str, WinMatrix], human: Mapping[str, WinMatrix],
                     confidence: PairConfidence, bt: Mapping | None = None,
                     tie_mode: str = "loss", seed: int = 0) -> list[dict]:
    """One row per (scorer, subset) with the four agreement metrics.

    On the full annotated set P, a model's ranking comes from its dense win
    matrix. On each confidence subset, both the human reference and the
    candidate are refitted on comparisons restricted to that subset, and
    the full rankings are compared. Undefined cells are None.
    """
    bt = dict(bt or {})
    pairs_all = sorted(confidence.labels)
    subsets = {"P": pairs_all}
    subsets.update({subset_name(k): confidence.subset(k) for k in SUBSET_KEYS})
    ids = human["agg"].ids
    for name, Wm in scorers.items():
        if Wm.ids != ids:
            raise ValidationError(f"scorer {name!r} covers different items than the human matrix")
    human_norm = normalized(human["agg"], pairs_all)
    model_norms = {name: normalized(Wm, pairs_all) for name, Wm in scorers.items()}
    full_fits: dict[str, LatentScale] = {}
    rows = []
    for sub_idx, (sub_name, pairs) in enumerate(subsets.items()):
        if not pairs:
            rows.extend(_empty_row(name, sub_name) for name in _row_names(scorers))
            continue
        try:
            reference = _fit(human["agg"].restrict(pairs), bt)
        except DualscaleError as exc:
            log.warning("human reference fit failed on %s: %s", sub_name, exc)
            rows.extend(_empty_row(name, sub_name, len(pairs)) for name in _row_names(scorers))
            continue
        candidates = {
            HUMAN_AGG: (lambda: reference, human_norm),
            HUMAN_LEFT: (lambda: _fit(human["left"].restrict(pairs), bt), _lenient_norm(human["left"], pairs)),
            HUMAN_RIGHT: (lambda: _fit(human["right"].restrict(pairs), bt), _lenient_norm(human["right"], pairs)),
        }
        for name, Wm in scorers.items():
            if sub_name == "P":
                def fit_full(name=name, Wm=Wm):
                    if name not in full_fits:
                        full_fits[name] = _fit(Wm, bt)
                    return full_fits[name]
                candidates[name] = (fit_full, model_norms[name])
            else:
                candidates[name] = (lambda Wm=Wm: _fit(Wm.restrict(pairs), bt), model_norms[name])
        candidates[RANDOM_ROW] = (lambda: random_baseline(ids), {p: 0.5 for p in pairs})
        candidates[WORST_ROW] = (lambda: worst_case_baseline(reference), {p: 1.0 - human_norm[p] for p in pairs})
        for row_idx, (name, (make_scale, norm)) in enumerate(candidates.items()):
            row = {"scorer": name, "subset": sub_name, "n_pairs": len(pairs)}
            try:
                row.update(rank_metrics(make_scale(), reference))
            except DualscaleError as exc:
                log.warning("rank metrics undefined for %s on %s: %s", name, sub_name, exc)
                row.update(d_footrule=None, d_tau=None, alpha_o=None)
            try:
                rng = np.random.default_rng([seed, sub_idx, row_idx])
                row["macro_f1"] = pairwise_macro_f1(norm, human_norm, pairs, tie_mode, rng)
            except DualscaleError as exc:
                log.info("macro F1 undefined for %s on %s: %s", name, sub_name, exc)
                row["macro_f1"] = None
            rows.append(row)
    order = {name: k for k, name in enumerate(_row_names(scorers))}
    sub_order = {name: k for k, name in enumerate(subsets)}
    rows.sort(key=lambda r: (order[r["scorer"]], sub_order[r["subset"]]))
    return rows


def _row_names(scorers) -> list[str]:
    return [HUMAN_AGG, HUMAN_LEFT, HUMAN_RIGHT, *scorers, RANDOM_ROW, WORST_ROW]


def _empty_row(name: str, sub_name: str, n_pairs: int = 0) -> dict:
    return {"scorer": name, "subset": sub_name, "n_pairs": n_pairs, "d_footrule": None, "d_tau": None,
            "alpha_o": None, "macro_f1": None}
