"""Win matrices from binned model repetitions and framed human choices."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from dualscale.corpus_io import PairwiseAnnotation
from dualscale.errors import ComputationError, ValidationError

SUBSET_KEYS = ((1, 1), (1, 0), (0, 1), (0, 0))


def subset_name(key: tuple[int, int]) -> str:
    return f"P_{key[0]}{key[1]}"


def win(x, y) -> float:
    """Win credit of bin ``x`` against bin ``y``: 1, 0.5 on a draw, else 0."""
    if x > y:
        return 1.0
    if x == y:
        return 0.5
    return 0.0


@dataclass(frozen=True, eq=False)
class WinMatrix:
    """Hollow square matrix; ``W[i, j]`` is the win mass of item i over item j."""

    ids: tuple[str, ...]
    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        n = len(self.ids)
        if W.shape != (n, n):
            raise ValidationError(f"win matrix shape {W.shape} does not match {n} ids")
        if len(set(self.ids)) != n:
            raise ValidationError("duplicate ids in win matrix")
        if np.any(np.diag(W) != 0):
            raise ValidationError("win matrix must be hollow")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValidationError("win masses must be finite and non-negative")
        W.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def mass(self) -> np.ndarray:
        return self.W + self.W.T

    def index(self, item: str) -> int:
        try:
            return self._index[item]
        except AttributeError:
            object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.ids)})
            return self.index(item)
        except KeyError:
            raise ValidationError(f"unknown item {item!r}") from None

    def entry(self, a: str, b: str) -> float:
        return float(self.W[self.index(a), self.index(b)])

    def transpose(self) -> "WinMatrix":
        return WinMatrix(self.ids, self.W.T)

    def __add__(self, other: "WinMatrix") -> "WinMatrix":
        if self.ids != other.ids:
            raise ValidationError("cannot add win matrices over different ids")
        return WinMatrix(self.ids, self.W + other.W)

    def restrict(self, pairs: Iterable[tuple[str, str]]) -> "WinMatrix":
        """Keep only the comparisons of the given unordered pairs."""
        keep = np.zeros_like(self.W, dtype=bool)
        for a, b in pairs:
            i, j = self.index(a), self.index(b)
            keep[i, j] = keep[j, i] = True
        return WinMatrix(self.ids, np.where(keep, self.W, 0.0))

    def compared_pairs(self) -> list[tuple[str, str]]:
        m = self.mass
        return [(self.ids[i], self.ids[j]) for i in range(self.n) for j in range(i + 1, self.n) if m[i, j] > 0]


def model_win_matrix(binned_reps: Mapping[str, Sequence[int | None]], items: Sequence[str] | None = None) -> WinMatrix:
    """Dense win matrix from every combination of two items' repetitions.

    ``binned_reps[item]`` lists the item's binned repetition scores, None for
    NA. Combinations involving an NA contribute to neither W nor its mass.
    """
    items = sorted(binned_reps) if items is None else list(items)
    valid = {}
    for item in items:
        if item not in binned_reps:
            raise ValidationError(f"no repetitions for item {item!r}")
        reps = [r for r in binned_reps[item] if r is not None]
        if not reps:
            raise ValidationError(f"item {item!r} has no valid repetition")
        valid[item] = reps
    levels = sorted({r for reps in valid.values() for r in reps})
    col = {lv: k for k, lv in enumerate(levels)}
    hist = np.zeros((len(items), len(levels)))
    for i, item in enumerate(items):
        for r in valid[item]:
            hist[i, col[r]] += 1
    below = np.cumsum(hist, axis=1) - hist
    # counts are small integers, so the products and sums below are exact
    W = hist @ below.T + 0.5 * (hist @ hist.T)
    np.fill_diagonal(W, 0.0)
    return WinMatrix(tuple(items), W)


def human_win_matrix(annotations: Iterable[PairwiseAnnotation], ids: Sequence[str],
                     framing: str | None = None) -> WinMatrix:
    """Win matrix in the "more right-wing wins" orientation.

    Right-framed choices credit the chosen argument. Left-framed choices are
    accumulated the same way and the resulting matrix is transposed. With
    ``framing=None`` both framings are summed.
    """
    if framing not in (None, "left", "right"):
        raise ValidationError(f"unknown framing filter {framing!r}")
    index = {x: k for k, x in enumerate(ids)}
    raw = {"left": np.zeros((len(ids), len(ids))), "right": np.zeros((len(ids), len(ids)))}
    for a in annotations:
        if framing is not None and a.framing != framing:
            continue
        for x in (a.arg_i, a.arg_j):
            if x not in index:
                raise ValidationError(f"annotation references unknown item {x!r}")
        i, j = index[a.arg_i], index[a.arg_j]
        W = raw[a.framing]
        if a.choice == "first":
            W[i, j] += 1.0
        elif a.choice == "second":
            W[j, i] += 1.0
        else:
            W[i, j] += 0.5
            W[j, i] += 0.5
    return WinMatrix(tuple(ids), raw["left"].T + raw["right"])


def human_win_matrices(annotations: Sequence[PairwiseAnnotation], ids: Sequence[str]) -> dict[str, WinMatrix]:
    left = human_win_matrix(annotations, ids, "left")
    right = human_win_matrix(annotations, ids, "right")
    return {"left": left, "right": right, "agg": left + right}


def annotated_pairs(annotations: Iterable[PairwiseAnnotation]) -> list[tuple[str, str]]:
    return sorted({(min(a.arg_i, a.arg_j), max(a.arg_i, a.arg_j)) for a in annotations})


def normalized(Wm: WinMatrix, pairs: Iterable[tuple[str, str]] | None = None) -> dict[tuple[str, str], float]:
    """``W_ij / M_ij`` for each requested ordered pair (default: all compared pairs)."""
    pairs = Wm.compared_pairs() if pairs is None else list(pairs)
    mass = Wm.mass
    out = {}
    for a, b in pairs:
        i, j = Wm.index(a), Wm.index(b)
        if mass[i, j] <= 0:
            raise ComputationError(f"undefined normalized entry for ({a}, {b}): no comparisons")
        out[(a, b)] = float(Wm.W[i, j] / mass[i, j])
    return out


@dataclass(frozen=True)
class PairConfidence:
    labels: Mapping[tuple[str, str], tuple[int, int]]
    margin: float

    def subset(self, key: tuple[int, int]) -> list[tuple[str, str]]:
        return [p for p, lab in self.labels.items() if lab == key]

    @property
    def subsets(self) -> dict[tuple[int, int], list[tuple[str, str]]]:
        return {k: self.subset(k) for k in SUBSET_KEYS}


def is_confident(value: float, margin: float = 0.25) -> int:
    return int(abs(value - 0.5) >= margin)


def confidence_partition(model_norm: Mapping[tuple[str, str], float], human_norm: Mapping[tuple[str, str], float],
                         pairs: Iterable[tuple[str, str]], margin: float = 0.25) -> PairConfidence:
    """Label each pair by (model confident, human confident)."""
    if not 0 < margin <= 0.5:
        raise ValidationError(f"margin must lie in (0, 0.5], got {margin}")
    labels = {}
    for p in pairs:
        if p not in model_norm or p not in human_norm:
            raise ComputationError(f"undefined normalized entry for pair {p}")
        labels[p] = (is_confident(model_norm[p], margin), is_confident(human_norm[p], margin))
    return PairConfidence(dict(sorted(labels.items())), margin)


def binned_repetitions(records, models: Iterable[str], bin_fn, items: Iterable[str] | None = None) -> dict[str, list]:
    """Pool the repetitions of ``models`` per item and map each score through ``bin_fn``."""
    wanted = set(models)
    keep = None if items is None else set(items)
    out = defaultdict(list)
    for r in sorted(records, key=lambda r: r.sort_key()):
        if r.model_id in wanted and (keep is None or r.argument_id in keep):
            out[r.argument_id].append(None if r.score is None else bin_fn(r.score))
    return dict(out)


# -- serialization ---------------------------------------------------------

def square_to_csv(ids: Sequence[str], M: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *ids])
    for i, item in enumerate(ids):
        writer.writerow([item, *(repr(float(x)) for x in M[i])])
    return buf.getvalue()


def matrix_to_csv(Wm: WinMatrix) -> str:
    return square_to_csv(Wm.ids, Wm.W)


def matrix_from_csv(text: str) -> WinMatrix:
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0][0] != "id":
        raise ValidationError("win-matrix file must start with an 'id' header")
    ids = tuple(rows[0][1:])
    body = rows[1:]
    if [r[0] for r in body] != list(ids):
        raise ValidationError("win-matrix row ids do not match the header")
    try:
        W = np.array([[float(x) for x in r[1:]] for r in body])
    except ValueError as exc:
        raise ValidationError(f"unparseable win-matrix entry: {exc}") from None
    return WinMatrix(ids, W.reshape(len(ids), len(ids)))


PAIR_COLUMNS = ("arg_i", "arg_j", "W_ij", "W_ji", "M_ij", "W_hat_ij", "confident")


def pair_rows(Wm: WinMatrix, pairs: Iterable[tuple[str, str]], margin: float = 0.25) -> list[dict]:
    rows = []
    for a, b in sorted((min(p), max(p)) for p in pairs):
        wij, wji = Wm.entry(a, b), Wm.entry(b, a)
        m = wij + wji
        hat = wij / m if m > 0 else None
        rows.append({"arg_i": a, "arg_j": b, "W_ij": wij, "W_ji": wji, "M_ij": m, "W_hat_ij": hat,
                     "confident": None if hat is None else is_confident(hat, margin)})
    return rows
