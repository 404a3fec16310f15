"""Krippendorff's alpha over incomplete rater-by-unit grids.

Counts are accumulated as exact integers: the coincidence matrix is scaled by
the least common multiple of ``m_u - 1`` over units, which removes the
fractional contributions of units with more than two values. Conversion to
floating point happens once, at the final division.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping

import numpy as np

from dualscale.errors import AlphaUndefinedError, ValidationError

LEVELS = ("nominal", "ordinal")


@dataclass(frozen=True)
class ReliabilityGrid:
    """Partial map ``(unit, rater) -> category``.

    Ordinal categories must be mutually comparable; their natural order is
    the ordinal scale. Units and raters are kept only for bookkeeping,
    alpha never depends on their order.
    """

    values: Mapping[tuple[Hashable, Hashable], Hashable]
    level: str = "nominal"
    units: tuple = field(default=())
    raters: tuple = field(default=())

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValidationError(f"unknown alpha level {self.level!r}")
        values = {k: v for k, v in dict(self.values).items() if v is not None}
        object.__setattr__(self, "values", values)
        if not self.units:
            object.__setattr__(self, "units", tuple(dict.fromkeys(u for u, _ in values)))
        if not self.raters:
            object.__setattr__(self, "raters", tuple(dict.fromkeys(r for _, r in values)))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable], level: str = "nominal") -> "ReliabilityGrid":
        """Build from a units-by-raters table where ``None`` marks a missing cell."""
        values = {}
        for u, row in enumerate(rows):
            for r, v in enumerate(row):
                if v is not None:
                    values[(u, r)] = v
        return cls(values, level)

    @classmethod
    def from_raters(cls, ratings: Mapping[Hashable, Mapping[Hashable, Hashable]],
                    level: str = "nominal") -> "ReliabilityGrid":
        """Build from ``{rater: {unit: value}}``."""
        values = {(u, r): v for r, by_unit in ratings.items() for u, v in by_unit.items()}
        return cls(values, level)

    def pairable_units(self) -> dict[Hashable, list]:
        by_unit = defaultdict(list)
        for (u, _), v in self.values.items():
            by_unit[u].append(v)
        return {u: vs for u, vs in by_unit.items() if len(vs) >= 2}


def coincidence_counts(grid: ReliabilityGrid):
    """Scaled integer coincidence matrix.

    Returns ``(categories, O, scale)`` where ``O / scale`` is the usual
    coincidence matrix ``o_ck``.
    """
    units = grid.pairable_units()
    if len(units) < 2:
        raise ValidationError(f"need at least 2 units with 2+ values, got {len(units)}")
    categories = sorted({v for vs in units.values() for v in vs}, key=_category_key(grid.level))
    index = {c: i for i, c in enumerate(categories)}
    scale = 1
    for vs in units.values():
        scale = math.lcm(scale, len(vs) - 1)
    k = len(categories)
    by_size = defaultdict(list)
    for vs in units.values():
        counts = np.zeros(k, dtype=np.int64)
        for v in vs:
            counts[index[v]] += 1
        by_size[len(vs)].append(counts)
    dtype = _int_dtype(sum(len(vs) for vs in units.values()) * scale)
    o = np.zeros((k, k), dtype=dtype)
    for m in sorted(by_size):
        c = np.asarray(by_size[m], dtype=dtype)
        pairs = c.T @ c - np.diag(c.sum(axis=0))
        o += pairs * (scale // (m - 1))
    return categories, o, scale


def _category_key(level):
    if level == "ordinal":
        return lambda c: c
    # nominal categories need not be comparable; any fixed order will do
    return lambda c: (type(c).__name__, repr(c))


def _int_dtype(total: int):
    return np.int64 if 4 * total ** 4 < 2 ** 62 else object


def _distance_matrix(level: str, marginals: np.ndarray) -> np.ndarray:
    """Distances between categories, scaled to integers.

    Nominal: ``[c != k]``. Ordinal: ``(2 * sum_{g=c..k} n_g - n_c - n_k)^2``,
    which is four times the textbook squared ordinal distance.
    """
    k = len(marginals)
    if level == "nominal":
        return (1 - np.eye(k, dtype=np.int64)).astype(marginals.dtype)
    cum = np.concatenate([np.zeros(1, dtype=marginals.dtype), np.cumsum(marginals)])
    lo = np.minimum.outer(np.arange(k), np.arange(k))
    hi = np.maximum.outer(np.arange(k), np.arange(k))
    span = cum[hi + 1] - cum[lo]
    d = 2 * span - marginals[:, None] - marginals[None, :]
    return d * d


def alpha_fraction(grid: ReliabilityGrid) -> Fraction:
    """Exact alpha as a rational number."""
    _, o, scale = coincidence_counts(grid)
    marginals = o.sum(axis=1)
    total = int(marginals.sum())
    delta = _distance_matrix(grid.level, marginals)
    observed = int((o * delta).sum())
    expected = int((np.outer(marginals, marginals) * delta).sum())
    if expected == 0:
        raise AlphaUndefinedError()
    return 1 - Fraction((total - scale) * observed, expected)


def krippendorff_alpha(grid: ReliabilityGrid) -> float:
    """Chance-corrected agreement in [-1, 1] (can dip below -1 on tiny grids).

    Raises:
        AlphaUndefinedError: when every pairable value is identical.
        ValidationError: when fewer than two units carry two or more values.
    """
    return float(alpha_fraction(grid))


def majority_label(labels: Iterable[Hashable]) -> tuple[Hashable, bool]:
    """Strict-majority label of an odd-sized multiset, and whether it was unanimous."""
    labels = list(labels)
    if not labels or len(labels) % 2 == 0:
        raise ValidationError(f"majority label needs an odd number of labels, got {len(labels)}")
    counts = Counter(labels)
    label, top = max(counts.items(), key=lambda kv: (kv[1], repr(kv[0])))
    if top * 2 <= len(labels):
        raise ValidationError(f"no strict majority among {dict(counts)}")
    return label, top == len(labels)


def two_party_alpha(labels_a: Mapping[Hashable, Hashable], labels_b: Mapping[Hashable, Hashable],
                    level: str = "nominal") -> float:
    """Alpha with each party acting as a single rater over their shared units."""
    shared = sorted(set(labels_a) & set(labels_b), key=repr)
    if not shared:
        raise ValidationError("the two label maps share no units")
    values = {}
    for u in shared:
        values[(u, "a")] = labels_a[u]
        values[(u, "b")] = labels_b[u]
    return krippendorff_alpha(ReliabilityGrid(values, level))
