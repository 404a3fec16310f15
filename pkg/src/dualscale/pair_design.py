"""Decile binning of position scores, stratified pair sampling, and design diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from dualscale._rng import stream_rng
from dualscale.errors import ValidationError

N_DECILES = 10
ENTROPY_BAND = (2.2, 2.8)


def decile_of(score: float) -> int:
    """Decile index 0..9; deciles are [10k, 10k+10) except the last, which is closed."""
    if not 0.0 <= score <= 100.0:
        raise ValidationError(f"score outside [0, 100]: {score!r}")
    return min(int(score // 10), N_DECILES - 1)


@dataclass(frozen=True)
class PositionBinning:
    """Occupied deciles relabelled 1..K in order, plus the per-item assignment."""

    occupied_deciles: tuple[int, ...]
    assignment: Mapping[str, int]

    @property
    def n_bins(self) -> int:
        return len(self.occupied_deciles)

    @property
    def items(self) -> list[str]:
        return sorted(self.assignment)

    def members(self, b: int) -> list[str]:
        return sorted(i for i, x in self.assignment.items() if x == b)

    def bin_of_score(self, score: float) -> int | None:
        """Relabelled bin of an arbitrary score, or None if its decile is unoccupied."""
        d = decile_of(score)
        try:
            return self.occupied_deciles.index(d) + 1
        except ValueError:
            return None

    def decile_range(self, b: int) -> tuple[int, int]:
        d = self.occupied_deciles[b - 1]
        return 10 * d, 10 * d + 10


def bin_scores(scores: Mapping[str, float]) -> PositionBinning:
    deciles = {item: decile_of(float(s)) for item, s in scores.items()}
    occupied = tuple(sorted(set(deciles.values())))
    relabel = {d: k + 1 for k, d in enumerate(occupied)}
    return PositionBinning(occupied, {i: relabel[d] for i, d in sorted(deciles.items())})


@dataclass(frozen=True)
class PairSet:
    """Unordered comparison pairs, each stored as ``(a, b)`` with ``a < b``."""

    pairs: tuple[tuple[str, str], ...]
    strata: tuple[str, ...] = ()

    def __post_init__(self):
        canon = []
        seen = set()
        for a, b in self.pairs:
            if a == b:
                raise ValidationError(f"self-pair ({a}, {b})")
            key = (a, b) if a < b else (b, a)
            if key in seen:
                raise ValidationError(f"duplicate pair {key}")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "pairs", tuple(canon))
        if self.strata and len(self.strata) != len(canon):
            raise ValidationError("strata tags must align with pairs")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def items(self) -> set[str]:
        return {x for p in self.pairs for x in p}


def _stratum_pairs(binning: PositionBinning, intra: int, inter: int):
    k = binning.n_bins
    members = {b: binning.members(b) for b in range(1, k + 1)}
    for b in range(1, k + 1):
        yield f"intra({b})", list(itertools.combinations(members[b], 2)), intra
    for b1, b2 in itertools.combinations(range(1, k + 1), 2):
        yield f"inter({b1},{b2})", list(itertools.product(members[b1], members[b2])), inter


def sample_pairs(binning: PositionBinning, intra_per_bin: int = 44, inter_per_binpair: int = 22,
                 seed: int = 0) -> PairSet:
    """Draw pairs uniformly without replacement inside each stratum.

    Strata are the K intra-bin sets and the K(K-1)/2 unordered bin pairs.
    A stratum with fewer available pairs than its quota contributes all of them.
    """
    if intra_per_bin < 0 or inter_per_binpair < 0:
        raise ValidationError("pair quotas must be non-negative")
    pairs, tags = [], []
    for stream, (tag, candidates, quota) in enumerate(_stratum_pairs(binning, intra_per_bin, inter_per_binpair)):
        if quota == 0 or not candidates:
            continue
        if quota >= len(candidates):
            picked = candidates
        else:
            idx = stream_rng(seed, stream).choice(len(candidates), size=quota, replace=False)
            picked = [candidates[i] for i in sorted(idx)]
        pairs.extend(picked)
        tags.extend([tag] * len(picked))
    return PairSet(tuple(pairs), tuple(tags))


def stratum_of(pair: tuple[str, str], binning: PositionBinning) -> str:
    b1, b2 = sorted((binning.assignment[pair[0]], binning.assignment[pair[1]]))
    return f"intra({b1})" if b1 == b2 else f"inter({b1},{b2})"


def check_connectivity(pairs: Iterable[tuple[str, str]], items: Iterable[str]) -> bool:
    items = sorted(set(items))
    if len(items) <= 1:
        return True
    index = {x: i for i, x in enumerate(items)}
    edges = [(index[a], index[b]) for a, b in pairs if a in index and b in index]
    if not edges:
        return False
    rows, cols = zip(*edges)
    graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(len(items), len(items)))
    n_components, _ = connected_components(graph, directed=False)
    return n_components == 1


def sample_size_target(n: int) -> float:
    return n * math.log(n)


def check_sample_size(pairs: Sequence, n: int) -> bool:
    if n < 2:
        raise ValidationError("sample-size check needs n >= 2")
    return len(pairs) >= sample_size_target(n)


def node_entropy(pairs: Iterable[tuple[str, str]], binning: PositionBinning,
                 items: Iterable[str] | None = None) -> tuple[dict[str, float], dict]:
    """Shannon entropy (bits) of each item's partner-bin distribution.

    Returns the per-item entropies and a summary with the median and the
    fraction of items whose entropy lies in [2.2, 2.8].

    Raises:
        ValidationError: if an item takes part in no pair.
    """
    items = binning.items if items is None else sorted(items)
    counts = {i: np.zeros(binning.n_bins) for i in items}
    for a, b in pairs:
        for x, partner in ((a, b), (b, a)):
            if x in counts:
                counts[x][binning.assignment[partner] - 1] += 1
    entropies = {}
    for i in items:
        c = counts[i]
        total = c.sum()
        if total == 0:
            raise ValidationError(f"item {i!r} is not part of any pair")
        f = c[c > 0] / total
        entropies[i] = float(-(f * np.log2(f)).sum()) + 0.0
    values = np.array(list(entropies.values()))
    lo, hi = ENTROPY_BAND
    summary = {
        "median": float(np.median(values)),
        "fraction_in_band": float(np.mean((values >= lo) & (values <= hi))),
        "band": list(ENTROPY_BAND),
        "upper_bound": math.log2(binning.n_bins) if binning.n_bins else 0.0,
    }
    return entropies, summary


def design_diagnostics(pairs: PairSet, binning: PositionBinning) -> dict:
    items = binning.items
    n = len(items)
    diag = {
        "n_items": n,
        "n_pairs": len(pairs),
        "n_bins": binning.n_bins,
        "occupied_deciles": [binning.decile_range(b) for b in range(1, binning.n_bins + 1)],
        "connected": check_connectivity(pairs, items),
        "sample_size_target": sample_size_target(n) if n >= 2 else None,
        "meets_sample_size": check_sample_size(pairs, n) if n >= 2 else None,
    }
    try:
        _, summary = node_entropy(pairs, binning)
        diag["entropy_median"] = summary["median"]
        diag["entropy_fraction_in_band"] = summary["fraction_in_band"]
    except ValidationError as exc:
        diag["entropy_median"] = diag["entropy_fraction_in_band"] = None
        diag["entropy_error"] = str(exc)
    return diag
