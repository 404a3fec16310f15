import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualscale import pair_design as pd
from dualscale.errors import ValidationError
from helpers import reported_binning, reported_design_scores


def test_empty_outer_deciles_are_dropped():
    scores = {f"a{k}": 12 + k for k in range(77)}
    binning = pd.bin_scores(scores)
    assert binning.n_bins == 8
    assert binning.occupied_deciles == tuple(range(1, 9))
    assert binning.decile_range(1) == (10, 20) and binning.decile_range(8) == (80, 90)


def test_decile_boundaries():
    binning = pd.bin_scores({"lo": 5.0, "edge": 10.0, "top": 100.0, "ninety": 90.0})
    assert binning.assignment == {"lo": 1, "edge": 2, "ninety": 3, "top": 3}
    assert pd.decile_of(9.999) == 0 and pd.decile_of(10.0) == 1 and pd.decile_of(100.0) == 9


def test_single_decile():
    assert pd.bin_scores({"a": 41, "b": 45, "c": 49.9}).n_bins == 1


def test_out_of_range_score():
    with pytest.raises(ValidationError):
        pd.bin_scores({"a": 101})


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(0, 89.9), min_size=1, max_size=30))
def test_relabeling_preserves_order(scores):
    binning = pd.bin_scores(scores)
    for a in scores:
        for b in scores:
            if pd.decile_of(scores[a]) < pd.decile_of(scores[b]):
                assert binning.assignment[a] < binning.assignment[b]
    assert set(binning.assignment.values()) == set(range(1, binning.n_bins + 1))


def test_translation_within_deciles_keeps_assignment():
    scores = {f"a{k}": 10 * (k % 8 + 1) + 1 + (k % 5) for k in range(40)}
    shifted = {a: s + 3.5 for a, s in scores.items()}
    assert pd.bin_scores(scores).assignment == pd.bin_scores(shifted).assignment


def test_reported_design_reconstructs_934_pairs():
    binning = reported_binning()
    pairs = pd.sample_pairs(binning, 44, 22, seed=0)
    assert len(pairs) == 7 * 44 + 10 + 28 * 22 == 934
    counts = {}
    for tag in pairs.strata:
        counts[tag] = counts.get(tag, 0) + 1
    assert counts["intra(8)"] == 10
    assert all(counts[f"intra({b})"] == 44 for b in range(1, 8))
    assert sum(1 for t in counts if t.startswith("inter")) == 28


def test_capping_takes_all_pairs():
    binning = pd.bin_scores({f"a{k}": 50 + k for k in range(5)})
    pairs = pd.sample_pairs(binning, 100, 0)
    assert len(pairs) == math.comb(5, 2)


def test_zero_quotas_give_empty_set():
    assert len(pd.sample_pairs(reported_binning(), 0, 0)) == 0


def test_sampling_is_deterministic_and_order_free():
    scores = reported_design_scores()
    a = pd.sample_pairs(pd.bin_scores(scores), seed=5)
    b = pd.sample_pairs(pd.bin_scores(dict(reversed(list(scores.items())))), seed=5)
    assert a == b
    assert a != pd.sample_pairs(pd.bin_scores(scores), seed=6)


@given(st.integers(0, 2**32 - 1), st.integers(0, 50), st.integers(0, 30))
@settings(max_examples=25, deadline=None)
def test_pairs_respect_their_strata(seed, intra, inter):
    binning = reported_binning()
    pairs = pd.sample_pairs(binning, intra, inter, seed)
    assert len(set(pairs.pairs)) == len(pairs)
    for pair, tag in zip(pairs.pairs, pairs.strata):
        assert pd.stratum_of(pair, binning) == tag
        assert pair[0] < pair[1]


def test_pairset_rejects_duplicates_and_self_pairs():
    with pytest.raises(ValidationError):
        pd.PairSet((("a", "b"), ("b", "a")))
    with pytest.raises(ValidationError):
        pd.PairSet((("a", "a"),))


@pytest.mark.parametrize("pairs, expected", [
    ([("a", "b"), ("b", "c"), ("c", "d")], True),
    ([("a", "b"), ("c", "d")], False),
    ([], False),
])
def test_connectivity(pairs, expected):
    assert pd.check_connectivity(pairs, "abcd") is expected


def test_sample_size():
    assert pd.sample_size_target(100) == pytest.approx(460.517, abs=1e-3)
    assert pd.check_sample_size(range(934), 100)
    assert not pd.check_sample_size(range(400), 100)
    assert pd.check_sample_size(range(2), 2)


def star_binning():
    # hub in bin 1 plus two items in each of the eight deciles 10..90
    scores = {"hub": 10.0}
    for b in range(8):
        for j in range(2):
            scores[f"x{b}{j}"] = 10 * (b + 1) + 1 + j
    return pd.bin_scores(scores)


def test_entropy_examples():
    binning = star_binning()
    spokes = [("hub", f"x{b}{j}") for b in range(8) for j in range(2)]
    ent, summary = pd.node_entropy(spokes, binning, ["hub"])
    assert ent["hub"] == pytest.approx(3.0)
    assert summary["upper_bound"] == 3.0
    ent, _ = pd.node_entropy([("hub", "x00"), ("hub", "x01")], binning, ["hub"])
    assert ent["hub"] == 0.0
    ent, _ = pd.node_entropy([("hub", "x00"), ("hub", "x10")], binning, ["hub"])
    assert ent["hub"] == pytest.approx(1.0)


def test_entropy_rejects_isolated_items():
    with pytest.raises(ValidationError, match="x71"):
        pd.node_entropy([("hub", "x00")], star_binning(), ["hub", "x71"])


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 6))
@settings(max_examples=25, deadline=None)
def test_entropy_bounds(seed, intra, inter):
    binning = reported_binning()
    pairs = pd.sample_pairs(binning, intra, inter, seed)
    ent, _ = pd.node_entropy(pairs, binning, pairs.items())
    assert all(0.0 <= h <= math.log2(binning.n_bins) + 1e-12 for h in ent.values())


def test_diagnostics_of_reported_design():
    binning = reported_binning()
    pairs = pd.sample_pairs(binning, seed=0)
    diag = pd.design_diagnostics(pairs, binning)
    assert diag["connected"] and diag["meets_sample_size"]
    assert diag["n_pairs"] == 934 and diag["n_items"] == 100
