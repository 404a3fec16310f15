"""Small synthetic corpus exercising every stage of the pipeline.

Arguments are political (with a latent position in [12, 88]), apolitical,
or ambiguous. Six "careful" models score political arguments around their
latent position and answer NA on apolitical ones; on ambiguous arguments
half of them always answer NA, so the careful-model ensemble sits at an NA
probability of exactly 0.5. Two "hesitant" models answer NA far more often
and fail the high-confidence rule. Human annotations are drawn from the
same latent positions with label noise.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import yaml

from dualscale import corpus_io, pair_design, pointwise_eval, prediction_stats
from dualscale.corpus_io import PairwiseAnnotation, PointwiseAnnotation, PredictionRecord

CAREFUL = [f"m{k}" for k in range(1, 7)]
HESITANT = ["h1", "h2"]
N_REPS = 5


def _arguments(rng, n_political, n_apolitical, n_ambiguous):
    kinds = ["pol"] * n_political + ["apol"] * n_apolitical + ["amb"] * n_ambiguous
    positions = {}
    args = []
    for k, kind in enumerate(kinds):
        arg = f"a{k:04d}"
        args.append((arg, kind))
        positions[arg] = float(rng.uniform(12.0, 88.0)) if kind != "apol" else None
    return args, positions


def _predictions(rng, args, positions):
    records = []
    for m_idx, model in enumerate(CAREFUL + HESITANT):
        noise = 3.0 + 1.5 * m_idx
        for arg, kind in args:
            for rep in range(1, N_REPS + 1):
                if model in HESITANT:
                    na = kind != "pol" or rep <= 3
                elif kind == "apol":
                    na = True
                elif kind == "amb":
                    na = m_idx % 2 == 0
                else:
                    na = False
                if na:
                    score = None
                else:
                    score = float(np.clip(round(positions[arg] + rng.normal(0, noise)), 0, 100))
                records.append(PredictionRecord(model, arg, rep, score))
    return records


def _pointwise(rng, dataset, kinds):
    annotations = []
    argument_ids = sorted(dataset.members)
    n_annotators = max(1, len(argument_ids) * 3 // 5)
    for k, arg in enumerate(argument_ids):
        for r in range(3):
            annotator = f"p{(k * 3 + r) % n_annotators:03d}"
            if kinds[arg] == "amb":
                political = rng.random() < 0.5
            else:
                political = (rng.random() < 0.85) == (kinds[arg] == "pol")
            annotations.append(PointwiseAnnotation(annotator, arg, "political" if political else "apolitical"))
    # distinct arguments never share an annotator slot twice, so (annotator, argument) stays unique
    return annotations


def _pairwise(rng, pairs, positions):
    annotations = []
    counter = itertools.count()
    for a, b in pairs:
        p_right = 1.0 / (1.0 + np.exp(-(positions[a] - positions[b]) / 8.0))
        for framing in ("right", "left"):
            for _ in range(3):
                u = rng.random()
                if u < 0.15:
                    choice = "equal"
                else:
                    a_more_right = rng.random() < p_right
                    picks_a = a_more_right if framing == "right" else not a_more_right
                    choice = "first" if picks_a else "second"
                annotations.append(PairwiseAnnotation(f"q{next(counter):05d}", a, b, framing, choice))
    return annotations


def generate_fixture(out_dir: str | Path, seed: int = 7, n_political: int = 160, n_apolitical: int = 100,
                     n_ambiguous: int = 40, n_pair_items: int = 40, bucket_counts=None,
                     intra_per_bin: int = 6, inter_per_binpair: int = 2) -> Path:
    """Write predictions, annotations, arguments and a config into ``out_dir``.

    Returns the path of the written ``config.yaml``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    args, positions = _arguments(rng, n_political, n_apolitical, n_ambiguous)
    kinds = dict(args)
    records = _predictions(rng, args, positions)

    careful = prediction_stats.EnsembleSpec("E3", tuple(CAREFUL))
    reference = prediction_stats.pool_ensemble(careful, records)
    counts = bucket_counts or {"H_pol": 30, "L": 20, "H_apol": 30}
    dataset = pointwise_eval.sample_dataset(reference, counts, seed)
    pointwise = _pointwise(rng, dataset, kinds)

    political = sorted(a for a, k in args if k == "pol")
    chosen = sorted(rng.choice(political, size=min(n_pair_items, len(political)), replace=False))
    means = {s.argument_id: s.mean_score for s in reference if s.argument_id in set(chosen)}
    binning = pair_design.bin_scores(means)
    pairs = pair_design.sample_pairs(binning, intra_per_bin, inter_per_binpair, seed)
    pairwise = _pairwise(rng, pairs.pairs, positions)

    corpus_io.dump_predictions(records, out / "predictions.csv")
    corpus_io.dump_annotations(pointwise, out / "pointwise.csv")
    corpus_io.dump_annotations(pairwise, out / "pairwise.csv")
    (out / "arguments.csv").write_text(
        "argument_id,debate_id,locution,proposition\n"
        + "".join(f"{a},d{int(a[1:]) % 3},,\n" for a, _ in args),
        encoding="utf-8",
    )
    config = {
        "predictions": "predictions.csv",
        "pointwise": "pointwise.csv",
        "pairwise": "pairwise.csv",
        "arguments": "arguments.csv",
        "output_dir": "out",
        "ensembles": {
            "E1": {"members": "all"},
            "E2": {"members": CAREFUL[:3]},
            "E3": {"select": "high_confidence"},
        },
        "reference_ensemble": "E3",
        "bucket_counts": counts,
        "intra_per_bin": intra_per_bin,
        "inter_per_binpair": inter_per_binpair,
        "seed": seed,
    }
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path
