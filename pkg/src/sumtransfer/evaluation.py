"""Summary quality metrics.

Two summaries are compared by matching their frames: a pair qualifies when
the Euclidean feature distance is within a threshold, each frame is used at
most once, and the number of matched pairs is maximized exactly. Precision,
recall and F-score are percentages.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

from .dpp import as_subset
from .errors import ValidationError
from .similarity import as_features, check_boundaries, segment_slices

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class MatchConfig:
    threshold: float = DEFAULT_THRESHOLD
    distance: str = "euclidean"

    def __post_init__(self):
        if not (self.threshold >= 0 and np.isfinite(self.threshold)):
            raise ValidationError(f"match threshold must be >= 0, got {self.threshold}")
        if self.distance != "euclidean":
            raise ValidationError(f"unsupported distance {self.distance!r}")


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f_score: float
    matches: float = 0.0
    pred_size: float = 0.0
    truth_size: float = 0.0


def _edges(A, B, feats_a, feats_b, cfg: MatchConfig) -> np.ndarray:
    Xa = as_features(feats_a)
    Xb = Xa if feats_b is None else as_features(feats_b)
    if Xa.shape[1] != Xb.shape[1]:
        raise ValidationError(f"feature dimension mismatch: {Xa.shape[1]} vs {Xb.shape[1]}")
    A = list(as_subset(sorted(A), Xa.shape[0]))
    B = list(as_subset(sorted(B), Xb.shape[0]))
    if not A or not B:
        return np.zeros((len(A), len(B)), dtype=bool)
    return cdist(Xa[A], Xb[B]) <= cfg.threshold


def max_matching_size(adj: np.ndarray) -> int:
    """Size of a maximum matching in the bipartite graph with biadjacency ``adj``."""
    if adj.size == 0 or not adj.any():
        return 0
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return int(np.sum(match >= 0))


def match_pairs(A: Sequence[int], B: Sequence[int], feats_a, feats_b=None, cfg: MatchConfig = MatchConfig()) -> int:
    """Maximum number of frame pairs within the distance threshold, one use per frame.

    ``feats_b`` defaults to ``feats_a`` (both summaries index the same video).
    """
    return max_matching_size(_edges(A, B, feats_a, feats_b, cfg))


def score(A: Sequence[int], B: Sequence[int], feats_a, feats_b=None, cfg: MatchConfig = MatchConfig()) -> ScoreTriple:
    """Precision and recall of prediction ``A`` against reference ``B``."""
    m = match_pairs(A, B, feats_a, feats_b, cfg)
    na, nb = len(A), len(B)
    p = 100.0 * m / na if na else 0.0
    r = 100.0 * m / nb if nb else 0.0
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return ScoreTriple(p, r, f, float(m), float(na), float(nb))


def aggregate(pred: Sequence[int], users: Sequence[Sequence[int]], feats, cfg: MatchConfig = MatchConfig(),
              mode: str = "mean") -> ScoreTriple:
    """Score against several reference summaries, averaged or best-of."""
    if not users:
        raise ValidationError("aggregate needs at least one user summary")
    triples = [score(pred, u, feats, None, cfg) for u in users]
    if mode == "max":
        return max(triples, key=lambda t: t.f_score)
    if mode != "mean":
        raise ValidationError(f"aggregation mode must be 'mean' or 'max', got {mode!r}")
    cols = np.array([[t.precision, t.recall, t.f_score, t.matches, t.pred_size, t.truth_size] for t in triples])
    return ScoreTriple(*(float(v) for v in cols.mean(axis=0)))


def _lengths(boundaries) -> np.ndarray:
    return np.diff((0,) + tuple(boundaries))


def budgeted_truncate(selected: Sequence[int], L, boundaries: Sequence[int], budget_fraction: float) -> tuple[int, ...]:
    """Cut a segment selection down to a duration budget.

    If the selection already fits, it is returned unchanged. Otherwise the
    selected segments are ranked by their diagonal kernel value (earlier
    segment first on ties) and taken until their total length reaches
    ``budget_fraction`` of the video; the segment that crosses it is kept.
    """
    if not (0 < budget_fraction <= 1):
        raise ValidationError(f"budget fraction must be in (0, 1], got {budget_fraction}")
    ends = check_boundaries(boundaries, boundaries[-1] if len(boundaries) else 0)
    lengths = _lengths(ends)
    sel = as_subset(selected, len(ends))
    diag = np.diag(np.asarray(L, dtype=float))
    if diag.shape[0] != len(ends):
        raise ValidationError(f"kernel has {diag.shape[0]} items, boundaries define {len(ends)} segments")
    budget = budget_fraction * ends[-1]
    if lengths[list(sel)].sum() <= budget + 1e-9:
        return sel
    return tuple(sorted(_take_until(sorted(sel, key=lambda s: (-diag[s], s)), lengths, budget)))


def _take_until(order, lengths, budget) -> list[int]:
    chosen, total = [], 0
    for s in order:
        if total >= budget - 1e-9:
            break
        chosen.append(s)
        total += lengths[s]
    return chosen


def oracle_subshot_summary(user_summaries: Sequence[Sequence[int]], boundaries: Sequence[int],
                           budget_fraction: float) -> tuple[int, ...]:
    """Segment-level training target built from frame-level user votes.

    Each frame scores the number of user summaries containing it; a segment
    scores its mean frame vote. Segments are taken in descending score
    (earlier first on ties) until their total length reaches the budget; the
    segment that crosses it is included.
    """
    if not user_summaries:
        raise ValidationError("need at least one user summary")
    if not (0 < budget_fraction <= 1):
        raise ValidationError(f"budget fraction must be in (0, 1], got {budget_fraction}")
    ends = check_boundaries(boundaries, boundaries[-1] if len(boundaries) else 0)
    n = ends[-1]
    votes = np.zeros(n)
    for u in user_summaries:
        votes[list(as_subset(u, n))] += 1
    seg_score = np.array([votes[sl].mean() for sl in segment_slices(ends)])
    lengths = _lengths(ends)
    budget = budget_fraction * n
    return tuple(sorted(_take_until(sorted(range(len(ends)), key=lambda s: (-seg_score[s], s)), lengths, budget)))


def random_baseline_f(truth: Sequence[int], size: int, feats, cfg: MatchConfig = MatchConfig(),
                      n_draws: int = 1000, rng: np.random.Generator | None = None) -> float:
    """Mean F-score of uniformly random subsets of ``size`` frames against ``truth``."""
    X = as_features(feats)
    rng = rng if rng is not None else np.random.default_rng(0)
    size = min(size, X.shape[0])
    fs = [score(np.sort(rng.choice(X.shape[0], size, replace=False)), truth, X, None, cfg).f_score
          for _ in range(n_draws)]
    return float(np.mean(fs))
