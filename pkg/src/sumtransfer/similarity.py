"""Frame and subshot similarity between a test sequence and an exemplar.

Three frame-level kinds are supported:

* ``dot``: ``u . v``
* ``rbf``: ``exp(-||u - v|| / sigma)`` (plain norm, not squared)
* ``mahalanobis``: ``exp(-(u - v)^T Omega (u - v))``

Segment boundaries are given as end indices: ``(4, 8, 10)`` partitions ten
frames into ``[0, 4)``, ``[4, 8)`` and ``[8, 10)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

KINDS = ("dot", "rbf", "mahalanobis")

_BLOCK = 1 << 22  # max elements in one broadcast difference tensor


@dataclass(frozen=True)
class SimilarityConfig:
    """Similarity kind and its parameters.

    ``metric`` is only used by the mahalanobis kind. ``None`` means the
    identity; a 1-D array is the diagonal of Omega; a 2-D array is a full
    symmetric positive-definite Omega.
    """

    kind: str = "rbf"
    sigma: float = 1.0
    metric: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown similarity kind {self.kind!r}; expected one of {KINDS}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.metric is not None:
            m = np.asarray(self.metric, dtype=float)
            if m.ndim == 1:
                if not np.all(np.isfinite(m)) or np.any(m <= 0):
                    raise ValidationError("diagonal metric entries must be positive and finite")
            elif m.ndim == 2 and m.shape[0] == m.shape[1]:
                if not np.allclose(m, m.T, atol=1e-8):
                    raise ValidationError("full metric must be symmetric")
                if np.linalg.eigvalsh(m)[0] <= 1e-8:
                    raise ValidationError("full metric must be positive definite")
            else:
                raise ValidationError(f"metric must be a vector or square matrix, got shape {m.shape}")
            object.__setattr__(self, "metric", m)

    def with_metric(self, metric) -> "SimilarityConfig":
        return SimilarityConfig(self.kind, self.sigma, metric)


def as_features(X, name: str = "features") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty N x d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contain non-finite values")
    return X


def _check_metric_dim(cfg: SimilarityConfig, d: int) -> None:
    if cfg.kind == "mahalanobis" and cfg.metric is not None and cfg.metric.shape[0] != d:
        raise ValidationError(f"metric has dimension {cfg.metric.shape[0]}, features have {d}")


def frame_sim(u, v, cfg: SimilarityConfig) -> float:
    """Similarity of two feature vectors."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValidationError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValidationError("non-finite feature values")
    _check_metric_dim(cfg, u.shape[0])
    if cfg.kind == "dot":
        return float(u @ v)
    diff = u - v
    if cfg.kind == "rbf":
        return float(np.exp(-np.sqrt(diff @ diff) / cfg.sigma))
    m = cfg.metric
    if m is None:
        q = diff @ diff
    elif m.ndim == 1:
        q = diff @ (m * diff)
    else:
        q = diff @ m @ diff
    return float(np.exp(-q))


def _row_chunks(n: int, per_row: int):
    step = max(1, _BLOCK // max(per_row, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _sim_block(X: np.ndarray, Y: np.ndarray, cfg: SimilarityConfig) -> np.ndarray:
    if cfg.kind == "dot":
        return X @ Y.T
    out = np.empty((X.shape[0], Y.shape[0]))
    m = cfg.metric
    for rows in _row_chunks(X.shape[0], Y.shape[0] * X.shape[1]):
        diff = X[rows, None, :] - Y[None, :, :]
        if cfg.kind == "rbf":
            out[rows] = np.exp(-np.sqrt(np.einsum("ikd,ikd->ik", diff, diff)) / cfg.sigma)
        elif m is None:
            out[rows] = np.exp(-np.einsum("ikd,ikd->ik", diff, diff))
        elif m.ndim == 1:
            out[rows] = np.exp(-np.einsum("ikd,d,ikd->ik", diff, m, diff))
        else:
            out[rows] = np.exp(-np.einsum("ikd,de,ike->ik", diff, m, diff))
    return out


def similarity_matrix(test, exemplar, cfg: SimilarityConfig) -> np.ndarray:
    """N x N_r matrix of ``frame_sim(test[i], exemplar[k])``."""
    X = as_features(test, "test features")
    Y = as_features(exemplar, "exemplar features")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"feature dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    _check_metric_dim(cfg, X.shape[1])
    return _sim_block(X, Y, cfg)


def check_boundaries(ends: Sequence[int], n: int) -> tuple[int, ...]:
    """Validate segment end indices for a sequence of length ``n``."""
    ends = tuple(int(e) for e in ends)
    if not ends:
        raise ValidationError("boundaries must contain at least one segment")
    prev = 0
    for e in ends:
        if e <= prev:
            raise ValidationError(f"boundaries must be strictly increasing and positive, got {list(ends)}")
        prev = e
    if ends[-1] != n:
        raise ValidationError(f"last boundary must equal the sequence length {n}, got {ends[-1]}")
    return ends


def segment_starts(ends: Sequence[int]) -> tuple[int, ...]:
    return (0,) + tuple(ends[:-1])


def segment_slices(ends: Sequence[int]) -> list[slice]:
    return [slice(s, e) for s, e in zip(segment_starts(ends), ends)]


def shot_mean_features(seq, boundaries: Sequence[int]) -> np.ndarray:
    """One unit-norm descriptor per segment: the re-normalized mean frame."""
    X = as_features(seq)
    ends = check_boundaries(boundaries, X.shape[0])
    means = np.add.reduceat(X, list(segment_starts(ends)), axis=0)
    means /= np.diff((0,) + ends)[:, None]
    norms = np.linalg.norm(means, axis=1)
    if np.any(norms <= 1e-12):
        bad = int(np.flatnonzero(norms <= 1e-12)[0])
        raise ValidationError(f"segment {bad} has a zero mean feature vector")
    return means / norms[:, None]


def shot_max_similarity_matrix(test, exemplar, test_bounds, ex_bounds, cfg: SimilarityConfig) -> np.ndarray:
    """Segment-by-segment matrix of the maximum frame-pair similarity."""
    S = similarity_matrix(test, exemplar, cfg)
    tb = check_boundaries(test_bounds, S.shape[0])
    eb = check_boundaries(ex_bounds, S.shape[1])
    rows = np.maximum.reduceat(S, list(segment_starts(tb)), axis=0)
    return np.maximum.reduceat(rows, list(segment_starts(eb)), axis=1)


def shot_max_argmax(S: np.ndarray, test_bounds, ex_bounds) -> tuple[np.ndarray, np.ndarray]:
    """Frame indices (i, k) attaining each segment-pair maximum of ``S``.

    The first maximizer in row-major block order wins.
    """
    tsl, esl = segment_slices(test_bounds), segment_slices(ex_bounds)
    I = np.empty((len(tsl), len(esl)), dtype=np.intp)
    K = np.empty_like(I)
    for a, ra in enumerate(tsl):
        for b, cb in enumerate(esl):
            block = S[ra, cb]
            i, k = np.unravel_index(int(np.argmax(block)), block.shape)
            I[a, b] = ra.start + i
            K[a, b] = cb.start + k
    return I, K
