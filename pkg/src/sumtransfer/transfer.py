"""Nonparametric summary transfer.

A test video's kernel is synthesized from annotated exemplars as

    L = sum_r S_r L_r S_r^T,    L_r = alpha_r * diag(1[n in y_r]),

where S_r holds similarities between test units (frames or subshots) and
exemplar units. Because L_r is diagonal and zero outside y_r, each term is
``alpha_r * A_r A_r^T`` with ``A_r = S_r[:, y_r]``, so only similarities to
summary units are ever computed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dpp
from .errors import ValidationError
from .similarity import (
    SimilarityConfig,
    as_features,
    check_boundaries,
    segment_slices,
    shot_max_similarity_matrix,
    shot_mean_features,
    similarity_matrix,
)

GRANULARITIES = ("frame", "mean", "max")
CATEGORY_MODES = ("none", "hard", "soft")
DEFAULT_ALPHA = 2.0


@dataclass(frozen=True, eq=False)
class Exemplar:
    """An annotated video: features plus a ground-truth frame summary.

    ``segment_summary`` overrides the segment-level target used at subshot
    granularity; when absent it is derived from ``summary`` and
    ``boundaries`` (a segment is selected iff it holds a summary frame).
    ``user_summaries`` keeps every annotator's frame summary for evaluation.
    """

    id: str
    features: np.ndarray
    summary: tuple[int, ...]
    category: str | None = None
    boundaries: tuple[int, ...] | None = None
    segment_summary: tuple[int, ...] | None = None
    user_summaries: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        X = as_features(self.features, f"features of {self.id!r}")
        object.__setattr__(self, "features", X)
        n = X.shape[0]
        try:
            object.__setattr__(self, "summary", dpp.as_subset(self.summary, n))
            if self.boundaries is not None:
                object.__setattr__(self, "boundaries", check_boundaries(self.boundaries, n))
            if self.segment_summary is not None:
                if self.boundaries is None:
                    raise ValidationError("segment_summary given without boundaries")
                seg = dpp.as_subset(self.segment_summary, len(self.boundaries))
                object.__setattr__(self, "segment_summary", seg)
            users = tuple(dpp.as_subset(u, n) for u in self.user_summaries)
        except ValidationError as exc:
            raise ValidationError(f"exemplar {self.id!r}: {exc}") from None
        object.__setattr__(self, "user_summaries", users or (self.summary,))
        if not self.summary:
            raise ValidationError(f"exemplar {self.id!r}: summary must be non-empty")

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    def unit_summary(self, granularity: str) -> tuple[int, ...]:
        """Ground truth in the units used at ``granularity``."""
        if granularity == "frame":
            return self.summary
        if self.boundaries is None:
            raise ValidationError(f"exemplar {self.id!r} has no boundaries; needed at {granularity!r} granularity")
        if self.segment_summary is not None:
            return self.segment_summary
        return frames_to_segment_units(self.summary, self.boundaries)


def frames_to_segment_units(summary: Sequence[int], boundaries: Sequence[int]) -> tuple[int, ...]:
    ends = np.asarray(boundaries)
    return tuple(sorted({int(np.searchsorted(ends, i, side="right")) for i in summary}))


@dataclass
class TransferModel:
    """Exemplar corpus plus the learned scales and similarity settings.

    In ``none`` mode ``alphas`` holds one scale per exemplar. In ``hard`` and
    ``soft`` modes ``category_alphas`` maps each category to a per-exemplar
    vector; hard-mode vectors are zero off-category.
    """

    exemplars: list[Exemplar]
    sim: SimilarityConfig = field(default_factory=SimilarityConfig)
    alphas: np.ndarray | None = None
    category_alphas: dict[str, np.ndarray] = field(default_factory=dict)
    category_mode: str = "none"
    granularity: str = "frame"
    sequential: int | None = None
    include_self: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.category_mode not in CATEGORY_MODES:
            raise ValidationError(f"category_mode must be one of {CATEGORY_MODES}")
        if self.granularity not in GRANULARITIES:
            raise ValidationError(f"granularity must be one of {GRANULARITIES}")
        if self.sequential is not None and (self.sequential < 1 or self.granularity != "frame"):
            raise ValidationError("sequential mode needs a positive segment length and frame granularity")
        R = len(self.exemplars)
        if self.alphas is None:
            self.alphas = np.full(R, DEFAULT_ALPHA)
        self.alphas = _check_alpha_vector(self.alphas, R, "alphas")
        self.category_alphas = {
            c: _check_alpha_vector(a, R, f"alphas for category {c!r}") for c, a in self.category_alphas.items()
        }
        ids = [ex.id for ex in self.exemplars]
        if len(set(ids)) != len(ids):
            raise ValidationError("exemplar ids must be unique")

    @property
    def categories(self) -> list[str]:
        return sorted({ex.category for ex in self.exemplars if ex.category is not None})


def _check_alpha_vector(a, R: int, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (R,):
        raise ValidationError(f"{what} must have one entry per exemplar ({R}), got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValidationError(f"{what} must be finite and nonnegative")
    return a


def idealized_kernel(ex: Exemplar, alpha: float, granularity: str = "frame") -> np.ndarray:
    """alpha * diag(1[n in y_r]) over the exemplar's units."""
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    y = ex.unit_summary(granularity)
    n = ex.n_frames if granularity == "frame" else len(ex.boundaries)
    d = np.zeros(n)
    d[list(y)] = alpha
    return np.diag(d)


def effective_alphas(model: TransferModel, test_category: str | None = None) -> np.ndarray:
    """Per-exemplar scales used to synthesize a kernel for ``test_category``."""
    if model.category_mode == "none":
        return model.alphas
    if test_category is None:
        raise ValidationError(f"{model.category_mode} category mode needs a test category")
    if test_category not in model.category_alphas:
        raise ValidationError(f"no transfer weights for category {test_category!r}")
    a = model.category_alphas[test_category]
    if model.category_mode == "hard":
        mask = np.array([ex.category == test_category for ex in model.exemplars])
        if not mask.any():
            raise ValidationError(f"no exemplars of category {test_category!r}")
        a = np.where(mask, a, 0.0)
    return a


def transfer_columns(test, ex: Exemplar, sim: SimilarityConfig, granularity: str = "frame",
                     test_bounds: Sequence[int] | None = None) -> np.ndarray:
    """A_r = S_r[:, y_r]: similarities of every test unit to the exemplar's summary units."""
    y = list(ex.unit_summary(granularity))
    if granularity == "frame":
        return similarity_matrix(test, ex.features[y], sim)
    if test_bounds is None:
        raise ValidationError(f"{granularity!r} granularity needs test boundaries")
    if granularity == "mean":
        return similarity_matrix(
            shot_mean_features(test, test_bounds), shot_mean_features(ex.features, ex.boundaries)[y], sim
        )
    # max: restrict the exemplar to its summary segments before comparing
    slices = segment_slices(ex.boundaries)
    frames = np.concatenate([ex.features[slices[s]] for s in y])
    sub_ends = np.cumsum([slices[s].stop - slices[s].start for s in y])
    return shot_max_similarity_matrix(test, frames, test_bounds, sub_ends, sim)


def compensated_sum(terms, shape) -> np.ndarray:
    """Elementwise Neumaier summation in iteration order."""
    s = np.zeros(shape)
    c = np.zeros(shape)
    for x in terms:
        t = s + x
        c += np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
        s = t
    return s + c


def _n_units(test, granularity, test_bounds) -> int:
    if granularity == "frame":
        return as_features(test).shape[0]
    if test_bounds is None:
        raise ValidationError(f"{granularity!r} granularity needs test boundaries")
    return len(test_bounds)


def synthesize_kernel(test, model: TransferModel, test_category: str | None = None,
                      test_bounds: Sequence[int] | None = None,
                      alphas: np.ndarray | None = None) -> np.ndarray:
    """L = sum_r S_r L_r S_r^T over the model's exemplars, in corpus order.

    ``alphas`` overrides the model's effective scales. Exemplars with a zero
    scale contribute nothing and are skipped.
    """
    if not model.exemplars:
        raise ValidationError("model has no exemplars")
    X = as_features(test, "test features")
    if test_bounds is not None:
        test_bounds = check_boundaries(test_bounds, X.shape[0])
    a = effective_alphas(model, test_category) if alphas is None else _check_alpha_vector(
        alphas, len(model.exemplars), "alphas")
    n = _n_units(X, model.granularity, test_bounds)

    def terms():
        for ex, alpha in zip(model.exemplars, a):
            if alpha == 0.0:
                continue
            A = transfer_columns(X, ex, model.sim, model.granularity, test_bounds)
            yield alpha * (A @ A.T)

    return compensated_sum(terms(), (n, n))


def summarize(test, model: TransferModel, test_category: str | None = None,
              test_bounds: Sequence[int] | None = None) -> tuple[int, ...]:
    """Greedy MAP summary of the synthesized kernel.

    Returns frame indices at frame granularity and segment indices otherwise.
    """
    L = synthesize_kernel(test, model, test_category, test_bounds)
    return dpp.map_greedy(L)


def summarize_sequential(test, model: TransferModel, boundaries: Sequence[int],
                         test_category: str | None = None) -> tuple[int, ...]:
    """Segment-by-segment extraction conditioned on the previous selection.

    At step t the ground set is segment t plus whatever was picked at step
    t-1; the DPP over it is conditioned on those earlier picks and greedy
    MAP runs over the segment's own frames.
    """
    if model.granularity != "frame":
        raise ValidationError("sequential summarization works at frame granularity")
    X = as_features(test, "test features")
    ends = check_boundaries(boundaries, X.shape[0])
    picked: list[int] = []
    prev: list[int] = []
    for sl in segment_slices(ends):
        units = prev + list(range(sl.start, sl.stop))
        L = synthesize_kernel(X[units], model, test_category)
        if prev:
            L = dpp.condition_on(L, range(len(prev)))
        new = [sl.start + i for i in dpp.map_greedy(L)]
        picked.extend(new)
        prev = new
    return tuple(sorted(picked))


def with_alphas(model: TransferModel, alphas: np.ndarray | None = None,
                category_alphas: Mapping[str, np.ndarray] | None = None) -> TransferModel:
    """Copy of ``model`` with replaced scale parameters."""
    return TransferModel(
        exemplars=model.exemplars,
        sim=model.sim,
        alphas=model.alphas if alphas is None else alphas,
        category_alphas=dict(model.category_alphas if category_alphas is None else category_alphas),
        category_mode=model.category_mode,
        granularity=model.granularity,
        sequential=model.sequential,
        include_self=model.include_self,
        info=dict(model.info),
    )
