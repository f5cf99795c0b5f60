"""Determinantal point process primitives over an explicit L-kernel.

Everything here works in log space. A subset whose principal minor is
numerically singular gets log-probability ``-inf``; callers that need a
finite objective (the learner) handle that themselves.
"""
from __future__ import annotations

from itertools import combinations
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la

from .errors import NumericalError, ValidationError

NEG_INF = float("-inf")

SYM_RTOL = 1e-9
PSD_RTOL = 1e-8
# det(L_y) below this fraction of its Hadamard bound (product of the
# diagonal) counts as zero.
SINGULAR_RTOL = 1e-12
# Log-determinant differences below this are ties.
TIE_TOL = 1e-10
JITTER = 1e-10
MAX_EXACT_DIM = 20

_CHUNK = 16384


def as_kernel(L, check_psd: bool = True) -> np.ndarray:
    """Validate a kernel matrix and return it as a float64 array."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] == 0:
        raise ValidationError(f"kernel must be a non-empty square matrix, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValidationError("kernel has non-finite entries")
    gap = np.abs(L - L.T)
    if np.any(gap > SYM_RTOL * np.maximum(1.0, np.abs(L))):
        raise ValidationError(f"kernel is not symmetric (max asymmetry {gap.max():.3g})")
    if check_psd:
        n = L.shape[0]
        floor = -PSD_RTOL * max(np.trace(L) / n, 0.0)
        lo = la.eigvalsh(L, subset_by_index=[0, 0])[0]
        if lo < floor and lo < -1e-300:
            raise ValidationError(f"kernel is not PSD (smallest eigenvalue {lo:.3g})")
    return L


def as_subset(y: Iterable[int], n: int) -> tuple[int, ...]:
    """Validate a subset of ``range(n)``: strictly increasing, in bounds."""
    idx = tuple(int(i) for i in y)
    for a, b in zip(idx, idx[1:]):
        if b <= a:
            raise ValidationError(f"subset must be strictly increasing, got {list(idx)}")
    if idx and (idx[0] < 0 or idx[-1] >= n):
        raise ValidationError(f"subset {list(idx)} out of range for ground set of size {n}")
    return idx


def _chol(A: np.ndarray, jitter: bool = True) -> np.ndarray | None:
    """Lower Cholesky factor with one jittered retry, or None."""
    try:
        return la.cholesky(A, lower=True, check_finite=False)
    except la.LinAlgError:
        if not jitter:
            return None
    n = A.shape[0]
    jit = JITTER * max(np.trace(A) / n, 1e-300)
    try:
        return la.cholesky(A + jit * np.eye(n), lower=True, check_finite=False)
    except la.LinAlgError:
        return None


def logdet_psd(A: np.ndarray) -> float:
    """log det of a PSD matrix, ``-inf`` if it is singular within tolerance."""
    if A.shape[0] == 0:
        return 0.0
    diag = np.diag(A)
    if np.any(diag <= 0.0):
        return NEG_INF
    # a minor that needs jitter to factor is singular to working precision
    C = _chol(A, jitter=False)
    if C is None:
        return NEG_INF
    value = 2.0 * float(np.sum(np.log(np.diag(C))))
    if value - float(np.sum(np.log(diag))) < np.log(SINGULAR_RTOL):
        return NEG_INF
    return value


def _log_partition(L: np.ndarray) -> float:
    C = _chol(L + np.eye(L.shape[0]))
    if C is None:
        raise NumericalError("Cholesky factorization of L + I failed after jitter")
    return 2.0 * float(np.sum(np.log(np.diag(C))))


def log_partition(L) -> float:
    """log det(L + I), the log normalizer of the DPP."""
    return _log_partition(as_kernel(L))


def subset_log_prob(L, y: Sequence[int]) -> float:
    """log P(y) = log det(L_y) - log det(L + I).

    Returns ``-inf`` when det(L_y) is numerically zero.
    """
    L = as_kernel(L)
    idx = list(as_subset(y, L.shape[0]))
    return logdet_psd(L[np.ix_(idx, idx)]) - _log_partition(L)


def _batched_logdet(L: np.ndarray, combos: np.ndarray) -> np.ndarray:
    sub = L[combos[:, :, None], combos[:, None, :]]
    sign, value = np.linalg.slogdet(sub)
    diag = np.diagonal(sub, axis1=1, axis2=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        hadamard = np.sum(np.log(diag), axis=1)
    with np.errstate(invalid="ignore"):
        bad = (sign <= 0) | np.any(diag <= 0, axis=1) | (value - hadamard < np.log(SINGULAR_RTOL))
    return np.where(bad, NEG_INF, value)


def map_exact(L, max_dim: int = MAX_EXACT_DIM) -> tuple[int, ...]:
    """Exhaustive MAP: the subset maximizing det(L_y).

    Ties go to the smaller subset, then the lexicographically smallest one.
    """
    L = as_kernel(L)
    n = L.shape[0]
    if n > max_dim:
        raise ValidationError(f"map_exact enumerates 2^N subsets; N={n} exceeds guard {max_dim}")
    best_val, best = 0.0, ()  # the empty set, det = 1
    for k in range(1, n + 1):
        it = combinations(range(n), k)
        while True:
            chunk = list(_take(it, _CHUNK))
            if not chunk:
                break
            combos = np.array(chunk, dtype=np.intp)
            vals = _batched_logdet(L, combos)
            top = vals.max()
            if top > best_val + TIE_TOL:
                first = int(np.flatnonzero(vals >= top - TIE_TOL)[0])
                best_val, best = float(vals[first]), tuple(chunk[first])
    return best


def _take(it, n):
    for _, item in zip(range(n), it):
        yield item


def map_greedy(L) -> tuple[int, ...]:
    """Greedy MAP by determinant ascent with strict-improvement stopping.

    Starts from the empty set and repeatedly adds the item that maximizes
    det(L_{y+i}); stops once no addition increases the determinant. Marginal
    gains are tracked with an incremental Cholesky factor, so the cost is
    O(N * |y|^2) after validation.
    """
    L = as_kernel(L)
    return _greedy(L)


def _greedy(L: np.ndarray) -> tuple[int, ...]:
    n = L.shape[0]
    gains = np.diag(L).copy()
    rows = np.zeros((0, n))
    chosen: list[int] = []
    available = np.ones(n, dtype=bool)
    while available.any():
        masked = np.where(available, gains, -np.inf)
        top = masked.max()
        if not top > 1.0 + TIE_TOL:
            break
        j = int(np.flatnonzero(masked >= top * (1.0 - 1e-12))[0])
        e = (L[j] - rows[:, j] @ rows) / np.sqrt(gains[j])
        rows = np.vstack([rows, e])
        gains = gains - e * e
        chosen.append(j)
        available[j] = False
    return tuple(sorted(chosen))


def condition_on(L, forced: Sequence[int]) -> np.ndarray:
    """Kernel over the remaining items given that every item of ``forced`` is selected.

    Uses the Schur complement L_cc - L_cf L_ff^{-1} L_fc, which equals
    ([(L + I_c)^{-1}]_c)^{-1} - I whenever the forced minor is invertible.
    Row/column order of the result follows the remaining indices ascending.
    """
    L = as_kernel(L)
    f = list(as_subset(forced, L.shape[0]))
    if not f:
        return L.copy()
    rest = [i for i in range(L.shape[0]) if i not in set(f)]
    Lff = L[np.ix_(f, f)]
    if logdet_psd(Lff) == NEG_INF:
        raise NumericalError(f"cannot condition on {f}: the forced set has zero probability")
    C = la.cholesky(Lff, lower=True)
    W = la.solve_triangular(C, L[np.ix_(f, rest)], lower=True)
    out = L[np.ix_(rest, rest)] - W.T @ W
    return 0.5 * (out + out.T)
