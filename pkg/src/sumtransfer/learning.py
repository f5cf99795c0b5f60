"""Maximum-likelihood learning of the transfer scales and metric.

Every training video q is treated as a test video: its kernel is
synthesized from the corpus (itself included unless ``include_self`` is
off) and the objective is sum_q log P(y_q; L_q). Parameters are kept in
log space, alpha_r = exp(beta_r) and Omega_dd = exp(omega_log_d), so
every iterate stays positive.

With G = M - (L + I)^{-1}, where M holds (L_y)^{-1} on the y block and
zeros elsewhere, the derivatives used below are

    d log P / d alpha_r = sum_{k in y_r} (A_r^T G A_r)_kk
    d log P / d w_d     = -2 sum_ik C_ik (x_id - y_kd)^2,  C = alpha_r (G A_r) o A_r

with A_r the similarity columns of exemplar r's summary units.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from . import dpp
from .errors import NumericalError, ValidationError
from .similarity import (
    SimilarityConfig,
    check_boundaries,
    segment_slices,
    shot_max_argmax,
    shot_mean_features,
    similarity_matrix,
)
from .transfer import CATEGORY_MODES, DEFAULT_ALPHA, GRANULARITIES, Exemplar, TransferModel

log = logging.getLogger(__name__)

MODEL_FORMAT = "sumtransfer-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LearnConfig:
    sim: SimilarityConfig = field(default_factory=SimilarityConfig)
    granularity: str = "frame"
    mode: str = "none"
    learn_metric: bool = False
    include_self: bool = True
    iters: int = 200
    step: float = 0.5
    max_halvings: int = 20
    penalty: float = 1e6
    gtol: float = 1e-9

    def __post_init__(self):
        if self.mode not in CATEGORY_MODES:
            raise ValidationError(f"mode must be one of {CATEGORY_MODES}")
        if self.granularity not in GRANULARITIES:
            raise ValidationError(f"granularity must be one of {GRANULARITIES}")
        if self.learn_metric and self.sim.kind != "mahalanobis":
            raise ValidationError("metric learning needs the mahalanobis similarity")
        if self.learn_metric and self.sim.metric is not None and self.sim.metric.ndim != 1:
            raise ValidationError("only a diagonal metric can be learned")
        if self.iters < 0 or not self.step > 0:
            raise ValidationError("iters must be >= 0 and step > 0")


@dataclass
class LearnState:
    """Optimization variables.

    ``beta`` is a length-R vector in ``none`` mode and a (C, R) array with
    one row per entry of ``categories`` otherwise. ``omega_log`` is the log
    of the diagonal metric, or None when the similarity has no learnable
    metric.
    """

    beta: np.ndarray
    omega_log: np.ndarray | None = None
    categories: tuple[str, ...] = ()
    step_size: float = 0.5
    iteration: int = 0
    objective_trace: list[float] = field(default_factory=list)

    @property
    def alphas(self) -> np.ndarray:
        return np.exp(self.beta)

    @property
    def metric(self) -> np.ndarray | None:
        return None if self.omega_log is None else np.exp(self.omega_log)


def init_state(corpus: Sequence[Exemplar], cfg: LearnConfig) -> LearnState:
    """alpha = 2 everywhere; Omega from the config (identity if unset)."""
    R = len(corpus)
    cats = _categories(corpus) if cfg.mode != "none" else ()
    shape = (len(cats), R) if cats else (R,)
    omega = None
    if cfg.sim.kind == "mahalanobis" and (cfg.sim.metric is None or cfg.sim.metric.ndim == 1):
        d = corpus[0].features.shape[1]
        omega = np.zeros(d) if cfg.sim.metric is None else np.log(cfg.sim.metric)
    return LearnState(np.full(shape, math.log(DEFAULT_ALPHA)), omega, cats, cfg.step)


def _categories(corpus) -> tuple[str, ...]:
    missing = [ex.id for ex in corpus if ex.category is None]
    if missing:
        raise ValidationError(f"category modes need a category for every video; missing for {missing}")
    return tuple(sorted({ex.category for ex in corpus}))


def _check_corpus(corpus: Sequence[Exemplar]) -> None:
    if len(corpus) < 2:
        raise ValidationError(f"learning needs at least 2 training videos, got {len(corpus)}")
    dims = {ex.features.shape[1] for ex in corpus}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent feature dimensions in corpus: {sorted(dims)}")


class _Problem:
    """Per-(query, source) similarity blocks for one corpus and granularity."""

    def __init__(self, corpus: Sequence[Exemplar], sim: SimilarityConfig, granularity: str, include_self: bool):
        _check_corpus(corpus)
        self.corpus = list(corpus)
        self.sim = sim
        self.granularity = granularity
        self.include_self = include_self
        self.targets = [list(ex.unit_summary(granularity)) for ex in corpus]
        if granularity == "mean":
            self.units = [shot_mean_features(ex.features, ex.boundaries) for ex in corpus]
        else:
            self.units = [ex.features for ex in corpus]
        self.sizes = [len(ex.boundaries) if granularity != "frame" else ex.n_frames for ex in corpus]
        if granularity == "max":
            self.sources = []
            for ex, y in zip(corpus, self.targets):
                sl = segment_slices(ex.boundaries)
                frames = np.concatenate([ex.features[sl[s]] for s in y])
                ends = check_boundaries(np.cumsum([sl[s].stop - sl[s].start for s in y]), len(frames))
                self.sources.append((frames, ends))
        else:
            self.sources = [(u[y], None) for u, y in zip(self.units, self.targets)]
        self._cache: dict = {}

    def blocks(self, metric: np.ndarray | None):
        """List over q of lists over r of (A, sqdiff-or-None); A is None when r is skipped."""
        key = None if metric is None else metric.tobytes()
        if key in self._cache:
            return self._cache[key]
        sim = self.sim if metric is None else self.sim.with_metric(metric)
        out = []
        for q, exq in enumerate(self.corpus):
            row = []
            for r, (Y, ends) in enumerate(self.sources):
                if r == q and not self.include_self:
                    row.append((None, None))
                    continue
                if self.granularity == "max":
                    S = similarity_matrix(exq.features, Y, sim)
                    I, K = shot_max_argmax(S, exq.boundaries, ends)
                    A = S[I, K]
                    diff = exq.features[I] - Y[K]
                    row.append((A, diff * diff))
                else:
                    row.append((similarity_matrix(self.units[q], Y, sim), None))
            out.append(row)
        self._cache = {key: out}
        return out


def _kernel(A_list, alphas: np.ndarray, n: int) -> np.ndarray:
    L = np.zeros((n, n))
    for A, a in zip(A_list, alphas):
        if A is not None and a != 0.0:
            L += a * (A @ A.T)
    return 0.5 * (L + L.T)


def _evaluate(prob: _Problem, alpha_rows: list[np.ndarray], metric, need_grad: bool, penalty: float):
    """Log-likelihood, per-query alpha gradients and the diagonal-metric gradient.

    ``alpha_rows[q]`` is the scale vector used to synthesize query q's kernel.
    """
    blocks = prob.blocks(metric)
    total = 0.0
    bad = []
    g_alpha = [None] * len(prob.corpus)
    g_w = None
    if need_grad and metric is not None:
        g_w = np.zeros(prob.units[0].shape[1])
    for q, ex in enumerate(prob.corpus):
        y = prob.targets[q]
        n = prob.sizes[q]
        A_list = [b[0] for b in blocks[q]]
        L = _kernel(A_list, alpha_rows[q], n)
        num = dpp.logdet_psd(L[np.ix_(y, y)])
        C = dpp._chol(L + np.eye(n))
        if C is None:
            raise NumericalError(f"factorization of L + I failed for training video {ex.id!r}")
        lp = num - 2.0 * float(np.sum(np.log(np.diag(C))))
        if num == dpp.NEG_INF:
            bad.append(ex.id)
            total -= penalty
            if need_grad:
                raise NumericalError(
                    f"ground-truth summary of training video {ex.id!r} has zero probability; "
                    "its gradient is undefined")
            continue
        total += lp
        if not need_grad:
            continue
        inv = la.cho_solve((C, True), np.eye(n))
        G = -inv
        G[np.ix_(y, y)] += la.inv(L[np.ix_(y, y)])
        G = 0.5 * (G + G.T)
        ga = np.zeros(len(A_list))
        for r, (A, sq) in enumerate(blocks[q]):
            if A is None:
                continue
            GA = G @ A
            ga[r] = float(np.sum(A * GA))
            if g_w is not None and alpha_rows[q][r] != 0.0:
                Cm = alpha_rows[q][r] * GA * A
                if sq is not None:
                    g_w += -2.0 * np.einsum("ab,abd->d", Cm, sq)
                else:
                    X, Y = prob.units[q], prob.sources[r][0]
                    g_w += -2.0 * (Cm.sum(1) @ (X * X) + Cm.sum(0) @ (Y * Y)
                                   - 2.0 * np.einsum("id,ik,kd->d", X, Cm, Y))
        g_alpha[q] = ga
    if bad:
        log.warning("zero-probability ground truth for %s; applied penalty %g each", bad, penalty)
    return total, g_alpha, g_w, bad


def _alpha_rows(state: LearnState, corpus, mode: str) -> list[np.ndarray]:
    if mode == "none":
        a = state.alphas
        return [a] * len(corpus)
    A = state.alphas
    index = {c: i for i, c in enumerate(state.categories)}
    rows = []
    for ex in corpus:
        if ex.category not in index:
            raise ValidationError(f"training video {ex.id!r} has category {ex.category!r} not in the state")
        row = A[index[ex.category]]
        if mode == "hard":
            row = np.where([e.category == ex.category for e in corpus], row, 0.0)
        rows.append(row)
    return rows


def _problem_for(corpus, cfg: LearnConfig) -> _Problem:
    return _Problem(corpus, cfg.sim, cfg.granularity, cfg.include_self)


def leave_self_in_nll(state: LearnState, corpus: Sequence[Exemplar], cfg: LearnConfig, _prob=None) -> float:
    """-sum_q log P(y_q; L_q) with each training video treated as a test video.

    A zero-probability ground truth contributes ``cfg.penalty`` instead of
    infinity and is logged.
    """
    prob = _prob or _problem_for(corpus, cfg)
    ll, _, _, _ = _evaluate(prob, _alpha_rows(state, corpus, cfg.mode), state.metric, False, cfg.penalty)
    return -ll


def _gradients(state, corpus, cfg, prob=None):
    prob = prob or _problem_for(corpus, cfg)
    rows = _alpha_rows(state, corpus, cfg.mode)
    ll, g_rows, g_w, _ = _evaluate(prob, rows, state.metric, True, cfg.penalty)
    if cfg.mode == "none":
        g_beta = np.sum(g_rows, axis=0) * state.alphas
    else:
        g_beta = np.zeros_like(state.beta)
        index = {c: i for i, c in enumerate(state.categories)}
        for ex, row, g in zip(corpus, rows, g_rows):
            i = index[ex.category]
            g_beta[i] += np.where(row != 0.0, g, 0.0) if cfg.mode == "hard" else g
        g_beta *= state.alphas
    g_omega = None if g_w is None else g_w * state.metric
    return ll, g_beta, g_omega


def grad_alpha(state: LearnState, corpus: Sequence[Exemplar], cfg: LearnConfig) -> np.ndarray:
    """Gradient of the log-likelihood with respect to beta = log(alpha).

    Shape matches ``state.beta``. Off-category entries are zero in hard mode.
    """
    return _gradients(state, corpus, cfg)[1]


def grad_metric(state: LearnState, corpus: Sequence[Exemplar], cfg: LearnConfig, form: str = "log") -> np.ndarray:
    """Gradient of the log-likelihood with respect to the diagonal metric.

    ``form="log"`` (default) differentiates with respect to omega_log.
    ``form="printed"`` evaluates the matrix expression
    ``4 Omega (Phi C Phi_r^T + Phi_r C^T Phi^T - Phi C1 Phi^T - Phi_r C2 Phi_r^T)``
    summed over exemplars and returns its diagonal. It equals twice the
    ``log`` form, i.e. it is the derivative for Omega = W^2 taken with
    respect to W and then multiplied by W. Only frame and mean granularity
    support the printed form.
    """
    if cfg.sim.kind != "mahalanobis" or state.omega_log is None:
        raise ValidationError("grad_metric needs a diagonal mahalanobis metric")
    if form == "log":
        return _gradients(state, corpus, cfg)[2]
    if form != "printed":
        raise ValidationError(f"unknown gradient form {form!r}")
    if cfg.granularity == "max":
        raise ValidationError("the printed form has no max-granularity counterpart")
    return _printed_metric_gradient(state, corpus, cfg)


def _printed_metric_gradient(state, corpus, cfg) -> np.ndarray:
    prob = _problem_for(corpus, cfg)
    rows = _alpha_rows(state, corpus, cfg.mode)
    blocks = prob.blocks(state.metric)
    Omega = np.diag(state.metric)
    total = np.zeros_like(Omega)
    for q in range(len(corpus)):
        y = prob.targets[q]
        n = len(prob.units[q])
        L = _kernel([b[0] for b in blocks[q]], rows[q], n)
        M = np.zeros((n, n))
        M[np.ix_(y, y)] = la.inv(L[np.ix_(y, y)])
        G = M - la.inv(L + np.eye(n))
        Phi = prob.units[q].T
        for r, (A_sum, _) in enumerate(blocks[q]):
            if A_sum is None or rows[q][r] == 0.0:
                continue
            # full S_r and L_r: non-summary columns of S_r L_r vanish
            Phi_r = prob.units[r].T
            S = similarity_matrix(prob.units[q], prob.units[r], prob.sim.with_metric(state.metric))
            Lr = np.zeros(Phi_r.shape[1])
            Lr[prob.targets[r]] = rows[q][r]
            Cr = (G @ S * Lr) * S
            C1 = np.diag(Cr.sum(axis=1))
            C2 = np.diag(Cr.sum(axis=0))
            inner = Phi @ Cr @ Phi_r.T + Phi_r @ Cr.T @ Phi.T - (Phi @ C1 @ Phi.T + Phi_r @ C2 @ Phi_r.T)
            total += 4.0 * Omega @ inner
    return np.diag(total).copy()


def finite_difference_oracle(state: LearnState, corpus: Sequence[Exemplar], cfg: LearnConfig, h: float = 1e-5,
                             objective: Callable[[LearnState], float] | None = None) -> dict:
    """Central differences of ``objective`` (default: the NLL) in every coordinate.

    Returns ``{"beta": ..., "omega_log": ...}`` shaped like the state.
    """
    if not h > 0:
        raise ValidationError("h must be positive")
    if objective is None:
        prob = _problem_for(corpus, cfg)
        objective = lambda s: leave_self_in_nll(s, corpus, cfg, _prob=prob)  # noqa: E731

    def diff(name):
        base = getattr(state, name)
        if base is None:
            return None
        out = np.zeros_like(base, dtype=float)
        for idx in np.ndindex(base.shape):
            up, dn = base.copy(), base.copy()
            up[idx] += h
            dn[idx] -= h
            out[idx] = (objective(replace(state, **{name: up})) - objective(replace(state, **{name: dn}))) / (2 * h)
        return out

    return {"beta": diff("beta"), "omega_log": diff("omega_log")}


def _ascend(value: Callable, value_grad: Callable, theta: np.ndarray, cfg: LearnConfig):
    """Gradient ascent with backtracking; returns (theta, trace, info)."""
    f, g = value_grad(theta)
    trace = [f]
    step = cfg.step
    info = {"converged": False, "warning": None, "iterations": 0}
    for it in range(cfg.iters):
        if np.max(np.abs(g)) < cfg.gtol:
            info["converged"] = True
            break
        for _ in range(cfg.max_halvings + 1):
            cand = theta + step * g
            fc = value(cand)
            if fc > f:
                break
            step *= 0.5
        else:
            info["warning"] = "line search found no ascent step; returning best iterate"
            break
        theta = cand
        f, g = value_grad(theta)
        trace.append(f)
        info["iterations"] = it + 1
        step = min(2.0 * step, cfg.step)
    return theta, trace, info


def _fit_state(corpus, cfg: LearnConfig, state: LearnState) -> tuple[LearnState, dict]:
    """Optimize every free coordinate of ``state`` jointly."""
    prob = _problem_for(corpus, cfg)
    learn_w = cfg.learn_metric and state.omega_log is not None
    mask = np.ones(state.beta.shape, dtype=bool)
    if cfg.mode == "hard":
        for i, c in enumerate(state.categories):
            mask[i] = [ex.category == c for ex in corpus]
    free = mask.ravel()

    def unpack(theta):
        beta = state.beta.copy().ravel()
        beta[free] = theta[: free.sum()]
        omega = theta[free.sum():] if learn_w else state.omega_log
        return replace(state, beta=beta.reshape(state.beta.shape), omega_log=omega)

    def value(theta):
        return -leave_self_in_nll(unpack(theta), corpus, cfg, _prob=prob)

    def value_grad(theta):
        ll, gb, gw = _gradients(unpack(theta), corpus, cfg, prob)
        parts = [gb.ravel()[free]]
        if learn_w:
            parts.append(gw)
        return ll, np.concatenate(parts)

    theta0 = state.beta.ravel()[free]
    if learn_w:
        theta0 = np.concatenate([theta0, state.omega_log])
    theta, trace, info = _ascend(value, value_grad, theta0, cfg)
    out = unpack(theta)
    out.objective_trace = trace
    out.iteration = info["iterations"]
    return out, info


def fit(corpus: Sequence[Exemplar], cfg: LearnConfig = LearnConfig()) -> TransferModel:
    """Fit transfer scales (and optionally the metric) by maximum likelihood.

    In hard and soft modes without metric learning each category is fitted
    independently: hard mode on the category's own videos, soft mode on the
    category's queries against the whole corpus. With metric learning the
    shared metric couples the categories, so all parameters move together.
    """
    corpus = list(corpus)
    _check_corpus(corpus)
    state = init_state(corpus, cfg)
    infos = {}
    if cfg.mode == "none" or cfg.learn_metric:
        state, info = _fit_state(corpus, cfg, state)
        infos["all"] = info
    else:
        rows = state.beta.copy()
        traces = []
        for i, c in enumerate(state.categories):
            members = [j for j, ex in enumerate(corpus) if ex.category == c]
            if cfg.mode == "hard":
                sub = [corpus[j] for j in members]
                sub_cfg = replace(cfg, mode="none")
                if len(sub) == 1:
                    sub_state, info = init_state(sub, sub_cfg), {"converged": False, "warning":
                                                                 "single-video category left at initialization",
                                                                 "iterations": 0}
                else:
                    sub_state, info = _fit_state(sub, sub_cfg, init_state(sub, sub_cfg))
                rows[i] = 0.0
                rows[i, members] = sub_state.beta
                sub_trace = sub_state.objective_trace
            else:
                cat_state = replace(state, beta=state.beta[i:i + 1].copy(), categories=(c,))
                cat_state, info = _fit_category_soft(corpus, members, cfg, cat_state)
                rows[i] = cat_state.beta[0]
                sub_trace = cat_state.objective_trace
            infos[c] = info
            traces.append(sub_trace)
        state.beta = rows
        state.objective_trace = _sum_traces(traces)
    return _to_model(corpus, cfg, state, infos)


def _fit_category_soft(corpus, members, cfg, cat_state):
    """Soft mode, one category: queries are the category's videos, sources are all videos."""
    sub = _SubProblem(_problem_for(corpus, cfg), members)

    def value(theta):
        return _soft_eval(sub, theta, cfg, need_grad=False)[0]

    def value_grad(theta):
        return _soft_eval(sub, theta, cfg, need_grad=True)

    theta, trace, info = _ascend(value, value_grad, cat_state.beta[0].copy(), cfg)
    out = replace(cat_state, beta=theta[None, :])
    out.objective_trace = trace
    out.iteration = info["iterations"]
    return out, info


def _soft_eval(sub: "_SubProblem", beta: np.ndarray, cfg: LearnConfig, need_grad: bool):
    alpha = np.exp(beta)
    ll, g_rows, _, _ = _evaluate(sub, [alpha] * len(sub.corpus), None, need_grad, cfg.penalty)
    if not need_grad:
        return ll, None
    return ll, np.sum(g_rows, axis=0) * alpha


class _SubProblem:
    """Restricts the queries of a problem while keeping every source."""

    def __init__(self, prob: _Problem, queries: list[int]):
        self._prob = prob
        self._q = queries
        self.corpus = [prob.corpus[q] for q in queries]
        self.targets = [prob.targets[q] for q in queries]
        self.units = [prob.units[q] for q in queries]
        self.sizes = [prob.sizes[q] for q in queries]
        self.sources = prob.sources

    def blocks(self, metric):
        full = self._prob.blocks(metric)
        return [full[q] for q in self._q]


def _sum_traces(traces: list[list[float]]) -> list[float]:
    """Combine per-category traces into one non-decreasing total (finished fits hold their last value)."""
    if not traces:
        return []
    n = max(len(t) for t in traces)
    return [float(sum(t[min(i, len(t) - 1)] for t in traces)) for i in range(n)]


def _to_model(corpus, cfg: LearnConfig, state: LearnState, infos: dict) -> TransferModel:
    sim = cfg.sim if state.omega_log is None else cfg.sim.with_metric(state.metric)
    info = {
        "iterations": max((i["iterations"] for i in infos.values()), default=0),
        "converged": all(i["converged"] for i in infos.values()),
        "warnings": {k: i["warning"] for k, i in infos.items() if i["warning"]},
        "objective_trace": [float(v) for v in state.objective_trace],
    }
    kwargs = dict(exemplars=corpus, sim=sim, category_mode=cfg.mode, granularity=cfg.granularity,
                  include_self=cfg.include_self, info=info)
    if cfg.mode == "none":
        return TransferModel(alphas=state.alphas, **kwargs)
    cat = {c: state.alphas[i] for i, c in enumerate(state.categories)}
    if cfg.mode == "hard":
        for i, c in enumerate(state.categories):
            cat[c] = np.where([ex.category == c for ex in corpus], cat[c], 0.0)
    return TransferModel(category_alphas=cat, **kwargs)


# -- serialization ---------------------------------------------------------

def model_to_dict(model: TransferModel, corpus_hash: str | None = None) -> dict:
    ids = [ex.id for ex in model.exemplars]
    if model.category_mode == "none":
        alphas = {i: float(a) for i, a in zip(ids, model.alphas)}
    else:
        alphas = {c: {i: float(a) for i, a in zip(ids, v)} for c, v in sorted(model.category_alphas.items())}
    metric = model.sim.metric
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "similarity": {
            "kind": model.sim.kind,
            "sigma": float(model.sim.sigma),
            "metric": None if metric is None else metric.tolist(),
        },
        "category_mode": model.category_mode,
        "granularity": model.granularity,
        "sequential": model.sequential,
        "include_self": model.include_self,
        "exemplars": ids,
        "alphas": alphas,
        "corpus_hash": corpus_hash,
        "fit": model.info,
    }


def model_from_dict(doc: dict, corpus: Sequence[Exemplar]) -> TransferModel:
    """Rebuild a model, resolving exemplar ids against ``corpus``."""
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValidationError("not a sumtransfer model file (format/version mismatch)")
    by_id = {ex.id: ex for ex in corpus}
    missing = [i for i in doc["exemplars"] if i not in by_id]
    if missing:
        raise ValidationError(f"model refers to videos missing from the corpus: {missing}")
    exemplars = [by_id[i] for i in doc["exemplars"]]
    s = doc["similarity"]
    sim = SimilarityConfig(s["kind"], s["sigma"], None if s["metric"] is None else np.array(s["metric"]))
    ids = doc["exemplars"]
    kwargs = dict(exemplars=exemplars, sim=sim, category_mode=doc["category_mode"],
                  granularity=doc["granularity"], sequential=doc["sequential"],
                  include_self=doc["include_self"], info=doc.get("fit") or {})
    if doc["category_mode"] == "none":
        return TransferModel(alphas=np.array([doc["alphas"][i] for i in ids]), **kwargs)
    cat = {c: np.array([v[i] for i in ids]) for c, v in doc["alphas"].items()}
    return TransferModel(category_alphas=cat, **kwargs)


def dumps_model(model: TransferModel, corpus_hash: str | None = None) -> str:
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(model_to_dict(model, corpus_hash), indent=2, sort_keys=False) + "\n"


def save_model(model: TransferModel, path, corpus_hash: str | None = None) -> None:
    Path(path).write_text(dumps_model(model, corpus_hash))


def read_model(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model file {path}: {exc}") from None


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max coordinate error, relative where magnitudes reach ``floor`` and absolute below it."""
    a, b = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    err = np.abs(a - b)
    rel = np.where(scale < floor, err, err / np.where(scale == 0, 1.0, scale))
    return float(rel.max()) if rel.size else 0.0


def gradcheck(seeds: Sequence[int], h: float = 1e-5, granularity: str = "frame") -> list[dict]:
    """Analytic vs central-difference gradients on seeded random 3-video corpora.

    Uses the mahalanobis similarity so both the scale and metric gradients
    are exercised. Returns one record per seed and parameter group.
    """
    from .corpus import random_corpus

    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        corpus = random_corpus(rng, segmented=granularity != "frame")
        cfg = LearnConfig(sim=SimilarityConfig("mahalanobis"), granularity=granularity)
        state = init_state(corpus, cfg)
        state.beta = rng.normal(0.7, 0.5, size=state.beta.shape)
        state.omega_log = rng.normal(0.0, 0.5, size=state.omega_log.shape)
        _, gb, gw = _gradients(state, corpus, cfg)
        fd = finite_difference_oracle(state, corpus, cfg, h)
        rows.append({"seed": seed, "param": "alpha", "max_rel_err": relative_error(gb, -fd["beta"])})
        rows.append({"seed": seed, "param": "metric", "max_rel_err": relative_error(gw, -fd["omega_log"])})
    return rows
