"""Command-line interface.

Subcommands: synth, splits, train, summarize, eval, crossval, gradcheck.
Exit status is 0 on success, 1 on invalid input and 2 on numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus as corpus_mod
from . import dpp, evaluation, learning, transfer
from .errors import NumericalError, ValidationError
from .similarity import KINDS, SimilarityConfig

log = logging.getLogger("sumtransfer")

SCORE_COLUMNS = ("video_id", "precision", "recall", "f_score", "matches", "pred_size", "truth_size")


# -- shared helpers ----------------------------------------------------------

def _corpus_path(arg: str | None) -> Path:
    return Path(arg) if arg else corpus_mod.default_data_dir() / corpus_mod.MANIFEST_NAME


def read_splits(path, round_: int) -> dict[str, str]:
    """Map video id -> role ('train' or 'test') for one split round."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read split file {path}: {exc.strerror}") from None
    roles = {r["video_id"]: r["role"] for r in rows if int(r["round"]) == round_}
    if not roles:
        raise ValidationError(f"split file {path} has no round {round_}")
    return roles


def make_splits(exemplars, rounds: int, seed: int, train_fraction: float = 0.8) -> list[tuple[int, str, str]]:
    """Random train/test splits, stratified by category, one per round."""
    if not 0 < train_fraction < 1:
        raise ValidationError("train fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    groups: dict = {}
    for ex in exemplars:
        groups.setdefault(ex.category, []).append(ex.id)
    rows = []
    for rnd in range(rounds):
        roles = {}
        for key in sorted(groups, key=lambda k: (k is None, k or "")):
            ids = groups[key]
            order = rng.permutation(len(ids))
            n_train = int(round(train_fraction * len(ids)))
            n_train = min(max(n_train, 1), len(ids) - 1) if len(ids) > 1 else len(ids)
            for pos, j in enumerate(order):
                roles[ids[j]] = "train" if pos < n_train else "test"
        rows.extend((rnd, ex.id, roles[ex.id]) for ex in exemplars)
    return rows


def _select(exemplars, split: str | None, round_: int, role: str):
    if split is None:
        return list(exemplars)
    roles = read_splits(split, round_)
    return [ex for ex in exemplars if roles.get(ex.id) == role]


def learn_config(args) -> learning.LearnConfig:
    sim = SimilarityConfig(args.sim, args.sigma)
    return learning.LearnConfig(sim=sim, granularity=args.granularity, mode=args.category_mode,
                                learn_metric=args.learn_metric, include_self=not args.exclude_self,
                                iters=args.iters, step=args.step)


def train_model(train, cfg: learning.LearnConfig, sequential: int | None = None) -> transfer.TransferModel:
    if cfg.mode != "none" and any(ex.category is None for ex in train):
        raise ValidationError(f"{cfg.mode} category mode needs a categorized corpus")
    if cfg.granularity != "frame" and any(ex.boundaries is None for ex in train):
        missing = [ex.id for ex in train if ex.boundaries is None]
        raise ValidationError(f"subshot granularity needs boundaries; missing for {missing}")
    if sequential is not None:
        if cfg.granularity != "frame":
            raise ValidationError("sequential mode works at frame granularity")
        train = corpus_mod.chunk_exemplars(train, sequential)
    model = learning.fit(train, cfg)
    model.sequential = sequential
    return model


def _test_bounds(ex, model, segment_len: int | None):
    if model.granularity == "frame":
        return None
    if ex.boundaries is not None:
        return ex.boundaries
    if segment_len is None:
        raise ValidationError(f"video {ex.id!r} has no boundaries; pass --segment-len for uniform segments")
    return corpus_mod.uniform_segments(ex.n_frames, segment_len)


def summarize_video(ex, model, budget: float | None = None, segment_len: int | None = None) -> tuple[int, ...]:
    """Frame-level summary for one video (middle frames at subshot granularity)."""
    category = ex.category if model.category_mode != "none" else None
    if model.sequential is not None:
        bounds = corpus_mod.uniform_segments(ex.n_frames, model.sequential)
        return transfer.summarize_sequential(ex.features, model, bounds, category)
    bounds = _test_bounds(ex, model, segment_len)
    L = transfer.synthesize_kernel(ex.features, model, category, bounds)
    sel = dpp.map_greedy(L)
    if bounds is None:
        return sel
    if budget is not None:
        sel = evaluation.budgeted_truncate(sel, L, bounds, budget)
    return corpus_mod.middle_frames(sel, bounds)


def score_rows(videos, preds: dict, cfg: evaluation.MatchConfig, mode: str) -> list[dict]:
    rows = []
    for ex in videos:
        t = evaluation.aggregate(preds[ex.id], ex.user_summaries, ex.features, cfg, mode)
        rows.append({"video_id": ex.id, "precision": t.precision, "recall": t.recall, "f_score": t.f_score,
                     "matches": t.matches, "pred_size": t.pred_size, "truth_size": t.truth_size})
    return rows


def _fmt(v) -> str:
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _mean_row(rows, label="mean") -> dict:
    out = {"video_id": label}
    for c in SCORE_COLUMNS[1:]:
        out[c] = float(np.mean([r[c] for r in rows])) if rows else 0.0
    return out


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = corpus_mod.SynthConfig(args.n_videos, args.n_frames, args.dim, args.n_categories, args.keyframes,
                                 args.noise, args.seed, args.n_fillers, args.segment_len)
    path = corpus_mod.gen_synthetic(cfg, args.out)
    print(path)
    return 0


def cmd_splits(args) -> int:
    videos = corpus_mod.load_corpus(_corpus_path(args.corpus))
    rows = make_splits(videos, args.rounds, args.seed, args.train_fraction)
    text = _csv_text(("round", "video_id", "role"),
                     [{"round": r, "video_id": v, "role": role} for r, v, role in rows])
    Path(args.out).write_text(text)
    return 0


def cmd_train(args) -> int:
    manifest = _corpus_path(args.corpus)
    videos = corpus_mod.load_corpus(manifest)
    train = _select(videos, args.split, args.round, "train")
    cfg = learn_config(args)
    model = train_model(train, cfg, args.sequential)
    learning.save_model(model, args.model, corpus_mod.corpus_hash(manifest))
    if model.info.get("warnings"):
        log.warning("fit warnings: %s", model.info["warnings"])
    return 0


def _load_model(path, videos, manifest, strict_hash: bool = False):
    doc = learning.read_model(path)
    exemplars = videos
    if doc.get("sequential"):
        exemplars = corpus_mod.chunk_exemplars(videos, doc["sequential"])
    if doc.get("corpus_hash") and doc["corpus_hash"] != corpus_mod.corpus_hash(manifest):
        msg = f"model {path} was trained against a different corpus"
        if strict_hash:
            raise ValidationError(msg)
        log.warning(msg)
    return learning.model_from_dict(doc, exemplars)


def cmd_summarize(args) -> int:
    manifest = _corpus_path(args.corpus)
    videos = corpus_mod.load_corpus(manifest)
    model = _load_model(args.model, videos, manifest)
    if args.budget is not None and not 0 < args.budget <= 1:
        raise ValidationError("--budget must be in (0, 1]")
    targets = _select(videos, args.split, args.round, "test")
    preds = {ex.id: summarize_video(ex, model, args.budget, args.segment_len) for ex in targets}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for vid, sel in preds.items():
        corpus_mod.write_summary(out / f"{vid}.txt", sel)
    return 0


def cmd_eval(args) -> int:
    videos = corpus_mod.load_corpus(_corpus_path(args.corpus))
    targets = _select(videos, args.split, args.round, "test")
    cfg = evaluation.MatchConfig(args.threshold)
    pred_dir = Path(args.pred)
    preds = {}
    for ex in targets:
        p = pred_dir / f"{ex.id}.txt"
        if not p.is_file():
            raise ValidationError(f"no prediction for video {ex.id!r} ({p})")
        preds[ex.id] = dpp.as_subset(corpus_mod.read_summary(p), ex.n_frames)
    rows = score_rows(targets, preds, cfg, args.aggregate)
    text = _csv_text(SCORE_COLUMNS, rows + [_mean_row(rows)])
    _emit(text, args.out)
    return 0


def cmd_crossval(args) -> int:
    manifest = _corpus_path(args.corpus)
    videos = corpus_mod.load_corpus(manifest)
    cfg = learn_config(args)
    mcfg = evaluation.MatchConfig(args.threshold)
    splits = make_splits(videos, args.rounds, args.seed)
    per_round = []
    for rnd in range(args.rounds):
        roles = {v: role for r, v, role in splits if r == rnd}
        train = [ex for ex in videos if roles[ex.id] == "train"]
        test = [ex for ex in videos if roles[ex.id] == "test"]
        model = train_model(train, cfg, args.sequential)
        preds = {ex.id: summarize_video(ex, model, args.budget, args.segment_len) for ex in test}
        m = _mean_row(score_rows(test, preds, mcfg, args.aggregate), str(rnd))
        per_round.append(m)
    fs = np.array([r["f_score"] for r in per_round])
    se = float(fs.std(ddof=1) / np.sqrt(len(fs))) if len(fs) > 1 else 0.0
    summary = _mean_row(per_round, "mean")
    stderr = {"video_id": "stderr", **{c: float(np.std([r[c] for r in per_round], ddof=1) / np.sqrt(len(fs)))
                                       if len(fs) > 1 else 0.0 for c in SCORE_COLUMNS[1:]}}
    cols = ("round",) + SCORE_COLUMNS[1:]
    rows = [{"round": r["video_id"], **{c: r[c] for c in SCORE_COLUMNS[1:]}} for r in per_round + [summary, stderr]]
    _emit(_csv_text(cols, rows), args.out)
    print(f"F = {fs.mean():.2f} +/- {se:.2f} over {len(fs)} rounds", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    rows = learning.gradcheck(range(args.seed, args.seed + args.seeds), args.h, args.granularity)
    for r in rows:
        r["ok"] = r["max_rel_err"] <= args.tol
    _emit(_csv_text(("seed", "param", "max_rel_err", "ok"), rows), args.out)
    bad = [r for r in rows if not r["ok"]]
    if bad:
        raise NumericalError(f"{len(bad)} gradient checks exceeded tolerance {args.tol}")
    return 0


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- argument parsing --------------------------------------------------------

def _add_model_flags(p):
    p.add_argument("--sim", choices=KINDS, default="rbf", help="frame similarity kind")
    p.add_argument("--sigma", type=float, default=1.0, help="rbf bandwidth")
    p.add_argument("--category-mode", choices=transfer.CATEGORY_MODES, default="none")
    p.add_argument("--granularity", choices=transfer.GRANULARITIES, default="frame",
                   help="frame, or subshot transfer by mean features / max frame similarity")
    p.add_argument("--sequential", type=int, default=None, metavar="LEN",
                   help="segment length for sequential extraction (frame granularity)")
    p.add_argument("--learn-metric", action="store_true", help="also learn the diagonal mahalanobis metric")
    p.add_argument("--exclude-self", action="store_true", help="leave each video out of its own kernel")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--step", type=float, default=0.5)


def _add_split_flags(p):
    p.add_argument("--split", default=None, help="split CSV from the 'splits' subcommand")
    p.add_argument("--round", type=int, default=0)


def _add_summary_flags(p):
    p.add_argument("--budget", type=float, default=None,
                   help="cap subshot summaries at this fraction of the video length")
    p.add_argument("--segment-len", type=int, default=None,
                   help="uniform segment length for videos without boundaries")


def _add_eval_flags(p):
    p.add_argument("--threshold", type=float, default=evaluation.DEFAULT_THRESHOLD,
                   help="max feature distance for two frames to match")
    p.add_argument("--aggregate", choices=("mean", "max"), default="mean",
                   help="how to combine scores over several user summaries")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sumtransfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic planted-structure corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-videos", type=int, default=10)
    p.add_argument("--n-frames", type=int, default=30)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-categories", type=int, default=2)
    p.add_argument("--keyframes", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--n-fillers", type=int, default=6)
    p.add_argument("--segment-len", type=int, default=5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("splits", help="write random 80/20 train/test splits")
    p.add_argument("--corpus")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("train", help="fit transfer parameters and write a model file")
    p.add_argument("--corpus")
    p.add_argument("--model", required=True)
    _add_model_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="write one summary index file per video")
    p.add_argument("--corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_split_flags(p)
    _add_summary_flags(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval", help="score predicted summaries against the corpus annotations")
    p.add_argument("--corpus")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None)
    _add_split_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossval", help="repeated 80/20 train/summarize/eval, mean +/- standard error")
    p.add_argument("--corpus")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_model_flags(p)
    _add_summary_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with central differences")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--granularity", choices=transfer.GRANULARITIES, default="frame")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
