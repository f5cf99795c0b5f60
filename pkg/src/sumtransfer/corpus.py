"""Corpus persistence, validation, segmentation helpers and synthetic data.

On-disk layout (all paths in the manifest are relative to the manifest)::

    corpus.json                 manifest
    features/<id>.vstf          feature matrix
    summaries/<id>.<u>.txt      one user summary per file

Feature files: ``b"VSTF"``, then little-endian u32 version (1), u32
n_frames, u32 dim, followed by n_frames * dim little-endian float32 values
in frame-major order. Summary files hold one zero-based frame index per
line, ascending.

Manifest (JSON)::

    {"format": "sumtransfer-corpus", "version": 1, "feature_norm": true,
     "videos": [{"id": "v000", "features": "features/v000.vstf",
                 "n_frames": 30, "dim": 16, "category": "cat0",
                 "boundaries": [5, 10, ...] | null,
                 "summaries": ["summaries/v000.0.txt"]}]}
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dpp import as_subset
from .errors import ValidationError
from .similarity import check_boundaries, segment_slices
from .transfer import Exemplar, frames_to_segment_units

MAGIC = b"VSTF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")
CORPUS_FORMAT = "sumtransfer-corpus"
CORPUS_VERSION = 1
MANIFEST_NAME = "corpus.json"
DATA_DIR_ENV = "SUMTRANSFER_DATA_DIR"

UNIT_TOL = 1e-6
RENORM_TOL = 1e-3


def default_data_dir() -> Path:
    """``$SUMTRANSFER_DATA_DIR`` if set, else ``./data``."""
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


# -- feature files ---------------------------------------------------------

def write_features(path, X: np.ndarray) -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {X.shape}")
    body = np.ascontiguousarray(X, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC, FEATURE_VERSION, X.shape[0], X.shape[1]) + body)


def read_features(path) -> np.ndarray:
    """Read a feature file as float64 (values are exactly the stored float32s)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated feature header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise ValidationError(f"{path}: unsupported feature version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes for {n}x{d}, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float64)


def write_summary(path, indices: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in sorted(indices)))


def read_summary(path) -> list[int]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not an integer: {line!r}") from None
    return out


# -- manifest --------------------------------------------------------------

def _video_error(vid, msg) -> ValidationError:
    return ValidationError(f"video {vid!r}: {msg}")


def _normalize(X: np.ndarray, vid, renormalize: bool) -> np.ndarray:
    if not np.all(np.isfinite(X)):
        raise _video_error(vid, "features contain non-finite values")
    norms = np.linalg.norm(X, axis=1)
    dev = np.abs(norms - 1.0)
    if np.all(dev <= UNIT_TOL):
        return X
    worst = int(np.argmax(dev))
    if renormalize and dev[worst] <= RENORM_TOL:
        return X / norms[:, None]
    raise _video_error(vid, f"frame {worst} has norm {norms[worst]:.6g}; features must be unit-norm")


def load_corpus(manifest) -> list[Exemplar]:
    """Load and validate every video listed in a manifest, in manifest order."""
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    try:
        doc = json.loads(manifest.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {manifest}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {manifest} is not valid JSON: {exc}") from None
    if doc.get("format") != CORPUS_FORMAT or doc.get("version") != CORPUS_VERSION:
        raise ValidationError(f"{manifest}: not a {CORPUS_FORMAT} v{CORPUS_VERSION} manifest")
    videos = doc.get("videos")
    if not isinstance(videos, list):
        raise ValidationError(f"{manifest}: 'videos' must be a list")
    renorm = bool(doc.get("feature_norm", False))
    root = manifest.parent
    seen = set()
    out = []
    for k, v in enumerate(videos):
        vid = v.get("id") if isinstance(v, dict) else None
        if not isinstance(vid, str) or not vid:
            raise ValidationError(f"{manifest}: entry {k} has no string id")
        if vid in seen:
            raise _video_error(vid, "duplicate id")
        seen.add(vid)
        for key in ("features", "n_frames", "dim", "summaries"):
            if key not in v:
                raise _video_error(vid, f"missing field {key!r}")
        fpath = root / v["features"]
        if not fpath.is_file():
            raise _video_error(vid, f"feature file {fpath} not found")
        try:
            X = read_features(fpath)
        except ValidationError as exc:
            raise _video_error(vid, str(exc)) from None
        if X.shape != (v["n_frames"], v["dim"]):
            raise _video_error(vid, f"declared {v['n_frames']}x{v['dim']} but file holds {X.shape[0]}x{X.shape[1]}")
        X = _normalize(X, vid, renorm)
        if not v["summaries"]:
            raise _video_error(vid, "at least one summary file is required")
        users = []
        for s in v["summaries"]:
            spath = root / s
            if not spath.is_file():
                raise _video_error(vid, f"summary file {spath} not found")
            idx = read_summary(spath)
            bad = [i for i in idx if not 0 <= i < X.shape[0]]
            if bad:
                raise _video_error(vid, f"summary index {bad[0]} out of range [0, {X.shape[0]}) in {s}")
            try:
                users.append(as_subset(idx, X.shape[0]))
            except ValidationError as exc:
                raise _video_error(vid, f"{s}: {exc}") from None
        bounds = v.get("boundaries")
        if bounds is not None:
            try:
                bounds = check_boundaries(bounds, X.shape[0])
            except ValidationError as exc:
                raise _video_error(vid, str(exc)) from None
        try:
            out.append(Exemplar(vid, X, users[0], v.get("category"), bounds, None, tuple(users)))
        except ValidationError as exc:
            raise _video_error(vid, str(exc)) from None
    return out


def save_corpus(exemplars: Sequence[Exemplar], directory, feature_norm: bool = True) -> Path:
    """Write exemplars in the on-disk layout; returns the manifest path."""
    root = Path(directory)
    (root / "features").mkdir(parents=True, exist_ok=True)
    (root / "summaries").mkdir(parents=True, exist_ok=True)
    videos = []
    for ex in exemplars:
        feat = f"features/{ex.id}.vstf"
        write_features(root / feat, ex.features)
        names = []
        for u, s in enumerate(ex.user_summaries):
            name = f"summaries/{ex.id}.{u}.txt"
            write_summary(root / name, s)
            names.append(name)
        videos.append({
            "id": ex.id,
            "features": feat,
            "n_frames": int(ex.n_frames),
            "dim": int(ex.features.shape[1]),
            "category": ex.category,
            "boundaries": None if ex.boundaries is None else [int(b) for b in ex.boundaries],
            "summaries": names,
        })
    doc = {"format": CORPUS_FORMAT, "version": CORPUS_VERSION, "feature_norm": feature_norm, "videos": videos}
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def corpus_hash(manifest) -> str:
    """SHA-256 over the manifest and every file it references."""
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    h = hashlib.sha256(manifest.read_bytes())
    doc = json.loads(manifest.read_text())
    for v in doc.get("videos", []):
        for rel in [v["features"], *v["summaries"]]:
            h.update(rel.encode())
            h.update((manifest.parent / rel).read_bytes())
    return h.hexdigest()


# -- segmentation ----------------------------------------------------------

def uniform_segments(n_frames: int, segment_len: int) -> tuple[int, ...]:
    """End indices of consecutive ``segment_len`` chunks; the last may be shorter."""
    if segment_len < 1 or n_frames < 1:
        raise ValidationError("n_frames and segment_len must be positive")
    ends = list(range(segment_len, n_frames, segment_len))
    return tuple(ends) + (n_frames,)


def frames_to_segments(summary: Sequence[int], boundaries: Sequence[int]) -> tuple[int, ...]:
    """Segments holding at least one summary frame."""
    ends = check_boundaries(boundaries, boundaries[-1] if len(boundaries) else 0)
    return frames_to_segment_units(as_subset(summary, ends[-1]), ends)


def middle_frames(segments: Sequence[int], boundaries: Sequence[int]) -> tuple[int, ...]:
    """Middle frame of each selected segment."""
    sl = segment_slices(boundaries)
    return tuple((sl[s].start + sl[s].stop - 1) // 2 for s in segments)


def chunk_exemplars(exemplars: Sequence[Exemplar], segment_len: int) -> list[Exemplar]:
    """Split each video into consecutive chunks that become separate exemplars.

    Chunks without any summary frame carry no transferable structure and are
    dropped. Chunk ids are ``<id>#<t>``.
    """
    out = []
    for ex in exemplars:
        start = 0
        for t, end in enumerate(uniform_segments(ex.n_frames, segment_len)):
            summ = [i - start for i in ex.summary if start <= i < end]
            if summ:
                out.append(Exemplar(f"{ex.id}#{t}", ex.features[start:end], tuple(summ), ex.category))
            start = end
    return out


# -- synthetic corpora -----------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Planted-structure corpus parameters.

    Each category owns ``keyframes_per_video`` orthonormal event directions
    and ``n_fillers`` filler directions orthogonal to them. Every video shows
    each event once, in order, at random positions (its ground truth), and
    filler frames elsewhere. ``noise_level`` is the per-coordinate standard
    deviation of the Gaussian perturbation added to every frame before
    re-normalization. Videos are split into contiguous category blocks.
    """

    n_videos: int = 10
    n_frames: int = 30
    dim: int = 16
    n_categories: int = 2
    keyframes_per_video: int = 4
    noise_level: float = 0.05
    seed: int = 0
    n_fillers: int = 6
    segment_len: int = 5

    def __post_init__(self):
        if self.n_videos < 1 or self.n_frames < 1 or self.dim < 1 or self.n_categories < 1:
            raise ValidationError("n_videos, n_frames, dim and n_categories must be positive")
        if self.n_categories > self.n_videos:
            raise ValidationError("n_categories cannot exceed n_videos")
        if not 1 <= self.keyframes_per_video < self.n_frames:
            raise ValidationError("need 1 <= keyframes_per_video < n_frames")
        if self.dim < self.keyframes_per_video:
            raise ValidationError("dim must be >= keyframes_per_video so events can be orthonormal")
        if self.noise_level < 0 or self.n_fillers < 1 or self.segment_len < 1:
            raise ValidationError("noise_level must be >= 0; n_fillers and segment_len positive")


def _unit_rows(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def synthesize_corpus(cfg: SynthConfig) -> list[Exemplar]:
    """Generate a planted-structure corpus in memory (PCG64 seeded by ``cfg.seed``)."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    k, d = cfg.keyframes_per_video, cfg.dim
    bases = []
    for _ in range(cfg.n_categories):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        events = Q[:, :k].T
        raw = rng.standard_normal((cfg.n_fillers, d))
        if k < d:
            raw -= (raw @ events.T) @ events
        bases.append((events, _unit_rows(raw)))
    out = []
    for v in range(cfg.n_videos):
        c = v * cfg.n_categories // cfg.n_videos
        events, fillers = bases[c]
        pos = np.sort(rng.choice(cfg.n_frames, k, replace=False))
        X = fillers[rng.integers(cfg.n_fillers, size=cfg.n_frames)].copy()
        X[pos] = events
        if cfg.noise_level > 0:
            X = X + cfg.noise_level * rng.standard_normal(X.shape)
        X = _unit_rows(X).astype(np.float32).astype(np.float64)
        out.append(Exemplar(f"v{v:03d}", X, tuple(int(p) for p in pos), f"cat{c}",
                            uniform_segments(cfg.n_frames, cfg.segment_len)))
    return out


def gen_synthetic(cfg: SynthConfig, directory) -> Path:
    """Write a synthetic corpus to ``directory``; returns the manifest path."""
    return save_corpus(synthesize_corpus(cfg), directory)


def random_corpus(rng: np.random.Generator, n_exemplars: int = 3, max_frames: int = 10, max_dim: int = 8,
                  segmented: bool = False, n_categories: int = 2) -> list[Exemplar]:
    """Small unstructured corpus of random unit vectors, for numerical checks."""
    d = int(rng.integers(2, max_dim + 1))
    out = []
    for r in range(n_exemplars):
        n = int(rng.integers(3, max_frames + 1))
        X = _unit_rows(rng.standard_normal((n, d)))
        k = int(rng.integers(1, min(n, d) + 1))
        y = tuple(int(i) for i in np.sort(rng.choice(n, k, replace=False)))
        bounds = None
        if segmented:
            cuts = np.sort(rng.choice(np.arange(1, n), int(rng.integers(1, n)), replace=False))
            bounds = tuple(int(c) for c in cuts) + (n,)
        out.append(Exemplar(f"r{r}", X, y, f"cat{r % n_categories}", bounds))
    return out
