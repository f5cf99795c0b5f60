import json
import struct

import numpy as np
import pytest

from sumtransfer import corpus as cp
from sumtransfer.errors import ValidationError
from sumtransfer.evaluation import score
from sumtransfer.learning import LearnConfig, fit
from sumtransfer.similarity import SimilarityConfig
from sumtransfer.transfer import Exemplar, summarize


@pytest.fixture
def small(tmp_path):
    exemplars = cp.synthesize_corpus(cp.SynthConfig(n_videos=4, n_frames=12, dim=6, keyframes_per_video=3))
    return exemplars, cp.save_corpus(exemplars, tmp_path / "c")


def edit_manifest(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def test_feature_file_layout(tmp_path):
    X = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, -1.0]])
    p = tmp_path / "x.vstf"
    cp.write_features(p, X)
    raw = p.read_bytes()
    assert raw[:16] == b"VSTF" + struct.pack("<III", 1, 3, 2)
    assert raw[16:] == X.astype("<f4").tobytes()
    np.testing.assert_array_equal(cp.read_features(p), X.astype(np.float32))


@pytest.mark.parametrize("mutate", [
    lambda raw: b"XXXX" + raw[4:],
    lambda raw: raw[:4] + struct.pack("<I", 2) + raw[8:],
    lambda raw: raw[:-4],
    lambda raw: raw[:10],
])
def test_feature_file_corruption(tmp_path, mutate):
    p = tmp_path / "x.vstf"
    cp.write_features(p, np.eye(2))
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ValidationError):
        cp.read_features(p)


def test_summary_files(tmp_path):
    p = tmp_path / "s.txt"
    cp.write_summary(p, [5, 0, 3])
    assert p.read_text() == "0\n3\n5\n"
    assert cp.read_summary(p) == [0, 3, 5]
    p.write_text("1\nx\n")
    with pytest.raises(ValidationError):
        cp.read_summary(p)


def test_round_trip_is_bit_identical(small, tmp_path):
    exemplars, manifest = small
    loaded = cp.load_corpus(manifest)
    assert [e.id for e in loaded] == [e.id for e in exemplars]
    for a, b in zip(exemplars, loaded):
        assert a.features.tobytes() == b.features.tobytes()
        assert (a.summary, a.category, a.boundaries) == (b.summary, b.category, b.boundaries)
    again = cp.save_corpus(loaded, tmp_path / "d")
    for name in ["corpus.json"] + [f"features/{e.id}.vstf" for e in loaded] + [f"summaries/{e.id}.0.txt" for e in loaded]:
        assert (again.parent / name).read_bytes() == (manifest.parent / name).read_bytes()
    assert cp.corpus_hash(manifest) == cp.corpus_hash(again)


def test_load_accepts_directory_and_keeps_order(small):
    _, manifest = small
    edit_manifest(manifest, lambda d: d["videos"].reverse())
    assert [e.id for e in cp.load_corpus(manifest.parent)] == ["v003", "v002", "v001", "v000"]


def test_multiple_user_summaries(tmp_path):
    ex = Exemplar("a", np.eye(3), [0], user_summaries=((0,), (1, 2)))
    m = cp.save_corpus([ex], tmp_path)
    back = cp.load_corpus(m)[0]
    assert back.summary == (0,) and back.user_summaries == ((0,), (1, 2))


@pytest.mark.parametrize("edit", [
    lambda d: d["videos"][1].update(n_frames=13),
    lambda d: d["videos"][1].update(dim=5),
    lambda d: d["videos"][1].update(features="features/missing.vstf"),
    lambda d: d["videos"][1].update(summaries=[]),
    lambda d: d["videos"][1].update(summaries=["summaries/none.txt"]),
    lambda d: d["videos"][1].update(boundaries=[5, 4, 12]),
    lambda d: d["videos"][1].update(boundaries=[5, 11]),
    lambda d: d["videos"][1].pop("dim"),
    lambda d: d["videos"][1].update(id="v000"),
])
def test_malformed_manifest_names_video(small, edit):
    _, manifest = small
    edit_manifest(manifest, edit)
    with pytest.raises(ValidationError, match="v00[01]"):
        cp.load_corpus(manifest)


def test_out_of_range_summary_names_video(small):
    _, manifest = small
    (manifest.parent / "summaries/v002.0.txt").write_text("0\n12\n")
    with pytest.raises(ValidationError, match="'v002'.*12"):
        cp.load_corpus(manifest)
    (manifest.parent / "summaries/v002.0.txt").write_text("3\n3\n")
    with pytest.raises(ValidationError, match="v002"):
        cp.load_corpus(manifest)


def test_non_unit_and_non_finite_features(small):
    _, manifest = small
    fpath = manifest.parent / "features/v001.vstf"
    X = cp.read_features(fpath)
    cp.write_features(fpath, X * (1 + 5e-4))
    assert np.allclose(np.linalg.norm(cp.load_corpus(manifest)[1].features, axis=1), 1.0)
    edit_manifest(manifest, lambda d: d.update(feature_norm=False))
    with pytest.raises(ValidationError, match="v001"):
        cp.load_corpus(manifest)
    edit_manifest(manifest, lambda d: d.update(feature_norm=True))
    cp.write_features(fpath, X * 2)
    with pytest.raises(ValidationError, match="v001"):
        cp.load_corpus(manifest)
    X[0, 0] = np.nan
    cp.write_features(fpath, X)
    with pytest.raises(ValidationError, match="v001"):
        cp.load_corpus(manifest)


def test_bad_manifests(tmp_path):
    with pytest.raises(ValidationError):
        cp.load_corpus(tmp_path / "nothing.json")
    p = tmp_path / "corpus.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        cp.load_corpus(p)
    p.write_text(json.dumps({"format": "other", "version": 1, "videos": []}))
    with pytest.raises(ValidationError):
        cp.load_corpus(p)


def test_default_data_dir(monkeypatch, tmp_path):
    monkeypatch.setenv(cp.DATA_DIR_ENV, str(tmp_path))
    assert cp.default_data_dir() == tmp_path
    monkeypatch.delenv(cp.DATA_DIR_ENV)
    assert cp.default_data_dir().name == "data"


def test_uniform_segments_examples():
    assert cp.uniform_segments(10, 10) == (10,)
    assert cp.uniform_segments(10, 4) == (4, 8, 10)
    assert cp.uniform_segments(3, 5) == (3,)
    with pytest.raises(ValidationError):
        cp.uniform_segments(10, 0)


def test_frames_to_segments_examples():
    assert cp.frames_to_segments([0, 2, 3], [1, 2, 3, 4]) == (0, 2, 3)
    assert cp.frames_to_segments([0, 1], [3, 6]) == (0,)
    assert cp.frames_to_segments([], [3, 6]) == ()
    assert cp.frames_to_segments([2, 5], [3, 6]) == (0, 1)


def test_middle_frames():
    assert cp.middle_frames([0, 2], [4, 8, 11]) == (1, 9)


def test_chunk_exemplars():
    ex = Exemplar("a", np.eye(7), [1, 5], category="c")
    chunks = cp.chunk_exemplars([ex], 3)
    assert [c.id for c in chunks] == ["a#0", "a#1"]
    assert [c.summary for c in chunks] == [(1,), (2,)]
    np.testing.assert_array_equal(chunks[1].features, np.eye(7)[3:6])


def test_synthetic_is_deterministic(tmp_path):
    cfg = cp.SynthConfig(seed=7)
    a = cp.gen_synthetic(cfg, tmp_path / "a")
    b = cp.gen_synthetic(cfg, tmp_path / "b")
    assert cp.corpus_hash(a) == cp.corpus_hash(b)
    assert a.read_bytes() == b.read_bytes()
    c = cp.gen_synthetic(cp.SynthConfig(seed=8), tmp_path / "c")
    assert cp.corpus_hash(a) != cp.corpus_hash(c)


def test_synthetic_structure_without_noise():
    cfg = cp.SynthConfig(n_videos=6, n_categories=2, noise_level=0.0)
    corpus = cp.synthesize_corpus(cfg)
    assert [e.category for e in corpus] == ["cat0"] * 3 + ["cat1"] * 3
    for group in (corpus[:3], corpus[3:]):
        for a in group:
            assert len(a.summary) == cfg.keyframes_per_video
            for b in group:
                dots = np.sum(a.features[list(a.summary)] * b.features[list(b.summary)], axis=1)
                np.testing.assert_allclose(dots, 1.0, atol=1e-6)
    ev = corpus[0].features[list(corpus[0].summary)]
    np.testing.assert_allclose(ev @ ev.T, np.eye(cfg.keyframes_per_video), atol=1e-6)


def test_synthetic_passes_validation(tmp_path):
    m = cp.gen_synthetic(cp.SynthConfig(noise_level=0.3, seed=3), tmp_path)
    corpus = cp.load_corpus(m)
    assert len(corpus) == 10
    assert all(e.boundaries == cp.uniform_segments(30, 5) for e in corpus)


@pytest.mark.parametrize("kwargs", [
    dict(keyframes_per_video=30),
    dict(dim=3, keyframes_per_video=4),
    dict(noise_level=-0.1),
    dict(n_categories=11),
    dict(n_videos=0),
])
def test_synth_config_validation(kwargs):
    with pytest.raises(ValidationError):
        cp.SynthConfig(**kwargs)


def test_held_out_video_in_hard_mode():
    corpus = cp.synthesize_corpus(cp.SynthConfig(n_videos=10, noise_level=0.05, seed=0))
    held = [corpus[4], corpus[9]]
    train = [e for e in corpus if e not in held]
    model = fit(train, LearnConfig(sim=SimilarityConfig("rbf"), mode="hard", iters=50))
    for ex in held:
        y = summarize(ex.features, model, ex.category)
        assert score(y, ex.summary, ex.features).f_score >= 80.0
