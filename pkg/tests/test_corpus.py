import numpy as np
import pytest

from vaevc.corpus import (
    MANIFEST_HEADER,
    CorpusSpec,
    ManifestRecord,
    default_speakers,
    frame_labels,
    gen_synthetic_corpus,
    make_sentence,
    read_labels,
    read_manifest,
    render,
    sentence_plan,
    speaker_index,
    write_manifest,
)
from vaevc.errors import ConfigError, FormatError
from vaevc.features import estimate_f0, frame_count
from vaevc.wavio import read_wav


def tiny_spec(**kw):
    base = dict(speakers=default_speakers(2), train_utterances=4, eval_utterances=2, phones_per_utterance=3)
    base.update(kw)
    return CorpusSpec(**base)


def test_same_seed_same_bytes(tmp_path):
    a = gen_synthetic_corpus(tiny_spec(), tmp_path / "a")
    b = gen_synthetic_corpus(tiny_spec(), tmp_path / "b")
    assert a == b
    assert (tmp_path / "a/manifest.tsv").read_bytes() == (tmp_path / "b/manifest.tsv").read_bytes()
    for rec in a:
        assert (tmp_path / "a" / rec.wav_path).read_bytes() == (tmp_path / "b" / rec.wav_path).read_bytes()


def test_different_seed_differs(tmp_path):
    a = gen_synthetic_corpus(tiny_spec(), tmp_path / "a")
    gen_synthetic_corpus(tiny_spec(seed=1), tmp_path / "b")
    rec = a[0]
    assert (tmp_path / "a" / rec.wav_path).read_bytes() != (tmp_path / "b" / rec.wav_path).read_bytes()


def test_layout_and_counts(tmp_path):
    recs = gen_synthetic_corpus(tiny_spec(), tmp_path)
    assert len(recs) == 2 * (4 + 2)
    assert sum(r.subset == "eval" for r in recs) == 4
    assert read_manifest(tmp_path / "manifest.tsv") == recs
    assert speaker_index(recs) == {"spk1": 0, "spk2": 1}
    samples, rate = read_wav(tmp_path / recs[0].wav_path)
    assert rate == 16000
    labs = read_labels((tmp_path / recs[0].wav_path).with_suffix(".lab"))
    assert labs[0][2] == "sil" and labs[-1][2] == "sil"
    assert labs[-1][1] == samples.size


def test_refuses_overwrite(tmp_path):
    gen_synthetic_corpus(tiny_spec(), tmp_path)
    with pytest.raises(ConfigError):
        gen_synthetic_corpus(tiny_spec(), tmp_path)
    gen_synthetic_corpus(tiny_spec(), tmp_path, force=True)


def test_disjoint_plan():
    plan = sentence_plan(tiny_spec(speakers=default_speakers(2), train_utterances=40, parallel=False))
    assert not set(plan["spk1"]) & set(plan["spk2"])
    assert sorted(plan["spk1"] + plan["spk2"]) == list(range(40))
    assert len(plan["spk1"]) == 20


def test_disjoint_corpus_shares_recordings(tmp_path):
    par = gen_synthetic_corpus(tiny_spec(), tmp_path / "p")
    dis = gen_synthetic_corpus(tiny_spec(parallel=False), tmp_path / "d")
    train = [r for r in dis if r.subset == "train"]
    assert {r.utterance for r in train if r.speaker == "spk1"}.isdisjoint(
        {r.utterance for r in train if r.speaker == "spk2"}
    )
    assert {(r.speaker, r.utterance) for r in dis} <= {(r.speaker, r.utterance) for r in par}
    for r in dis:
        assert (tmp_path / "d" / r.wav_path).read_bytes() == (tmp_path / "p" / r.wav_path).read_bytes()


def test_spec_validation():
    with pytest.raises(ConfigError):
        tiny_spec(speakers=default_speakers(1)).validate()
    with pytest.raises(ConfigError):
        tiny_spec(train_utterances=0).validate()
    with pytest.raises(ConfigError):
        tiny_spec(gap_prob=1.0).validate()


def test_default_speakers_beyond_presets():
    spk = default_speakers(6)
    assert len({s.name for s in spk}) == 6
    tiny_spec(speakers=spk).validate()


def test_rendered_pitch_follows_profile():
    rng = np.random.default_rng(0)
    sent = make_sentence(rng, 4, 0.0)
    for spk in default_speakers(2):
        x, segs = render(sent, spk, np.random.default_rng(1))
        f0 = estimate_f0(x)
        labels = frame_labels(segs, x.size)
        assert len(labels) == frame_count(x.size)
        voiced = f0[(f0 > 0) & (np.array(labels) != "sil")]
        assert abs(np.median(voiced) / spk.f0_mean - 1) < 0.2


def test_manifest_round_trip_bytes(tmp_path):
    recs = gen_synthetic_corpus(tiny_spec(), tmp_path)
    write_manifest(tmp_path / "copy.tsv", read_manifest(tmp_path / "manifest.tsv"))
    assert (tmp_path / "copy.tsv").read_bytes() == (tmp_path / "manifest.tsv").read_bytes()
    assert (tmp_path / "copy.tsv").read_text().splitlines()[0] == MANIFEST_HEADER
    assert read_manifest(tmp_path / "copy.tsv") == recs


def test_manifest_errors(tmp_path):
    (tmp_path / "a.wav").write_bytes(b"")
    rec = ManifestRecord("a.wav", "s", "u0", "train")
    write_manifest(tmp_path / "dup.tsv", [rec, rec])
    with pytest.raises(FormatError, match="duplicate"):
        read_manifest(tmp_path / "dup.tsv")
    write_manifest(tmp_path / "missing.tsv", [ManifestRecord("b.wav", "s", "u0", "train")])
    with pytest.raises(FormatError, match="missing"):
        read_manifest(tmp_path / "missing.tsv")
    assert len(read_manifest(tmp_path / "missing.tsv", check_paths=False)) == 1
    (tmp_path / "bad.tsv").write_text("a.wav\ts\tu0\ttest\n")
    with pytest.raises(FormatError, match="subset"):
        read_manifest(tmp_path / "bad.tsv")
    (tmp_path / "short.tsv").write_text("a.wav\ts\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "short.tsv")
