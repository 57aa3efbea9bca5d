"""Synthetic multi-speaker vowel corpus and the TSV manifest describing it.

A "speaker" is a vocal-tract scale applied to a shared vowel formant table
plus a pitch range. An utterance is a sequence of vowels rendered as a
glottal pulse train through a cascade of second-order resonators, with
silence at both ends and optional pauses between vowels.

Every utterance is rendered from its own RNG stream keyed by
``(seed, speaker, sentence)``, so a parallel and a disjoint corpus built
with the same seed contain byte-identical recordings for the utterances
they share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, FormatError
from .features import HOP, SAMPLE_RATE, WINDOW, frame_count
from .wavio import write_wav

VOWELS: Dict[str, Tuple[float, float, float]] = {
    "a": (730.0, 1090.0, 2440.0),
    "i": (270.0, 2290.0, 3010.0),
    "u": (300.0, 870.0, 2240.0),
    "e": (530.0, 1840.0, 2480.0),
    "o": (570.0, 840.0, 2410.0),
    "ae": (660.0, 1720.0, 2410.0),
}
BANDWIDTHS = (90.0, 110.0, 160.0)
SILENCE = "sil"

MANIFEST_HEADER = "# wav_path\tspeaker\tutterance\tsubset"


@dataclass(frozen=True)
class SpeakerProfile:
    name: str
    formant_scale: float
    f0_mean: float
    f0_range: float = 0.15


# Pairs (spk1, spk2) and (spk3, spk4) are "far"; (spk1, spk3) is "near".
PRESET_SPEAKERS = (
    SpeakerProfile("spk1", 1.00, 110.0),
    SpeakerProfile("spk2", 1.25, 210.0),
    SpeakerProfile("spk3", 1.08, 130.0),
    SpeakerProfile("spk4", 1.33, 235.0),
)


def default_speakers(n: int) -> List[SpeakerProfile]:
    if n <= len(PRESET_SPEAKERS):
        return list(PRESET_SPEAKERS[:n])
    extra = []
    for i in range(len(PRESET_SPEAKERS), n):
        scale = 0.95 + 0.45 * ((i * 0.618) % 1.0)
        extra.append(SpeakerProfile(f"spk{i + 1}", round(scale, 3), round(100.0 + 150.0 * (scale - 0.95) / 0.45, 1)))
    return list(PRESET_SPEAKERS) + extra


@dataclass
class CorpusSpec:
    speakers: List[SpeakerProfile] = field(default_factory=lambda: default_speakers(2))
    train_utterances: int = 40
    eval_utterances: int = 8
    phones_per_utterance: int = 5
    seed: int = 0
    parallel: bool = True
    gap_prob: float = 0.15
    duration_jitter: float = 0.15
    noise_level: float = 1e-3

    def validate(self) -> None:
        if len(self.speakers) < 2:
            raise ConfigError("a corpus needs at least 2 speakers")
        if len({s.name for s in self.speakers}) != len(self.speakers):
            raise ConfigError("speaker names must be unique")
        if self.train_utterances < 1 or self.eval_utterances < 0:
            raise ConfigError("need at least one training utterance")
        if not self.parallel and self.train_utterances < len(self.speakers):
            raise ConfigError("disjoint mode needs at least one training sentence per speaker")
        if self.phones_per_utterance < 1:
            raise ConfigError("phones_per_utterance must be positive")
        if not 0.0 <= self.gap_prob < 1.0 or not 0.0 <= self.duration_jitter < 0.5:
            raise ConfigError("gap_prob must be in [0, 1) and duration_jitter in [0, 0.5)")
        for s in self.speakers:
            if s.formant_scale <= 0 or not 50.0 < s.f0_mean < 500.0:
                raise ConfigError(f"speaker {s.name}: implausible profile")


@dataclass
class Sentence:
    """Vowel labels with nominal durations (s) and pause-after flags."""

    labels: List[str]
    durations: List[float]
    pauses: List[bool]


def make_sentence(rng: np.random.Generator, n_phones: int, gap_prob: float) -> Sentence:
    names = list(VOWELS)
    labels = []
    for _ in range(n_phones):
        choices = [v for v in names if not labels or v != labels[-1]]
        labels.append(choices[int(rng.integers(len(choices)))])
    durations = list(rng.uniform(0.07, 0.13, size=n_phones))
    pauses = [bool(rng.random() < gap_prob) for _ in range(n_phones - 1)] + [False]
    return Sentence(labels, durations, pauses)


def _resonator(freq: float, bw: float, sr: int):
    r = np.exp(-np.pi * bw / sr)
    a = [1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / sr), r * r]
    return [sum(a)], a


def render(
    sentence: Sentence,
    speaker: SpeakerProfile,
    rng: np.random.Generator,
    duration_jitter: float = 0.15,
    noise_level: float = 1e-3,
    sr: int = SAMPLE_RATE,
):
    """Render one utterance; return ``(samples, segments)``.

    ``segments`` lists ``(start_sample, end_sample, label)`` covering the
    whole signal, silence labelled ``"sil"``.
    """
    lead = int(0.06 * sr)
    pause = int(0.06 * sr)
    segments = [(0, lead, SILENCE)]
    pos = lead
    for label, dur, gap in zip(sentence.labels, sentence.durations, sentence.pauses):
        n = int(round(dur * (1.0 + rng.uniform(-duration_jitter, duration_jitter)) * sr))
        segments.append((pos, pos + n, label))
        pos += n
        if gap:
            segments.append((pos, pos + pause, SILENCE))
            pos += pause
    segments.append((pos, pos + lead, SILENCE))
    total = pos + lead

    # glottal pulses along a declining, slightly jittered pitch contour
    t = np.arange(total) / sr
    start = speaker.f0_mean * (1.0 + speaker.f0_range * rng.uniform(0.3, 1.0))
    end = speaker.f0_mean * (1.0 - speaker.f0_range * rng.uniform(0.3, 1.0))
    f0 = np.interp(t, [0.0, t[-1]], [start, end])
    f0 *= 1.0 + 0.01 * np.sin(2.0 * np.pi * rng.uniform(3.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    phase = np.cumsum(f0 / sr)
    source = np.diff(np.floor(phase), prepend=0.0)
    source = lfilter([1.0], [1.0, -1.9, 0.9025], source)  # spectral tilt

    gain = np.zeros(total)
    for s, e, label in segments:
        if label != SILENCE:
            n = e - s
            ramp = min(int(0.01 * sr), n // 2)
            env = np.ones(n)
            env[:ramp] = np.linspace(0.0, 1.0, ramp)
            env[n - ramp :] = np.linspace(1.0, 0.0, ramp)
            gain[s:e] = env
    # blend formant targets across neighbouring vowels
    block = HOP
    n_blocks = -(-total // block)
    targets = np.zeros((n_blocks, 3))
    voiced = [seg for seg in segments if seg[2] != SILENCE]
    centers = np.array([(s + e) / 2 for s, e, _ in voiced])
    table = np.array([VOWELS[lab] for _, _, lab in voiced]) * speaker.formant_scale
    block_centers = (np.arange(n_blocks) + 0.5) * block
    for k in range(3):
        targets[:, k] = np.interp(block_centers, centers, table[:, k])

    y = source * gain
    for k in range(3):
        zi = np.zeros(2)
        out = np.empty_like(y)
        bw = BANDWIDTHS[k] * speaker.formant_scale
        for b in range(n_blocks):
            sl = slice(b * block, min((b + 1) * block, total))
            num, den = _resonator(targets[b, k], bw, sr)
            out[sl], zi = lfilter(num, den, y[sl], zi=zi)
        y = out
    y = 0.5 * y / max(np.max(np.abs(y)), 1e-12)
    y = y + noise_level * rng.standard_normal(total)
    return np.clip(y, -1.0, 1.0), segments


def frame_labels(segments, n_samples: int) -> List[str]:
    """Label at the centre sample of every analysis frame."""
    out = []
    for t in range(frame_count(n_samples)):
        c = t * HOP + WINDOW // 2
        out.append(next((lab for s, e, lab in segments if s <= c < e), SILENCE))
    return out


@dataclass
class ManifestRecord:
    wav_path: str
    speaker: str
    utterance: str
    subset: str


def write_manifest(path, records: Sequence[ManifestRecord]) -> None:
    lines = [MANIFEST_HEADER]
    lines += [f"{r.wav_path}\t{r.speaker}\t{r.utterance}\t{r.subset}" for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, check_paths: bool = True) -> List[ManifestRecord]:
    """Parse a manifest; paths stay relative to the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    records = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
        rec = ManifestRecord(*parts)
        if rec.subset not in ("train", "eval"):
            raise FormatError(f"{path}:{lineno}: subset must be train or eval")
        key = (rec.speaker, rec.utterance, rec.subset)
        if key in seen:
            raise FormatError(f"{path}:{lineno}: duplicate record {key}")
        seen.add(key)
        if check_paths and not (path.parent / rec.wav_path).is_file():
            raise FormatError(f"{path}:{lineno}: missing file {rec.wav_path}")
        records.append(rec)
    return records


def speaker_index(records: Sequence[ManifestRecord]) -> Dict[str, int]:
    return {s: i for i, s in enumerate(sorted({r.speaker for r in records}))}


def sentence_plan(spec: CorpusSpec) -> Dict[str, List[int]]:
    """Training sentence ids per speaker."""
    ids = list(range(spec.train_utterances))
    if spec.parallel:
        return {s.name: ids for s in spec.speakers}
    chunks = np.array_split(np.array(ids), len(spec.speakers))
    return {s.name: [int(i) for i in c] for s, c in zip(spec.speakers, chunks)}


def gen_synthetic_corpus(spec: CorpusSpec, out_dir, force: bool = False) -> List[ManifestRecord]:
    """Render the corpus under ``out_dir`` and write ``manifest.tsv``.

    Training sentences are ``u000..``; evaluation sentences continue the
    numbering and are shared by all speakers in both modes.
    """
    spec.validate()
    out = Path(out_dir)
    manifest = out / "manifest.tsv"
    if manifest.exists() and not force:
        raise ConfigError(f"{manifest} already exists (use --force to overwrite)")
    n_sent = spec.train_utterances + spec.eval_utterances
    sentences = [
        make_sentence(np.random.default_rng([spec.seed, 0, i]), spec.phones_per_utterance, spec.gap_prob)
        for i in range(n_sent)
    ]
    plan = sentence_plan(spec)
    records = []
    for k, spk in enumerate(spec.speakers):
        d = out / "wav" / spk.name
        d.mkdir(parents=True, exist_ok=True)
        subsets = [(i, "train") for i in plan[spk.name]]
        subsets += [(i, "eval") for i in range(spec.train_utterances, n_sent)]
        for i, subset in subsets:
            rng = np.random.default_rng([spec.seed, 1, k, i])
            x, segs = render(sentences[i], spk, rng, spec.duration_jitter, spec.noise_level)
            utt = f"u{i:03d}"
            write_wav(d / f"{utt}.wav", x)
            (d / f"{utt}.lab").write_text(
                "".join(f"{s}\t{e}\t{lab}\n" for s, e, lab in segs), encoding="utf-8"
            )
            records.append(ManifestRecord(f"wav/{spk.name}/{utt}.wav", spk.name, utt, subset))
    write_manifest(manifest, records)
    (out / "speakers.tsv").write_text(
        "# name\tformant_scale\tf0_mean\n"
        + "".join(f"{s.name}\t{s.formant_scale}\t{s.f0_mean}\n" for s in spec.speakers),
        encoding="utf-8",
    )
    return records


def read_labels(path) -> List[Tuple[int, int, str]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        s, e, lab = line.split("\t")
        out.append((int(s), int(e), lab))
    return out
