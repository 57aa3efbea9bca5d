"""End-to-end orchestration behind the command-line tools.

Directory conventions (all relative paths resolve against the manifest's
directory):

* ``<corpus>/manifest.tsv`` and ``<corpus>/wav/<speaker>/<utt>.wav``
* ``<features>/<subset>/<speaker>/<utt>.vcfb``
* converted output: ``<out>/<utt>.vcfb``, ``<out>/<utt>.wav`` and
  ``<out>/conversion.txt`` naming system, source, target and pair label
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import features as ft
from .alignment import apply_alignment, dtw, vad, write_alignment_csv
from .corpus import ManifestRecord, read_manifest
from .enmf import build_dictionary, enmf_convert
from .errors import ConfigError, FormatError
from .evaluation import McdReport, UtteranceScore, mcd_utterance
from .fileio import format_config, parse_config, read_bundle, write_bundle
from .vae import TrainConfig, TrainingSet, VaeModel, convert_utterance, fit_feature_stats, init_vae, train
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

VARIANTS = ("pair", "multi", "disj", "enmf")


@dataclass
class RunConfig:
    variant: str
    seed: int
    source: str = ""
    target: str = ""
    manifest: str = ""
    features: str = ""
    out: str = ""
    hidden: Tuple[int, ...] = (512, 512)
    latent_dim: int = 64
    batch_size: int = 128
    lr: float = 1e-4
    epochs: int = 200
    samples: int = 1
    K: int = 512
    iterations: int = 100
    margin_db: float = 40.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {', '.join(VARIANTS)}")
        if self.variant in ("pair", "disj", "enmf") and not (self.source and self.target):
            raise ConfigError(f"variant {self.variant} needs source and target")
        if self.source and self.source == self.target and self.variant != "multi":
            raise ConfigError("source and target must differ")

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(fields))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("variant", "seed"):
            if key not in values:
                raise ConfigError(f"config is missing required key {key!r}")
        kwargs = {}
        for key, raw in values.items():
            default = fields[key].default
            try:
                if key == "hidden":
                    kwargs[key] = tuple(int(v) for v in raw.split(",") if v.strip())
                elif key == "seed" or isinstance(default, int):
                    kwargs[key] = int(raw)
                elif isinstance(default, float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        return cls.from_mapping(parse_config(text, str(path)))

    def to_text(self) -> str:
        d = dataclasses.asdict(self)
        d["hidden"] = ",".join(str(h) for h in self.hidden)
        return format_config(d)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed, samples=self.samples
        )


def _ensure_writable(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ConfigError(f"{path} already exists (use --force to overwrite)")


# ---------------------------------------------------------------- extraction


def extract_features(samples: np.ndarray, sample_rate: int = ft.SAMPLE_RATE) -> Dict[str, np.ndarray]:
    a = ft.analyze(ft.Waveform(samples, sample_rate))
    unit, energy = ft.normalize_energy(a.sp)
    return {
        "log_sp": ft.to_log_sp(unit),
        "sp": unit,
        "mcc": ft.mcc(unit),
        "f0": a.f0,
        "energy": energy,
        "phase": a.phase,
    }


def feature_path(features_dir, rec: ManifestRecord) -> Path:
    return Path(features_dir) / rec.subset / rec.speaker / f"{rec.utterance}.vcfb"


def extract_corpus(manifest, out_dir=None, force: bool = False) -> List[Path]:
    manifest = Path(manifest)
    records = read_manifest(manifest)
    out_dir = Path(out_dir) if out_dir else manifest.parent / "features"
    written = []
    for rec in records:
        wav = manifest.parent / rec.wav_path
        dest = feature_path(out_dir, rec)
        _ensure_writable(dest, force)
        samples, rate = read_wav(wav)
        try:
            sections = extract_features(samples, rate)
        except ValueError as exc:
            raise FormatError(f"{wav}: {exc}") from exc
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_bundle(dest, sections)
        written.append(dest)
    return written


def load_features(features_dir, rec: ManifestRecord, required=("log_sp",)) -> Dict[str, np.ndarray]:
    path = feature_path(features_dir, rec)
    if not path.is_file():
        raise ConfigError(f"missing features {path} (run extract first)")
    return read_bundle(path, required)


def _select(records, speaker=None, subset=None) -> List[ManifestRecord]:
    return [
        r for r in records if (speaker is None or r.speaker == speaker) and (subset is None or r.subset == subset)
    ]


def _check_speakers(records, *names) -> None:
    known = sorted({r.speaker for r in records})
    for n in names:
        if n not in known:
            raise ConfigError(f"unknown speaker {n!r}; known speakers: {', '.join(known)}")


def is_parallel(records, source: str, target: str) -> bool:
    s = {r.utterance for r in _select(records, source, "train")}
    t = {r.utterance for r in _select(records, target, "train")}
    return bool(s & t)


# ------------------------------------------------------------------ training


def training_speakers(cfg: RunConfig, records) -> List[str]:
    if cfg.variant == "multi":
        return sorted({r.speaker for r in records})
    _check_speakers(records, cfg.source, cfg.target)
    return sorted({cfg.source, cfg.target})


def build_training_set(cfg: RunConfig, records, features_dir) -> Tuple[TrainingSet, List[str]]:
    speakers = training_speakers(cfg, records)
    if cfg.variant == "disj":
        s = {r.utterance for r in _select(records, cfg.source, "train")}
        t = {r.utterance for r in _select(records, cfg.target, "train")}
        if s & t:
            raise ConfigError(
                "variant disj needs non-parallel training data, but source and target "
                f"share {len(s & t)} training sentences (generate the corpus with --disjoint)"
            )
    index = {s: i for i, s in enumerate(speakers)}
    frames, codes = [], []
    for rec in records:
        if rec.subset != "train" or rec.speaker not in index:
            continue
        x = load_features(features_dir, rec)["log_sp"]
        frames.append(x)
        codes.append(np.full(x.shape[0], index[rec.speaker]))
    if not frames:
        raise ConfigError("no training frames for the selected speakers")
    return TrainingSet(np.concatenate(frames), np.concatenate(codes), len(speakers)), speakers


def train_variant(cfg: RunConfig, records, features_dir):
    if cfg.variant == "enmf":
        raise ConfigError("variant enmf has no training step; use the enmf command")
    data, speakers = build_training_set(cfg, records, features_dir)
    model = init_vae(data.frames.shape[1], len(speakers), cfg.latent_dim, cfg.hidden, cfg.seed, speakers)
    model = fit_feature_stats(model, data.frames)
    log.info("training %s on %d frames, speakers %s", cfg.variant, len(data), speakers)
    return train(model, data, cfg.train_config()), data


def write_history(path, history) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "kld", "loglik", "elbo"])
        for k, h in enumerate(history, 1):
            w.writerow([k, repr(h.kld), repr(h.loglik), repr(h.elbo)])


# ---------------------------------------------------------------- conversion


def speaker_f0_stats(records, features_dir, speaker: str) -> ft.F0Stats:
    tracks = [load_features(features_dir, r, ("f0",))["f0"][:, 0] for r in _select(records, speaker, "train")]
    return ft.f0_stats(tracks)


def pair_label(corpus_dir, source: str, target: str) -> str:
    """``src->tgt`` plus a near/far tag when speaker profiles are on disk."""
    label = f"{source}->{target}"
    path = Path(corpus_dir) / "speakers.tsv"
    if path.is_file():
        scales = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            if line and not line.startswith("#"):
                name, scale, _ = line.split("\t")
                scales[name] = float(scale)
        if source in scales and target in scales:
            ratio = abs(np.log(scales[target] / scales[source]))
            label += "/near" if ratio < np.log(1.15) else "/far"
    return label


def write_converted(out_dir: Path, utt: str, unit_sp, src: Dict[str, np.ndarray], f0) -> None:
    sections = {
        "log_sp": ft.to_log_sp(unit_sp),
        "sp": unit_sp,
        "mcc": ft.mcc(unit_sp),
        "f0": f0,
        "energy": src["energy"][:, 0],
        "phase": src["phase"],
    }
    write_bundle(out_dir / f"{utt}.vcfb", sections)
    wave = ft.synthesize(unit_sp, src["energy"][:, 0], src["phase"])
    write_wav(out_dir / f"{utt}.wav", wave.samples)


def _write_meta(out_dir: Path, system: str, source: str, target: str, pair: str) -> None:
    (out_dir / "conversion.txt").write_text(
        format_config({"system": system, "source": source, "target": target, "pair": pair}), encoding="utf-8"
    )


def convert_corpus(
    model: VaeModel,
    manifest,
    source: str,
    target: str,
    out_dir,
    features_dir=None,
    system: str = "VAE",
    force: bool = False,
) -> List[str]:
    """Convert every eval utterance of ``source`` towards ``target``."""
    manifest = Path(manifest)
    records = read_manifest(manifest)
    features_dir = Path(features_dir) if features_dir else manifest.parent / "features"
    known = list(model.speakers)
    for name in (source, target):
        if name not in known:
            raise ConfigError(f"unknown speaker {name!r}; model knows: {', '.join(known)}")
    _check_speakers(records, source, target)
    out_dir = Path(out_dir)
    _ensure_writable(out_dir / "conversion.txt", force)
    out_dir.mkdir(parents=True, exist_ok=True)
    code = known.index(target)
    src_stats = speaker_f0_stats(records, features_dir, source)
    tgt_stats = speaker_f0_stats(records, features_dir, target)
    done = []
    for rec in _select(records, source, "eval"):
        feats = load_features(features_dir, rec, ("log_sp", "f0", "energy", "phase"))
        log_sp = convert_utterance(model, feats["log_sp"], code)
        # decoder output is only approximately unit-sum; energy is restored against a unit-sum frame
        unit, _ = ft.normalize_energy(ft.from_log_sp(log_sp))
        f0 = ft.f0_convert(feats["f0"][:, 0], src_stats, tgt_stats)
        write_converted(out_dir, rec.utterance, unit, feats, f0)
        done.append(rec.utterance)
    _write_meta(out_dir, system, source, target, pair_label(manifest.parent, source, target))
    return done


def aligned_training_pairs(records, features_dir, source: str, target: str, margin_db: float = 40.0):
    """DTW-align parallel training utterances, then drop pairs with silence on either side.

    Returns ``(src_frames, tgt_frames, alignments)`` where frames are
    unit-sum linear spectra and ``alignments`` maps utterance id to path.
    """
    if not is_parallel(records, source, target):
        raise ConfigError("ENMF requires parallel training data")
    src_recs = {r.utterance: r for r in _select(records, source, "train")}
    tgt_recs = {r.utterance: r for r in _select(records, target, "train")}
    xs, ys, paths = [], [], {}
    for utt in sorted(set(src_recs) & set(tgt_recs)):
        a = load_features(features_dir, src_recs[utt], ("sp", "mcc", "energy"))
        b = load_features(features_dir, tgt_recs[utt], ("sp", "mcc", "energy"))
        path, _ = dtw(a["mcc"], b["mcc"])
        paths[utt] = path
        sa, sb = apply_alignment(path, a["sp"], b["sp"])
        keep = vad(a["energy"][:, 0], margin_db) & vad(b["energy"][:, 0], margin_db)[
            _first_targets(path, sa.shape[0])
        ]
        xs.append(sa[keep])
        ys.append(sb[keep])
    return np.concatenate(xs), np.concatenate(ys), paths


def _first_targets(path, n_src: int) -> np.ndarray:
    first = {}
    for i, j in path:
        first.setdefault(i, j)
    return np.array([first[i] for i in range(n_src)], dtype=np.int64)


def enmf_corpus(
    manifest,
    source: str,
    target: str,
    out_dir,
    K: int = 512,
    seed: int = 0,
    features_dir=None,
    iterations: int = 100,
    margin_db: float = 40.0,
    force: bool = False,
) -> List[str]:
    manifest = Path(manifest)
    records = read_manifest(manifest)
    features_dir = Path(features_dir) if features_dir else manifest.parent / "features"
    _check_speakers(records, source, target)
    out_dir = Path(out_dir)
    _ensure_writable(out_dir / "conversion.txt", force)
    src, tgt, paths = aligned_training_pairs(records, features_dir, source, target, margin_db)
    dictionary = build_dictionary(src, tgt, K, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_bundle(
        out_dir / "dictionary.vcfb",
        {"K": np.array([[dictionary.K]]), "src_basis": dictionary.src_basis, "tgt_basis": dictionary.tgt_basis},
    )
    align_dir = out_dir / "alignments"
    align_dir.mkdir(exist_ok=True)
    for utt, path in paths.items():
        write_alignment_csv(align_dir / f"{utt}.csv", path)
    src_stats = speaker_f0_stats(records, features_dir, source)
    tgt_stats = speaker_f0_stats(records, features_dir, target)
    done = []
    for rec in _select(records, source, "eval"):
        feats = load_features(features_dir, rec, ("sp", "f0", "energy", "phase"))
        unit = enmf_convert(dictionary, feats["sp"], iterations)
        f0 = ft.f0_convert(feats["f0"][:, 0], src_stats, tgt_stats)
        write_converted(out_dir, rec.utterance, unit, feats, f0)
        done.append(rec.utterance)
    _write_meta(out_dir, f"ENMF-{K}", source, target, pair_label(manifest.parent, source, target))
    return done


# ---------------------------------------------------------------- evaluation


def reference_spectra(manifest: Path, rec: ManifestRecord) -> np.ndarray:
    samples, _ = read_wav(manifest.parent / rec.wav_path)
    return np.abs(ft.stft(samples))


def evaluate_converted(converted_dir, manifest, align: bool = True, margin_db: float = 40.0) -> McdReport:
    converted_dir = Path(converted_dir)
    manifest = Path(manifest)
    meta_path = converted_dir / "conversion.txt"
    if not meta_path.is_file():
        raise ConfigError(f"{converted_dir} is not a conversion output (no conversion.txt)")
    meta = parse_config(meta_path.read_text(encoding="utf-8"), str(meta_path))
    records = read_manifest(manifest)
    refs = {r.utterance: r for r in _select(records, meta["target"], "eval")}
    report = McdReport(meta["system"], meta["pair"])
    for utt in sorted(p.stem for p in converted_dir.glob("*.vcfb") if p.stem != "dictionary"):
        if utt not in refs:
            raise ConfigError(f"no reference utterance {utt!r} for speaker {meta['target']}")
        conv = read_bundle(converted_dir / f"{utt}.vcfb", ("sp", "energy"))
        ref = reference_spectra(manifest, refs[utt])
        mcd, n = mcd_utterance(conv["sp"], ref, align, conv["energy"][:, 0], None, margin_db)
        report.utterances.append(UtteranceScore(utt, n, mcd))
    return report


def evaluate_baseline(manifest, source: str, target: str, align: bool = True, margin_db: float = 40.0) -> McdReport:
    """MCD between unconverted source and target eval utterances."""
    manifest = Path(manifest)
    records = read_manifest(manifest)
    _check_speakers(records, source, target)
    refs = {r.utterance: r for r in _select(records, target, "eval")}
    report = McdReport("source", pair_label(manifest.parent, source, target))
    for rec in sorted(_select(records, source, "eval"), key=lambda r: r.utterance):
        if rec.utterance in refs:
            mcd, n = mcd_utterance(
                reference_spectra(manifest, rec), reference_spectra(manifest, refs[rec.utterance]), align,
                margin_db=margin_db,
            )
            report.utterances.append(UtteranceScore(rec.utterance, n, mcd))
    return report
