"""Mel-cepstral distortion and system comparison reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .alignment import dtw, vad
from .errors import ConfigError, EvaluationError, ShapeError
from .features import MCC_ALPHA, MCC_ORDER, mcc, normalize_energy

MCD_CONST = 10.0 / math.log(10.0)
CSV_COLUMNS = ("system", "pair", "utterance", "frames", "mcd_db")


def mcd_frame(c, c_ref) -> float:
    """(10 / ln 10) * sqrt(2 * sum_d (c_d - c_ref_d)^2), c0 already excluded."""
    return float(mcd_frames(np.atleast_2d(c), np.atleast_2d(c_ref))[0])


def mcd_frames(c: np.ndarray, c_ref: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    c_ref = np.asarray(c_ref, dtype=np.float64)
    if c.shape != c_ref.shape:
        raise ShapeError(f"MCC shapes differ: {c.shape} vs {c_ref.shape}")
    return MCD_CONST * np.sqrt(2.0 * np.sum((c - c_ref) ** 2, axis=-1))


@dataclass
class UtteranceScore:
    utterance: str
    frames: int
    mcd: float


def mcd_utterance(
    converted_sp,
    reference_sp,
    align: bool = True,
    converted_energy=None,
    reference_energy=None,
    margin_db: float = 40.0,
    order: int = MCC_ORDER,
    alpha: float = MCC_ALPHA,
) -> Tuple[float, int]:
    """Mean MCD over speech frames; returns ``(mcd_db, frames_used)``.

    Spectra are linear magnitude (unit-sum or not). Energies default to the
    frame sums of the spectra given. With ``align`` the converted frames are
    DTW-aligned to the reference (one pair per reference frame); otherwise
    frames are compared index by index over the common length. A frame pair
    counts only if both sides pass the VAD.
    """
    conv = np.asarray(converted_sp, dtype=np.float64)
    ref = np.asarray(reference_sp, dtype=np.float64)
    if conv.shape[0] == 0 or ref.shape[0] == 0:
        raise EvaluationError("empty utterance")
    if conv.shape[1] != ref.shape[1]:
        raise ShapeError("converted and reference spectra differ in bin count")
    e_conv = normalize_energy(conv)[1] if converted_energy is None else np.asarray(converted_energy)
    e_ref = normalize_energy(ref)[1] if reference_energy is None else np.asarray(reference_energy)
    c_conv = mcc(conv, order, alpha)
    c_ref = mcc(ref, order, alpha)
    speech_conv = vad(e_conv, margin_db)
    speech_ref = vad(e_ref, margin_db)
    if align:
        path, _ = dtw(c_ref, c_conv)
        first = {}
        for i, j in path:
            first.setdefault(i, j)
        ri = np.arange(c_ref.shape[0])
        ci = np.array([first[i] for i in ri])
    else:
        n = min(c_ref.shape[0], c_conv.shape[0])
        ri = ci = np.arange(n)
    keep = speech_ref[ri] & speech_conv[ci]
    if not np.any(keep):
        raise EvaluationError("no speech frames to evaluate")
    d = mcd_frames(c_conv[ci[keep]], c_ref[ri[keep]])
    return float(d.mean()), int(keep.sum())


@dataclass
class McdReport:
    system: str
    pair: str
    utterances: List[UtteranceScore] = field(default_factory=list)

    @property
    def frames(self) -> int:
        return sum(u.frames for u in self.utterances)

    @property
    def mean(self) -> float:
        """Frame-weighted mean of the utterance means."""
        if not self.utterances:
            raise EvaluationError(f"{self.system}/{self.pair}: no utterances")
        w = np.array([u.frames for u in self.utterances], dtype=np.float64)
        m = np.array([u.mcd for u in self.utterances])
        return float(np.sum(np.sort(w * m)) / w.sum())

    @property
    def std(self) -> float:
        m = np.array(sorted(u.mcd for u in self.utterances))
        return float(m.std())


def compare_systems(reports: Sequence[McdReport]):
    """Rank reports by corpus mean MCD (ties broken by label).

    Returns ``(ranked_reports, csv_text, table_text)``.
    """
    if not reports:
        raise ConfigError("no reports to compare")
    ranked = sorted(reports, key=lambda r: (r.mean, r.system, r.pair))
    return ranked, reports_csv(ranked), format_table(ranked)


def reports_csv(reports: Sequence[McdReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        for u in r.utterances:
            w.writerow([r.system, r.pair, u.utterance, u.frames, f"{u.mcd:.6f}"])
    return buf.getvalue()


def read_reports_csv(text: str) -> List[McdReport]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out: dict = {}
    for row in rows:
        key = (row["system"], row["pair"])
        rep = out.setdefault(key, McdReport(*key))
        rep.utterances.append(UtteranceScore(row["utterance"], int(row["frames"]), float(row["mcd_db"])))
    return list(out.values())


def format_table(reports: Sequence[McdReport]) -> str:
    head = f"{'rank':>4}  {'system':<16} {'pair':<20} {'utts':>5} {'frames':>7} {'mean MCD':>9} {'std':>7}"
    lines = [head, "-" * len(head)]
    for k, r in enumerate(reports, 1):
        lines.append(
            f"{k:>4}  {r.system:<16} {r.pair:<20} {len(r.utterances):>5} {r.frames:>7} {r.mean:>9.3f} {r.std:>7.3f}"
        )
    return "\n".join(lines) + "\n"
