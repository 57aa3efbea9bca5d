"""Binary feature bundles, model files and flat ``key = value`` configs.

Feature bundle (little-endian)::

    b"VCFB" | version u32 | n_sections u32
    per section: name_len u32 | name utf-8 | rows u32 | cols u32 | float32[rows*cols]

Model file (little-endian)::

    b"VCMD" | version u32 | input_dim u32 | latent_dim u32 | speaker_dim u32
    | n_hidden u32 | hidden widths u32[n_hidden]
    | per speaker: name_len u32 | name utf-8
    | float64 parameter tensors in VaeModel.tensors() order
    | float64 feature_mean[input_dim] | float64 feature_std[input_dim]
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from .errors import FormatError
from .features import MCC_ORDER, N_BINS
from .vae import VaeModel, init_vae

BUNDLE_MAGIC = b"VCFB"
BUNDLE_VERSION = 1
MODEL_MAGIC = b"VCMD"
MODEL_VERSION = 1

BUNDLE_DIMS = {
    "log_sp": N_BINS,
    "sp": N_BINS,
    "mcc": MCC_ORDER,
    "f0": 1,
    "energy": 1,
    "phase": N_BINS,
}


def encode_bundle(sections: Mapping[str, np.ndarray]) -> bytes:
    parts = [BUNDLE_MAGIC, struct.pack("<II", BUNDLE_VERSION, len(sections))]
    for name, arr in sections.items():
        arr = np.asarray(arr, dtype="<f4")
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise FormatError(f"section {name!r} must be 1-D or 2-D")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<II", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode_bundle(data: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    if data[:4] != BUNDLE_MAGIC:
        raise FormatError(f"{source}: not a feature bundle")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != BUNDLE_VERSION:
            raise FormatError(f"{source}: unsupported bundle version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            size = rows * cols * 4
            if pos + size > len(data):
                raise FormatError(f"{source}: section {name!r} truncated")
            out[name] = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
            pos += size
    except struct.error as exc:
        raise FormatError(f"{source}: truncated bundle") from exc
    if pos != len(data):
        raise FormatError(f"{source}: trailing bytes after last section")
    return out


def validate_bundle(sections: Mapping[str, np.ndarray], source: str = "<bundle>") -> None:
    rows = None
    for name, arr in sections.items():
        want = BUNDLE_DIMS.get(name)
        if want is not None and arr.shape[1] != want:
            raise FormatError(f"{source}: section {name!r} has {arr.shape[1]} columns, expected {want}")
        if name in BUNDLE_DIMS:
            if rows is not None and arr.shape[0] != rows:
                raise FormatError(f"{source}: sections disagree on frame count")
            rows = arr.shape[0]


def write_bundle(path, sections: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_bundle(sections))


def read_bundle(path, required=()) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    sections = decode_bundle(data, str(path))
    validate_bundle(sections, str(path))
    missing = [r for r in required if r not in sections]
    if missing:
        raise FormatError(f"{path}: missing sections {missing}")
    return sections


def encode_model(model: VaeModel) -> bytes:
    hidden = model.hidden
    parts = [
        MODEL_MAGIC,
        struct.pack("<IIIII", MODEL_VERSION, model.input_dim, model.latent_dim, model.speaker_dim, len(hidden)),
        struct.pack(f"<{len(hidden)}I", *hidden),
    ]
    speakers = model.speakers or tuple(f"speaker{i}" for i in range(model.speaker_dim))
    for s in speakers:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    for t in model.tensors() + [model.feature_mean, model.feature_std]:
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_model(data: bytes, source: str = "<bytes>") -> VaeModel:
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"{source}: not a model file")
    try:
        version, d_in, d_lat, d_spk, n_hidden = struct.unpack_from("<IIIII", data, 4)
        if version != MODEL_VERSION:
            raise FormatError(f"{source}: unsupported model version {version}")
        pos = 24
        hidden = struct.unpack_from(f"<{n_hidden}I", data, pos)
        pos += 4 * n_hidden
        speakers = []
        for _ in range(d_spk):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            speakers.append(data[pos : pos + n].decode("utf-8"))
            pos += n
    except struct.error as exc:
        raise FormatError(f"{source}: truncated model header") from exc
    model = init_vae(d_in, d_spk, d_lat, hidden, seed=0, speakers=speakers)
    targets = model.tensors() + [model.feature_mean, model.feature_std]
    need = sum(t.size for t in targets) * 8
    if len(data) - pos != need:
        raise FormatError(f"{source}: expected {need} parameter bytes, found {len(data) - pos}")
    for t in targets:
        t[...] = np.frombuffer(data, dtype="<f8", count=t.size, offset=pos).reshape(t.shape)
        pos += t.size * 8
    return model


def save_model(path, model: VaeModel) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> VaeModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    return decode_model(data, str(path))


def parse_config(text: str, source: str = "<config>") -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def format_config(values: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
