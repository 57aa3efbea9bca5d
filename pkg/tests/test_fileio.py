import struct

import numpy as np
import pytest

from vaevc.errors import ConfigError, FormatError
from vaevc.fileio import (
    decode_bundle,
    decode_model,
    encode_bundle,
    encode_model,
    format_config,
    load_model,
    parse_config,
    read_bundle,
    save_model,
    write_bundle,
)
from vaevc.pipeline import RunConfig
from vaevc.vae import convert_frame, fit_feature_stats, init_vae


def test_bundle_layout():
    data = encode_bundle({"f0": np.array([1.5, 0.0])})
    assert data[:4] == b"VCFB"
    assert struct.unpack_from("<II", data, 4) == (1, 1)
    assert struct.unpack_from("<I", data, 12) == (2,)
    assert data[16:18] == b"f0"
    assert struct.unpack_from("<II", data, 18) == (2, 1)
    assert struct.unpack_from("<2f", data, 26) == (1.5, 0.0)
    assert len(data) == 34


def test_bundle_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    sec = {"log_sp": rng.standard_normal((3, 513)), "mcc": rng.standard_normal((3, 24)), "energy": np.zeros(3)}
    write_bundle(tmp_path / "a.vcfb", sec)
    back = read_bundle(tmp_path / "a.vcfb", ("mcc",))
    np.testing.assert_array_equal(back["mcc"], sec["mcc"].astype(np.float32))
    assert back["energy"].shape == (3, 1)
    assert encode_bundle(back) == (tmp_path / "a.vcfb").read_bytes()


def test_bundle_validation(tmp_path):
    write_bundle(tmp_path / "w.vcfb", {"mcc": np.zeros((2, 23))})
    with pytest.raises(FormatError, match="columns"):
        read_bundle(tmp_path / "w.vcfb")
    write_bundle(tmp_path / "r.vcfb", {"mcc": np.zeros((2, 24)), "f0": np.zeros(3)})
    with pytest.raises(FormatError, match="frame count"):
        read_bundle(tmp_path / "r.vcfb")
    write_bundle(tmp_path / "m.vcfb", {"f0": np.zeros(3)})
    with pytest.raises(FormatError, match="missing"):
        read_bundle(tmp_path / "m.vcfb", ("mcc",))
    with pytest.raises(FormatError):
        read_bundle(tmp_path / "nope.vcfb")


def test_bundle_corruption():
    data = encode_bundle({"f0": np.zeros(4)})
    with pytest.raises(FormatError):
        decode_bundle(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        decode_bundle(data[:-3])
    with pytest.raises(FormatError):
        decode_bundle(data + b"\0")
    with pytest.raises(FormatError):
        decode_bundle(data[:4] + struct.pack("<I", 9) + data[8:])


def trained_like_model():
    m = init_vae(12, 3, 4, (10, 9), seed=2, speakers=["a", "b", "c"])
    return fit_feature_stats(m, np.random.default_rng(0).standard_normal((20, 12)))


def test_model_round_trip(tmp_path):
    m = trained_like_model()
    save_model(tmp_path / "m.vcmd", m)
    back = load_model(tmp_path / "m.vcmd")
    assert back.speakers == ("a", "b", "c")
    assert back.hidden == (10, 9)
    assert all(np.array_equal(x, y) for x, y in zip(back.tensors(), m.tensors()))
    assert encode_model(back) == (tmp_path / "m.vcmd").read_bytes()
    x = np.random.default_rng(1).standard_normal(12)
    assert np.array_equal(convert_frame(back, x, 2), convert_frame(m, x, 2))


def test_model_corruption():
    data = encode_model(trained_like_model())
    with pytest.raises(FormatError):
        decode_model(b"VCFB" + data[4:])
    with pytest.raises(FormatError, match="parameter bytes"):
        decode_model(data[:-8])
    with pytest.raises(FormatError):
        decode_model(data[:10])


def test_config_parsing():
    text = "# run\nvariant = pair\nseed=3  # inline\n\nhidden = 64, 32\n"
    values = parse_config(text)
    assert values == {"variant": "pair", "seed": "3", "hidden": "64, 32"}
    assert parse_config(format_config(values)) == values
    with pytest.raises(FormatError):
        parse_config("just words")
    with pytest.raises(FormatError):
        parse_config(" = 3")


def test_run_config():
    cfg = RunConfig.from_mapping({"variant": "pair", "seed": "1", "source": "a", "target": "b", "hidden": "8,4"})
    assert cfg.hidden == (8, 4) and cfg.lr == 1e-4 and cfg.epochs == 200
    assert RunConfig.from_mapping(parse_config(cfg.to_text())) == cfg
    with pytest.raises(ConfigError, match="seed"):
        RunConfig.from_mapping({"variant": "multi"})
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_mapping({"variant": "multi", "seed": "0", "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"variant": "pair", "seed": "0"})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"variant": "big", "seed": "0"})
    with pytest.raises(ConfigError, match="lr"):
        RunConfig.from_mapping({"variant": "multi", "seed": "0", "lr": "fast"})
