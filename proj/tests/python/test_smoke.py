"""Smoke tests for the Python bindings: coding round trip, training,
persistence, curve comparison, and error mapping."""

import math

import numpy as np
import pytest

import hcfs


@pytest.fixture(scope="module")
def model():
    return hcfs.Model.random("micro", seed=3)


@pytest.fixture(scope="module")
def image():
    rng = np.random.default_rng(42)
    return rng.integers(0, 256, size=(32, 48, 3), dtype=np.uint8)


def test_selftest_passes():
    assert hcfs.selftest() == 0


def test_encode_decode_roundtrip(model, image):
    blob = model.encode(image)
    assert isinstance(blob, bytes) and len(blob) > 0
    rec = model.decode(blob)
    assert rec.shape == image.shape and rec.dtype == np.uint8
    assert model.encode(image) == blob  # deterministic


def test_eval_consistency(model, image):
    r = model.eval(image)
    assert set(r) == {"bpp", "psnr", "mse", "bytes", "width", "height"}
    assert r["width"] == 48 and r["height"] == 32
    assert r["bpp"] == pytest.approx(r["bytes"] * 8 / (48 * 32))
    assert r["psnr"] == pytest.approx(hcfs.psnr_from_mse(r["mse"]))


def test_train_toy_descends_and_is_deterministic():
    m1 = hcfs.Model.random("micro", seed=5)
    t1 = hcfs.train_toy(m1, steps=6, images=4, image_size=64, seed=11)
    assert [row["step"] for row in t1] == list(range(6))
    assert all(math.isfinite(row["loss"]) for row in t1)
    m2 = hcfs.Model.random("micro", seed=5)
    t2 = hcfs.train_toy(m2, steps=6, images=4, image_size=64, seed=11)
    assert [r["loss"] for r in t1] == [r["loss"] for r in t2]


def test_save_load_preserves_coding(tmp_path, model, image):
    blob = model.encode(image)
    path = str(tmp_path / "m.ckpt")
    model.save(path)
    again = hcfs.Model.load(path)
    assert again.encode(image) == blob
    assert again.config == model.config


def test_lambda_index_property(model):
    assert len(hcfs.lambdas()) == 6
    model.lambda_index = 2
    assert model.lambda_index == 2
    with pytest.raises(ValueError):
        model.lambda_index = 99


def test_config_dict_roundtrip():
    m = hcfs.Model.random({"c": 8, "m": 12, "cz": 8, "hyper": 8}, seed=1)
    assert m.config["c"] == 8 and m.config["m"] == 12


def test_bd_rate_fixtures():
    anchor = [(0.25, 30.0), (0.5, 33.0), (1.0, 36.0), (2.0, 39.0)]
    up = [(b * 1.1, p) for b, p in anchor]
    down = [(b * 0.8, p) for b, p in anchor]
    assert hcfs.bd_rate(anchor, anchor) == pytest.approx(0.0, abs=1e-9)
    assert hcfs.bd_rate(anchor, up) == pytest.approx(10.0, abs=1e-6)
    assert hcfs.bd_rate(anchor, down) == pytest.approx(-20.0, abs=1e-6)


def test_error_mapping(model):
    with pytest.raises(ValueError):
        model.decode(b"not a container")
    with pytest.raises(OSError):
        hcfs.Model.load("/nonexistent/path.ckpt")
    with pytest.raises(ValueError):
        model.encode(np.zeros((4, 4), dtype=np.uint8))  # wrong rank
