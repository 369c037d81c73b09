import json

import numpy as np
import pytest
import torch

import importlib

from nanodenoise.dataio import save_image
from nanodenoise.losses import Loss
from nanodenoise.models import Architecture
from nanodenoise.train import (
    TrainConfig,
    evaluate_model,
    infer,
    load_checkpoint,
    save_checkpoint,
    train,
)


@pytest.fixture(scope="module")
def manifest_path(tmp_path_factory):
    """Four synthetic 64x64 pairs: blurred spots (clean) plus noise (noisy)."""
    root = tmp_path_factory.mktemp("toydata")
    rng = np.random.default_rng(0)
    pairs = []
    for i in range(4):
        clean = np.zeros((64, 64))
        ys, xs = rng.integers(8, 56, size=5), rng.integers(8, 56, size=5)
        clean[ys, xs] = 1.0
        yy, xx = np.mgrid[-4:5, -4:5]
        kernel = np.exp(-(yy**2 + xx**2) / 8.0)
        padded = np.zeros((72, 72))
        padded[4:68, 4:68] = clean
        blurred = np.zeros((64, 64))
        for dy in range(9):
            for dx in range(9):
                blurred += kernel[dy, dx] * padded[dy : dy + 64, dx : dx + 64]
        noisy = blurred + 0.2 * rng.random((64, 64))
        noisy_path = save_image(root / f"p{i}_noisy.raw", noisy)
        clean_path = save_image(root / f"p{i}_clean.raw", blurred)
        pairs.append(
            {
                "id": f"p{i}",
                "split": "train" if i < 3 else "test",
                "paths": {
                    "noisy_nanoscopy": str(noisy_path),
                    "clean_nanoscopy": str(clean_path),
                },
            }
        )
    path = root / "manifest.json"
    path.write_text(json.dumps({"config": {}, "pairs": pairs}))
    return path


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="learning rate"):
            TrainConfig(manifest="m", learning_rate=0.0)
        with pytest.raises(ValueError, match="one optimizer step"):
            TrainConfig(manifest="m", steps=0)
        with pytest.raises(ValueError, match="multiple"):
            TrainConfig(manifest="m", crop_size=100)

    def test_dict_roundtrip(self):
        config = TrainConfig(
            manifest="m",
            architecture=Architecture.FPN_R34,
            loss=Loss.MSSSIM_L1,
            steps=7,
            crop_size=64,
        )
        assert TrainConfig.from_dict(config.to_dict()) == config

    def test_dict_is_json_serializable(self):
        config = TrainConfig(manifest="m")
        assert TrainConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config


class TestTrain:
    def test_short_run_produces_curve_and_model(self, manifest_path):
        config = TrainConfig(
            manifest=str(manifest_path), steps=3, batch_size=1, crop_size=64
        )
        result = train(config)
        assert len(result.loss_curve) == 3
        assert all(np.isfinite(v) for v in result.loss_curve)
        assert result.config == config
        pred = infer(result.model, np.random.default_rng(1).random((64, 64)))
        assert pred.shape == (64, 64)

    def test_deterministic(self, manifest_path):
        config = TrainConfig(
            manifest=str(manifest_path), steps=3, batch_size=1, crop_size=64, seed=9
        )
        a = train(config)
        b = train(config)
        assert a.loss_curve == b.loss_curve
        for pa, pb in zip(a.model.parameters(), b.model.parameters()):
            assert torch.equal(pa, pb)

    def test_crop_larger_than_image_rejected(self, manifest_path):
        config = TrainConfig(
            manifest=str(manifest_path), steps=1, batch_size=1, crop_size=128
        )
        with pytest.raises(ValueError, match="smaller than crop"):
            train(config)

    def test_non_finite_loss_aborts(self, manifest_path, monkeypatch):
        def bad_loss(loss, vgg_seed=0):
            return lambda pred, target: (pred.sum() - pred.sum()) / 0.0 * 0.0 + float(
                "nan"
            )

        train_mod = importlib.import_module("nanodenoise.train")
        monkeypatch.setattr(train_mod, "build_loss", bad_loss)
        config = TrainConfig(
            manifest=str(manifest_path), steps=2, batch_size=1, crop_size=64
        )
        with pytest.raises(RuntimeError, match="non-finite loss"):
            train(config)

    def test_missing_manifest(self, tmp_path):
        config = TrainConfig(manifest=str(tmp_path / "none.json"), crop_size=64)
        with pytest.raises(FileNotFoundError):
            train(config)


class TestEvaluate:
    def test_report_shape_and_baseline(self, manifest_path):
        config = TrainConfig(
            manifest=str(manifest_path), steps=2, batch_size=1, crop_size=64
        )
        result = train(config)
        report = evaluate_model(result.model, manifest_path, split="test")
        assert [r["id"] for r in report["pairs"]] == ["p3"]
        assert np.isfinite(report["psnr_pred"])
        assert np.isfinite(report["psnr_noisy"])


class TestCheckpoint:
    def test_roundtrip_preserves_model_and_curve(self, manifest_path, tmp_path):
        config = TrainConfig(
            manifest=str(manifest_path), steps=2, batch_size=1, crop_size=64
        )
        result = train(config)
        path = save_checkpoint(result, tmp_path / "ckpt.pt")
        assert path.exists()
        assert path.with_suffix(".pt.json").exists()
        back = load_checkpoint(path)
        assert back.loss_curve == result.loss_curve
        assert back.config == config
        img = np.random.default_rng(2).random((64, 64))
        assert np.array_equal(infer(back.model, img), infer(result.model, img))
