import json

import pytest

from jellybench.config import CACHE_ENV, ConfigError, ExperimentConfig, derive_seed
from jellybench.experiment import plan_cells


def test_defaults_cover_full_grid():
    cfg = ExperimentConfig(dataset_root="x")
    assert len(plan_cells(cfg)) == 44
    assert cfg.ratio == 0.7 and cfg.split_mode == "restratify" and cfg.schedule.learning_rate == 1e-3


def test_minimal_grid_has_two_cells():
    cfg = ExperimentConfig.from_dict({"dataset_root": "x", "backbones": ["MobileNetV3"],
                                      "classifiers": ["SVM"], "fnns": []})
    assert plan_cells(cfg) == [("MobileNetV3", "Softmax", "softmax"), ("MobileNetV3", "SVM", "ml")]


@pytest.mark.parametrize("bad", [
    {"split_mode": "random"}, {"ratio": 0.0}, {"ratio": 1.5}, {"weights": "coco"}, {"backbones": []},
    {"backbones": ["VGG16", "vgg16"]}, {"classifiers": ["SVM", "svm"]}, {"classifiers": ["KNN"]},
    {"fnns": [{"kind": "ANN", "arch": []}]}, {"unknown_key": 1}, {"augmentation": {"augment_for": "all"}},
    {"schedule": {"epochs": 0}}, {"classifiers": [], "fnns": []},
])
def test_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset_root": "x", **bad})


def test_dataset_root_required():
    with pytest.raises(ConfigError, match="dataset_root"):
        ExperimentConfig.from_dict({})


def test_shipped_configs_load(tmp_path):
    for name in ("configs/repro.json", "configs/synthetic.json"):
        cfg = ExperimentConfig.load(name)
        assert len(plan_cells(cfg)) == 44
    repro = ExperimentConfig.load("configs/repro.json")
    assert repro.augmentation.target_count == 10_000 and repro.augmentation.augment_for == "both"


def test_load_overrides_and_digest(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"dataset_root": "a", "seed": 1}))
    a = ExperimentConfig.load(path)
    b = ExperimentConfig.load(path, seed=2, dataset_root=None)
    assert (b.seed, b.dataset_root) == (2, "a")
    assert a.digest() != b.digest()
    assert a.digest() == ExperimentConfig.load(path).digest()


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_cache_env_override(monkeypatch, tmp_path):
    cfg = ExperimentConfig(dataset_root="x", output_dir=str(tmp_path / "out"))
    monkeypatch.delenv(CACHE_ENV, raising=False)
    assert cfg.cache_root == tmp_path / "out" / "cache"
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "elsewhere"))
    assert cfg.cache_root == tmp_path / "elsewhere"


def test_derive_seed_is_stable_and_tag_sensitive():
    assert derive_seed(42, "ml", "VGG16", "SVM") == derive_seed(42, "ml", "VGG16", "SVM")
    seeds = {derive_seed(42, "ml", b, "SVM") for b in ("VGG16", "ResNet50", "MobileNetV3")}
    assert len(seeds) == 3
    assert derive_seed(42, "a") != derive_seed(43, "a")
