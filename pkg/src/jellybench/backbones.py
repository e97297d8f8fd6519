"""The four pretrained CNN backbones, as frozen feature extractors and as softmax classifiers.

Feature tap point for every backbone: global average pooling over the last
convolutional block, flattened. The same pooled vector feeds the dense
softmax head of the direct classifier, so a head-only fine-tune can be
trained on cached features with identical results.
"""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .dataset_io import NUM_CLASSES, LabeledImageSet
from .feature_cache import FeatureMatrix

log = logging.getLogger(__name__)

BACKBONE_NAMES: tuple[str, ...] = ("VGG16", "MobileNetV3", "ResNet50", "EfficientNetV2B0")
TAP_POINTS = {
    "VGG16": "features[conv5_3+pool] -> GAP",
    "MobileNetV3": "features[last 1x1 conv] -> GAP",
    "ResNet50": "layer4 -> GAP",
    "EfficientNetV2B0": "conv_head -> GAP",
}
WEIGHT_MODES = ("imagenet", "random")
PREPROCESS_MODES = ("paper", "native")
FINETUNE_MODES = ("head_only", "full")

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class WeightsUnavailableError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


class NonFiniteFeatureError(RuntimeError):
    pass


def canonical_backbone(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    for b in BACKBONE_NAMES:
        if b.lower() == key:
            return b
    raise ValueError(f"unknown backbone {name!r}; choose from {', '.join(BACKBONE_NAMES)}")


def feature_dim(name: str, variant: str = "large") -> int:
    name = canonical_backbone(name)
    if name == "MobileNetV3":
        return 960 if variant == "large" else 576
    return {"VGG16": 512, "ResNet50": 2048, "EfficientNetV2B0": 1280}[name]


@dataclass(frozen=True)
class BackboneId:
    name: str
    feature_dim: int
    variant: str = "large"

    @classmethod
    def of(cls, name: str, variant: str = "large") -> "BackboneId":
        name = canonical_backbone(name)
        if variant not in ("large", "small"):
            raise ValueError(f"mobilenetv3 variant must be 'large' or 'small', got {variant!r}")
        return cls(name, feature_dim(name, variant), variant if name == "MobileNetV3" else "")


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "Adam"
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError(f"invalid schedule {self}")
        if self.optimizer != "Adam":
            raise ValueError("only the Adam optimizer is supported")

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- construction

def _torchvision_body(name: str, variant: str, weights: str) -> nn.Module:
    import torchvision.models as tvm

    if name == "VGG16":
        w = tvm.VGG16_Weights.IMAGENET1K_V1
        ctor = tvm.vgg16
    elif name == "ResNet50":
        w = tvm.ResNet50_Weights.IMAGENET1K_V2
        ctor = tvm.resnet50
    elif variant == "small":
        w = tvm.MobileNet_V3_Small_Weights.IMAGENET1K_V1
        ctor = tvm.mobilenet_v3_small
    else:
        w = tvm.MobileNet_V3_Large_Weights.IMAGENET1K_V2
        ctor = tvm.mobilenet_v3_large

    net = ctor(weights=None)
    if weights == "imagenet":
        ckpt = Path(torch.hub.get_dir()) / "checkpoints" / os.path.basename(w.url)
        if not ckpt.is_file():
            raise WeightsUnavailableError(
                f"pretrained {name} weights not found at {ckpt}. Download them with\n"
                f"  mkdir -p {ckpt.parent} && curl -L -o {ckpt} {w.url}\n"
                "or set TORCH_HOME to a directory that already holds them."
            )
        net.load_state_dict(torch.load(ckpt, map_location="cpu", weights_only=True))

    if name == "ResNet50":
        return nn.Sequential(*list(net.children())[:-2])
    return net.features


def _timm_body(weights: str) -> nn.Module:
    import timm

    repo = "timm/tf_efficientnetv2_b0.in1k"
    if weights == "imagenet":
        from huggingface_hub import try_to_load_from_cache

        cached = try_to_load_from_cache(repo, "model.safetensors")
        if not isinstance(cached, str):
            raise WeightsUnavailableError(
                "pretrained EfficientNetV2B0 weights not in the Hugging Face cache. Download them with\n"
                f"  huggingface-cli download {repo} model.safetensors"
            )
        os.environ.setdefault("HF_HUB_OFFLINE", "1")
    net = timm.create_model("tf_efficientnetv2_b0", pretrained=weights == "imagenet", num_classes=0,
                            global_pool="")
    return net


class FeatureExtractor(nn.Module):
    """Convolutional body + input normalisation + global average pooling."""

    def __init__(self, body: nn.Module, dim: int, mean=None, std=None):
        super().__init__()
        self.body = body
        self.dim = dim
        self.register_buffer("mean", torch.tensor(mean or (0.0, 0.0, 0.0)).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std or (1.0, 1.0, 1.0)).view(1, 3, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = (x - self.mean) / self.std
        fmap = self.body(x)
        return fmap.mean(dim=(2, 3))


@dataclass
class Backbone:
    id: BackboneId
    extractor: FeatureExtractor
    weights: str
    preprocess: str
    seed: int = 0
    checksum: str = field(default="", repr=False)

    @property
    def tap_point(self) -> str:
        return TAP_POINTS[self.id.name]

    def cache_tag(self) -> str:
        return f"{self.id.name}{self.id.variant}|{self.weights}|{self.preprocess}|{self.checksum}"


def _state_checksum(module: nn.Module) -> str:
    h = hashlib.sha256()
    for k, v in module.state_dict().items():
        h.update(k.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def load_backbone(name: str, weights: str = "imagenet", variant: str = "large",
                  preprocess: str = "paper", seed: int = 0) -> Backbone:
    """Build a frozen backbone. ``weights='random'`` gives a seeded random initialisation."""
    bid = BackboneId.of(name, variant)
    if weights not in WEIGHT_MODES:
        raise ValueError(f"weights must be one of {WEIGHT_MODES}")
    if preprocess not in PREPROCESS_MODES:
        raise ValueError(f"backbone_preprocess must be one of {PREPROCESS_MODES}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        if bid.name == "EfficientNetV2B0":
            body = _timm_body(weights)
            mean, std = (0.5, 0.5, 0.5), (0.5, 0.5, 0.5)
        else:
            body = _torchvision_body(bid.name, bid.variant, weights)
            mean, std = _IMAGENET_MEAN, _IMAGENET_STD
    if preprocess == "paper":
        mean = std = None
    extractor = FeatureExtractor(body, bid.feature_dim, mean, std).eval()
    for p in extractor.parameters():
        p.requires_grad_(False)
    return Backbone(bid, extractor, weights, preprocess, seed, _state_checksum(extractor))


# ---------------------------------------------------------------- extraction

def _to_batch(images: Sequence[np.ndarray]) -> torch.Tensor:
    arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield start, min(start + batch_size, n)


@torch.inference_mode()
def embed(extractor: FeatureExtractor, images: Sequence[np.ndarray], batch_size: int = 32,
          names: Sequence[str] = ()) -> np.ndarray:
    extractor.eval()
    out = np.empty((len(images), extractor.dim), dtype=np.float32)
    for lo, hi in _batches(len(images), batch_size):
        batch = _to_batch([images[i] for i in range(lo, hi)])
        feats = extractor(batch).numpy()
        bad = np.flatnonzero(~np.all(np.isfinite(feats), axis=1))
        if len(bad):
            i = lo + int(bad[0])
            raise NonFiniteFeatureError(f"non-finite activation for sample {i}"
                                        + (f" ({names[i]})" if names else ""))
        out[lo:hi] = feats
    return out


def extract_features(backbone: Backbone, images: Sequence[np.ndarray], labels: Sequence[int],
                     batch_size: int = 32, sample_order_digest: str = "",
                     names: Sequence[str] = ()) -> FeatureMatrix:
    """Run the frozen backbone over preprocessed 224x224x3 tensors (inference only)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(images):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    if not sample_order_digest:
        sample_order_digest = hashlib.sha256("\0".join(names).encode()).hexdigest()
    data = embed(backbone.extractor, images, batch_size, names)
    return FeatureMatrix(
        data=data, labels=labels, backbone=backbone.id.name, feature_dim=backbone.id.feature_dim,
        sample_order_digest=sample_order_digest,
        extra={"tap_point": backbone.tap_point, "weights": backbone.weights,
               "preprocess": backbone.preprocess, "variant": backbone.id.variant,
               "weights_sha256": backbone.checksum},
    )


# ---------------------------------------------------------------- direct classifier

class SoftmaxNetwork(nn.Module):
    """Backbone body, global average pooling and a dense softmax head."""

    def __init__(self, backbone: Backbone, num_classes: int = NUM_CLASSES, seed: int = 0):
        super().__init__()
        self.backbone_id = backbone.id
        self.extractor = backbone.extractor
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.head = nn.Linear(backbone.id.feature_dim, num_classes)
        self.num_classes = num_classes

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.extractor(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(x), dim=1)

    @torch.inference_mode()
    def predict_proba(self, images: Sequence[np.ndarray], batch_size: int = 32) -> np.ndarray:
        self.eval()
        return self.head_proba(embed(self.extractor, images, batch_size))

    @torch.inference_mode()
    def head_proba(self, features: np.ndarray) -> np.ndarray:
        self.eval()
        logits = self.head(torch.from_numpy(np.asarray(features, dtype=np.float32)))
        return torch.softmax(logits.double(), dim=1).numpy()


def build_softmax_classifier(backbone: Backbone, num_classes: int = NUM_CLASSES, seed: int = 0) -> SoftmaxNetwork:
    return SoftmaxNetwork(backbone, num_classes, seed)


def _fit_loop(params, forward: Callable[[np.ndarray], torch.Tensor], n: int, y: np.ndarray,
              schedule: TrainSchedule, evaluate: Callable[[], dict], set_train: Callable[[bool], None]) -> list[dict]:
    opt = torch.optim.Adam(params, lr=schedule.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(schedule.seed)
    yt = torch.from_numpy(y)
    history = [{"epoch": 0, **evaluate()}]
    for epoch in range(1, schedule.epochs + 1):
        set_train(True)
        order = rng.permutation(n)
        for b, (lo, hi) in enumerate(_batches(n, schedule.batch_size)):
            idx = order[lo:hi]
            loss = loss_fn(forward(idx), yt[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, b, float(loss))
            opt.zero_grad()
            loss.backward()
            opt.step()
        set_train(False)
        history.append({"epoch": epoch, **evaluate()})
    return history


def _loss_acc(proba: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if len(y) == 0:
        return float("nan"), float("nan")
    p = np.clip(proba[np.arange(len(y)), y], 1e-12, None)
    return float(-np.mean(np.log(p))), float(np.mean(proba.argmax(1) == y))


def train_softmax_head(net: SoftmaxNetwork, train_x: np.ndarray, train_y: np.ndarray,
                       val_x: np.ndarray | None, val_y: np.ndarray | None,
                       schedule: TrainSchedule) -> tuple[SoftmaxNetwork, list[dict]]:
    """Head-only fine-tuning on pooled backbone features.

    Equivalent to training the full network with the body frozen in inference
    mode, because the body output for each image never changes.
    """
    train_x = torch.from_numpy(np.asarray(train_x, dtype=np.float32))
    train_y = np.asarray(train_y, dtype=np.int64)
    if len(train_y) == 0:
        raise ValueError("empty training set")

    def evaluate() -> dict:
        tl, ta = _loss_acc(net.head_proba(train_x.numpy()), train_y)
        rec = {"train_loss": tl, "train_accuracy": ta}
        if val_x is not None and len(val_y):
            vl, va = _loss_acc(net.head_proba(val_x), np.asarray(val_y))
            rec.update(val_loss=vl, val_accuracy=va)
        return rec

    with torch.random.fork_rng():
        torch.manual_seed(schedule.seed)
        history = _fit_loop(list(net.head.parameters()), lambda idx: net.head(train_x[idx]),
                            len(train_y), train_y, schedule, evaluate, lambda _: None)
    net.eval()
    return net, history


def train_softmax_classifier(net: SoftmaxNetwork, train: LabeledImageSet, val: LabeledImageSet | None,
                             schedule: TrainSchedule, finetune: str = "head_only",
                             embed_batch_size: int = 32) -> tuple[SoftmaxNetwork, list[dict]]:
    """Minimise cross-entropy with Adam; returns the network in inference mode and per-epoch history.

    ``train.images`` must be preprocessed tensors.
    """
    if finetune not in FINETUNE_MODES:
        raise ValueError(f"finetune must be one of {FINETUNE_MODES}")
    if len(train) == 0:
        raise ValueError("empty training set")
    if finetune == "head_only":
        tx = embed(net.extractor, train.images, embed_batch_size)
        vx = embed(net.extractor, val.images, embed_batch_size) if val is not None and len(val) else None
        return train_softmax_head(net, tx, train.labels, vx, None if vx is None else val.labels, schedule)

    for p in net.parameters():
        p.requires_grad_(True)
    y = train.labels

    def evaluate() -> dict:
        tl, ta = _loss_acc(net.predict_proba(train.images, embed_batch_size), y)
        rec = {"train_loss": tl, "train_accuracy": ta}
        if val is not None and len(val):
            vl, va = _loss_acc(net.predict_proba(val.images, embed_batch_size), val.labels)
            rec.update(val_loss=vl, val_accuracy=va)
        return rec

    with torch.random.fork_rng():
        torch.manual_seed(schedule.seed)
        history = _fit_loop(list(net.parameters()),
                            lambda idx: net.logits(_to_batch([train.images[int(i)] for i in idx])),
                            len(y), y, schedule, evaluate, net.train)
    for p in net.parameters():
        p.requires_grad_(False)
    net.eval()
    return net, history

