"""Desk-scale networks: generator, two-headed discriminator, binary domain
classifier, and the fixed perceptual feature network.

All forwards are pure functions of (parameters, inputs, tap set) and can
return a FeaturePyramid of activations tapped after any registered block.
DCGAN-style blocks at 64x64 by default (4 up/down blocks, z_dim 64); group
normalization keeps every forward batch-size independent, so a probe batch
of 256 sees exactly the training-time function.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, InputError, NumericFailureError
from .types import FeaturePyramid, ImageBatch, LatentBatch


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    z_dim: int = 64
    base_channels: int = 16
    img_channels: int = 3
    use_bias: bool = True

    @property
    def n_blocks(self) -> int:
        # 4x4 seed map doubled up to image_size
        n = 0
        size = 4
        while size < self.image_size:
            size *= 2
            n += 1
        if size != self.image_size:
            raise ConfigurationError(f"image_size must be 4*2^k, got {self.image_size}")
        return n


@dataclass(frozen=True)
class LayerInfo:
    index: int
    name: str
    channels: int
    resolution: int


def _gn(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    return nn.GroupNorm(1, channels)


class _TappableNet(nn.Module):
    """Shared machinery: frozen flag, layer registry, tap validation."""

    def __init__(self):
        super().__init__()
        self.frozen = False
        self._registry: tuple[LayerInfo, ...] = ()

    def registry(self) -> tuple[LayerInfo, ...]:
        return self._registry

    @property
    def layer_pool(self) -> tuple[int, ...]:
        return tuple(info.index for info in self._registry)

    def check_taps(self, taps) -> tuple[int, ...]:
        taps = tuple(sorted(set(taps)))
        valid = set(self.layer_pool)
        bad = [t for t in taps if t not in valid]
        if bad:
            raise ConfigurationError(
                f"invalid tap index {bad} for {type(self).__name__}; registry has {sorted(valid)}"
            )
        return taps


def _check_finite(feat: torch.Tensor, layer_index: int, net: str):
    if not torch.isfinite(feat).all():
        raise NumericFailureError(
            f"non-finite activation in {net} at layer {layer_index}", layer_index=layer_index
        )


class GeneratorModel(_TappableNet):
    """z (N, z_dim) -> image (N, C, H, W) in (-1, 1) via tanh.

    Tappable layers are the block outputs, index 0 (4x4 map) through
    n_blocks-1 (half-resolution map just before the output convolution).
    """

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        nb = cfg.n_blocks
        widths = [cfg.base_channels * (2 ** (nb - 1 - i)) for i in range(nb)]
        blocks = []
        in_ch = cfg.z_dim
        registry = []
        size = 4
        for i, out_ch in enumerate(widths):
            conv = (
                nn.ConvTranspose2d(in_ch, out_ch, 4, 1, 0, bias=cfg.use_bias)
                if i == 0
                else nn.ConvTranspose2d(in_ch, out_ch, 4, 2, 1, bias=cfg.use_bias)
            )
            blocks.append(nn.Sequential(conv, _gn(out_ch), nn.ReLU()))
            registry.append(LayerInfo(i, f"up{i}", out_ch, size))
            in_ch = out_ch
            size *= 2
        self.blocks = nn.ModuleList(blocks)
        self.to_img = nn.ConvTranspose2d(in_ch, cfg.img_channels, 4, 2, 1, bias=cfg.use_bias)
        self._registry = tuple(registry)

    def forward(self, z: torch.Tensor, taps=()) -> tuple[torch.Tensor, FeaturePyramid]:
        taps = self.check_taps(taps)
        h = z.view(z.shape[0], self.cfg.z_dim, 1, 1)
        tapped = {}
        for info, block in zip(self._registry, self.blocks):
            h = block(h)
            if info.index in taps:
                _check_finite(h, info.index, "generator")
                tapped[info.index] = h
        img = torch.tanh(self.to_img(h))
        _check_finite(img, len(self.blocks), "generator")
        return img, FeaturePyramid(tapped, source_id="generator")


class DiscriminatorModel(_TappableNet):
    """Image -> realness logit, with an optional per-patch logit head.

    The image head reduces the 4x4 map to one logit per image; the patch
    head is a 1x1 convolution over a mid-resolution map. Tappable layers
    are the downsampling block outputs, index 0 (half resolution) through
    n_blocks-1 (4x4 map).
    """

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        nb = cfg.n_blocks
        widths = [cfg.base_channels * (2 ** i) for i in range(nb)]
        blocks = []
        registry = []
        in_ch = cfg.img_channels
        size = cfg.image_size
        for i, out_ch in enumerate(widths):
            size //= 2
            layers = [nn.Conv2d(in_ch, out_ch, 4, 2, 1, bias=cfg.use_bias)]
            if i > 0:
                layers.append(_gn(out_ch))
            layers.append(nn.LeakyReLU(0.2))
            blocks.append(nn.Sequential(*layers))
            registry.append(LayerInfo(i, f"down{i}", out_ch, size))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.image_head = nn.Conv2d(in_ch, 1, 4, 1, 0, bias=cfg.use_bias)
        patch_idx = max(0, nb - 3)  # mid-resolution map for per-patch logits
        self.patch_source = patch_idx
        self.patch_head = nn.Conv2d(widths[patch_idx], 1, 1, 1, 0, bias=cfg.use_bias)
        self._registry = tuple(registry)

    def forward(self, x: torch.Tensor, taps=(), head: str = "image"):
        if head not in ("image", "patch"):
            raise ConfigurationError(f"unknown discriminator head {head!r}")
        taps = self.check_taps(taps)
        h = x
        tapped = {}
        patch_feat = None
        for info, block in zip(self._registry, self.blocks):
            h = block(h)
            if info.index in taps:
                _check_finite(h, info.index, "discriminator")
                tapped[info.index] = h
            if info.index == self.patch_source:
                patch_feat = h
        if head == "image":
            logits = self.image_head(h).reshape(h.shape[0])
        else:
            logits = self.patch_head(patch_feat).squeeze(1)
        _check_finite(logits, len(self.blocks), "discriminator")
        return logits, FeaturePyramid(tapped, source_id="discriminator")


class ClassifierModel(_TappableNet):
    """Small 5-layer CNN giving p(target domain | image) through a sigmoid."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        nb = cfg.n_blocks
        widths = [cfg.base_channels * (2 ** i) for i in range(nb)]
        blocks = []
        registry = []
        in_ch = cfg.img_channels
        size = cfg.image_size
        for i, out_ch in enumerate(widths):
            size //= 2
            layers = [nn.Conv2d(in_ch, out_ch, 4, 2, 1)]
            if i > 0:
                layers.append(_gn(out_ch))
            layers.append(nn.LeakyReLU(0.2))
            blocks.append(nn.Sequential(*layers))
            registry.append(LayerInfo(i, f"conv{i}", out_ch, size))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.fc = nn.Linear(in_ch, 1)
        self._registry = tuple(registry)
        self.trained = False

    def forward(self, x: torch.Tensor, taps=()):
        taps = self.check_taps(taps)
        h = x
        tapped = {}
        for info, block in zip(self._registry, self.blocks):
            h = block(h)
            if info.index in taps:
                tapped[info.index] = h
        logits = self.fc(h.mean(dim=(2, 3))).reshape(h.shape[0])
        return logits, FeaturePyramid(tapped, source_id="classifier")


class PerceptualNet(_TappableNet):
    """Fixed conv feature network behind the perceptual distance.

    Same trunk shape as the classifier; built either randomly initialized
    or from a trained classifier trunk (the default for metrics), then
    frozen for the lifetime of an experiment.
    """

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        trunk = ClassifierModel(cfg)
        self.blocks = trunk.blocks
        self._registry = trunk._registry

    @classmethod
    def from_classifier(cls, classifier: ClassifierModel) -> "PerceptualNet":
        net = cls(classifier.cfg)
        net.blocks.load_state_dict(classifier.blocks.state_dict())
        return clone_frozen(net)

    def forward(self, x: torch.Tensor, taps=None) -> FeaturePyramid:
        taps = self.check_taps(self.layer_pool if taps is None else taps)
        h = x
        tapped = {}
        with torch.set_grad_enabled(not self.frozen and torch.is_grad_enabled()):
            for info, block in zip(self._registry, self.blocks):
                h = block(h)
                if info.index in taps:
                    _check_finite(h, info.index, "perceptual")
                    tapped[info.index] = h
        return FeaturePyramid(tapped, source_id="perceptual")


def init_weights(model: nn.Module, gen: torch.Generator) -> nn.Module:
    """DCGAN-style init, deterministic under the given generator."""
    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if p.ndim >= 2:  # conv / linear weights
            p.data.normal_(0.0, 0.02, generator=gen)
        elif "weight" in name:  # norm scales
            p.data.fill_(1.0)
        else:
            p.data.zero_()
    return model


def clone_frozen(model):
    """Snapshot of `model` with frozen parameters and no grad participation."""
    clone = copy.deepcopy(model)
    for p in clone.parameters():
        p.requires_grad_(False)
    clone.frozen = True
    return clone


def param_hash(model: nn.Module) -> str:
    """SHA-256 over all parameters and buffers in name order."""
    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def generator_forward(g: GeneratorModel, z: LatentBatch, taps=()) -> tuple[ImageBatch, FeaturePyramid]:
    if z.z_dim != g.cfg.z_dim:
        raise InputError(f"latent dim {z.z_dim} != generator z_dim {g.cfg.z_dim}")
    with torch.set_grad_enabled(not g.frozen and torch.is_grad_enabled()):
        img, pyramid = g(z.data, taps)
    tag = "generated-source" if g.frozen else "generated-target"
    return ImageBatch(img, provenance=tag), pyramid


def discriminator_forward(d: DiscriminatorModel, x: ImageBatch, taps=(), head: str = "image"):
    with torch.set_grad_enabled(not d.frozen and torch.is_grad_enabled()):
        return d(x.data, taps, head=head)


def classifier_predict(c: ClassifierModel, x: ImageBatch, allow_untrained: bool = False) -> torch.Tensor:
    """p(target | image) per image, in [0, 1]; 1 - p is the source probability."""
    if not c.trained and not allow_untrained:
        raise ConfigurationError("classifier is untrained; pass allow_untrained=True to override")
    if x.data.shape[1] != c.cfg.img_channels or x.resolution != c.cfg.image_size:
        raise InputError(
            f"classifier expects {c.cfg.img_channels}x{c.cfg.image_size} input, "
            f"got {x.data.shape[1]}x{x.resolution}"
        )
    with torch.no_grad():
        logits, _ = c(x.data)
    return torch.sigmoid(logits)


def normalized_features(feat_net: PerceptualNet, images: torch.Tensor, taps=None) -> list[torch.Tensor]:
    """Per-layer activations unit-normalized along channels at each position."""
    pyramid = feat_net(images, taps)
    out = []
    for idx in pyramid.indices:
        feat = pyramid[idx]
        out.append(feat / feat.norm(dim=1, keepdim=True).clamp_min(1e-10))
    return out


def feature_distance(feats_a: list[torch.Tensor], feats_b: list[torch.Tensor]) -> torch.Tensor:
    """Distance between pre-normalized feature stacks: per layer the squared
    difference summed over channels and averaged spatially, then summed
    over layers."""
    total = None
    for fa, fb in zip(feats_a, feats_b):
        term = (fa - fb).pow(2).sum(dim=1).mean(dim=(1, 2))
        total = term if total is None else total + term
    return total


def perceptual_distance(feat_net: PerceptualNet, a: ImageBatch, b: ImageBatch) -> torch.Tensor:
    """Perceptual distance per image pair; non-negative, symmetric, 0 at identity."""
    if a.data.shape != b.data.shape:
        raise InputError(f"shape mismatch {tuple(a.data.shape)} vs {tuple(b.data.shape)}")
    with torch.no_grad():
        fa = normalized_features(feat_net, a.data)
        fb = normalized_features(feat_net, b.data)
        return feature_distance(fa, fb)


def global_avg_pool(feat: torch.Tensor) -> torch.Tensor:
    """(N, C, H, W) -> (N, C); the feature vectorization used before cosine
    similarity, keeping it well-defined across layer resolutions."""
    return feat.mean(dim=(2, 3))
