"""Core data containers: latent batches, image batches, feature pyramids."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import InputError

PROVENANCE_TAGS = ("generated-source", "generated-target", "real-target", "real-source")


@dataclass
class LatentBatch:
    """Batch of noise vectors z, shape (N, z_dim), drawn from p_z = N(0, I).

    `is_proxy` marks the fixed batch pinned for probing during adaptation.
    """

    data: torch.Tensor
    is_proxy: bool = False

    def __post_init__(self):
        if self.data.ndim != 2:
            raise InputError(f"latent batch must be (N, z_dim), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise InputError("latent batch contains non-finite values")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def z_dim(self) -> int:
        return self.data.shape[1]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ImageBatch:
    """Batch of images, shape (N, C, H, W), values in [-1, 1], H/W powers of two."""

    data: torch.Tensor
    provenance: str = "real-target"

    def __post_init__(self):
        if self.data.ndim != 4:
            raise InputError(f"image batch must be (N, C, H, W), got {tuple(self.data.shape)}")
        n, c, h, w = self.data.shape
        if not (_is_pow2(h) and _is_pow2(w)):
            raise InputError(f"image H, W must be powers of two, got {h}x{w}")
        if self.provenance not in PROVENANCE_TAGS:
            raise InputError(f"unknown provenance tag {self.provenance!r}")
        if self.data.numel() and (self.data.min() < -1.0 or self.data.max() > 1.0):
            raise InputError("image values outside [-1, 1]")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self) -> int:
        return self.data.shape[-1]


# sources whose maps shrink with depth; generator maps grow instead
DOWNSAMPLING_SOURCES = ("discriminator", "classifier", "perceptual")


class FeaturePyramid:
    """Ordered map layer-index -> activation map (N, C_l, H_l, W_l).

    Indices strictly increase and every map shares one batch size. For
    downsampling sources the spatial size must not grow with depth.
    """

    def __init__(self, entries: dict[int, torch.Tensor], source_id: str = ""):
        self.source_id = source_id
        self.entries: dict[int, torch.Tensor] = {}
        shrinking = source_id in DOWNSAMPLING_SOURCES
        prev_idx, batch, prev_hw = None, None, None
        for idx in entries:
            feat = entries[idx]
            if feat.ndim != 4:
                raise InputError(f"pyramid maps must be 4-D, layer {idx} has {feat.ndim} dims")
            if prev_idx is not None and idx <= prev_idx:
                raise InputError(f"pyramid layer indices must strictly increase ({prev_idx} -> {idx})")
            if batch is not None and feat.shape[0] != batch:
                raise InputError(f"pyramid batch size changed at layer {idx}")
            hw = (feat.shape[-2], feat.shape[-1])
            if shrinking and prev_hw is not None and (hw[0] > prev_hw[0] or hw[1] > prev_hw[1]):
                raise InputError(f"{source_id} pyramid spatial size grew at layer {idx}")
            self.entries[idx] = feat
            prev_idx, batch, prev_hw = idx, feat.shape[0], hw

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> torch.Tensor:
        return self.entries[idx]

    def __contains__(self, idx: int) -> bool:
        return idx in self.entries

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(self.entries)

    def restrict(self, taps) -> "FeaturePyramid":
        """Sub-pyramid at the given layer indices."""
        taps = sorted(taps)
        missing = [t for t in taps if t not in self.entries]
        if missing:
            raise InputError(f"pyramid does not contain layers {missing}")
        return FeaturePyramid({t: self.entries[t] for t in taps}, source_id=self.source_id)
