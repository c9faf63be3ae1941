"""Synthetic paired domains, image folder IO, and few-shot sampling.

The toy datasets are procedurally drawn faces. Diversity comes from
discrete factors (face shape x expression x accessory = 24 combinations,
more than any 10-shot subset can cover) plus continuous jitter. The source
domain renders each face as filled colored shapes; the target domain
renders the same geometry as a grayscale stroke sketch, so the two domains
share latent factors while differing in style.
"""

from __future__ import annotations

import colorsys
import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, UnidentifiedImageError

from .errors import ConfigurationError, InputError, MissingInputError
from .rng import numpy_stream
from .types import ImageBatch

FACE_SHAPES = ("circle", "square", "diamond", "wide")
EXPRESSIONS = ("smile", "frown", "neutral")
ACCESSORIES = ("none", "hat")
FACTOR_COMBOS = tuple(
    (s, e, a) for s in FACE_SHAPES for e in EXPRESSIONS for a in ACCESSORIES
)

_SUPERSAMPLE = 4  # draw large, then downscale for antialiasing


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset comes from and how it is split.

    kind "synthetic-procedural" renders faces from (seed, domain); kind
    "image-folder" reads `<path>/<split>/*.png`. Train and eval splits are
    disjoint by construction: synthetic eval indices start at n_train.
    """

    kind: str
    domain: str
    resolution: int = 64
    seed: int = 0
    n_train: int = 2000
    n_eval: int = 2000
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic-procedural", "image-folder"):
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.domain not in ("source", "target"):
            raise ConfigurationError(f"domain must be 'source' or 'target', got {self.domain!r}")
        if self.kind == "image-folder" and not self.path:
            raise ConfigurationError("image-folder dataset needs a path")
        if self.resolution < 8:
            raise ConfigurationError(f"resolution too small: {self.resolution}")

    @property
    def provenance(self) -> str:
        return "real-source" if self.domain == "source" else "real-target"


def synthesize_toy_domains(
    seed: int, resolution: int = 64, n_train: int = 2000, n_eval: int = 2000
) -> tuple[DatasetSpec, DatasetSpec]:
    """Paired source/target specs sharing geometry factors per index."""
    src = DatasetSpec("synthetic-procedural", "source", resolution, seed, n_train, n_eval)
    tgt = DatasetSpec("synthetic-procedural", "target", resolution, seed, n_train, n_eval)
    return src, tgt


def _face_factors(seed: int, index: int) -> dict:
    """Geometry shared across domains: discrete combo by index, jitter by RNG."""
    shape, expression, accessory = FACTOR_COMBOS[index % len(FACTOR_COMBOS)]
    r = numpy_stream(seed, f"face-geometry-{index}")
    return {
        "shape": shape,
        "expression": expression,
        "accessory": accessory,
        "jx": r.uniform(-1, 1),
        "jy": r.uniform(-1, 1),
        "jr": r.uniform(0, 1),
        "hue": r.uniform(0, 1),
        "tone": r.uniform(0, 1),
    }


def factor_label(factors: dict) -> str:
    return f"{factors['shape']}:{factors['expression']}:{factors['accessory']}"


def _shape_xy(draw: ImageDraw.ImageDraw, factors: dict, cx, cy, r, **style):
    shape = factors["shape"]
    if shape == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], **style)
    elif shape == "square":
        s = 0.95 * r
        draw.rectangle([cx - s, cy - s, cx + s, cy + s], **style)
    elif shape == "diamond":
        draw.polygon(
            [(cx, cy - 1.15 * r), (cx + 1.05 * r, cy), (cx, cy + 1.15 * r), (cx - 1.05 * r, cy)],
            **style,
        )
    else:  # wide
        draw.ellipse([cx - 1.25 * r, cy - 0.85 * r, cx + 1.25 * r, cy + 0.85 * r], **style)


def _draw_features(draw, factors, cx, cy, r, color, width, fill_eyes):
    eye_r = 0.13 * r
    for side in (-1, 1):
        ex, ey = cx + side * 0.42 * r, cy - 0.28 * r
        box = [ex - eye_r, ey - eye_r, ex + eye_r, ey + eye_r]
        if fill_eyes:
            draw.ellipse(box, fill=color)
        else:
            draw.ellipse(box, outline=color, width=width)
    expression = factors["expression"]
    if expression == "smile":
        draw.arc([cx - 0.5 * r, cy - 0.1 * r, cx + 0.5 * r, cy + 0.55 * r], 20, 160, fill=color, width=width)
    elif expression == "frown":
        draw.arc([cx - 0.5 * r, cy + 0.25 * r, cx + 0.5 * r, cy + 0.9 * r], 200, 340, fill=color, width=width)
    else:
        y = cy + 0.35 * r
        draw.line([cx - 0.45 * r, y, cx + 0.45 * r, y], fill=color, width=width)


def _draw_hat(draw, cx, cy, r, fill, outline, width):
    top = cy - 1.05 * r
    draw.rectangle([cx - 1.05 * r, top - 0.12 * r, cx + 1.05 * r, top], fill=fill, outline=outline, width=width)
    draw.rectangle([cx - 0.55 * r, top - 0.65 * r, cx + 0.55 * r, top - 0.08 * r], fill=fill, outline=outline, width=width)


def _hsv255(h, s, v):
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, s, v)
    return int(r * 255), int(g * 255), int(b * 255)


def render_face(factors: dict, resolution: int, domain: str) -> np.ndarray:
    """One face as (H, W, 3) uint8. Source: filled color; target: sketch."""
    size = resolution * _SUPERSAMPLE
    cx = (0.50 + 0.06 * factors["jx"]) * size
    cy = (0.52 + 0.05 * factors["jy"]) * size
    r = (0.28 + 0.05 * factors["jr"]) * size
    if domain == "source":
        bg = _hsv255(factors["hue"] + 0.45, 0.12, 0.96)
        face = _hsv255(factors["hue"], 0.55, 0.92)
        dark = _hsv255(factors["hue"], 0.65, 0.25)
        hat = _hsv255(factors["hue"] + 0.18, 0.70, 0.55)
        img = Image.new("RGB", (size, size), bg)
        draw = ImageDraw.Draw(img)
        width = max(2, size // 48)
        _shape_xy(draw, factors, cx, cy, r, fill=face, outline=dark, width=width)
        _draw_features(draw, factors, cx, cy, r, dark, width, fill_eyes=True)
        if factors["accessory"] == "hat":
            _draw_hat(draw, cx, cy, r, fill=hat, outline=dark, width=width)
    else:
        ink = int(15 + 45 * factors["tone"])
        stroke = (ink, ink, ink)
        img = Image.new("RGB", (size, size), (246, 246, 246))
        draw = ImageDraw.Draw(img)
        width = max(2, size // 36)
        _shape_xy(draw, factors, cx, cy, r, outline=stroke, width=width)
        _draw_features(draw, factors, cx, cy, r, stroke, width, fill_eyes=False)
        if factors["accessory"] == "hat":
            _draw_hat(draw, cx, cy, r, fill=None, outline=stroke, width=width)
    img = img.resize((resolution, resolution), Image.LANCZOS)
    return np.asarray(img, dtype=np.uint8)


def materialize(spec: DatasetSpec, split: str = "train") -> tuple[ImageBatch, list[str]]:
    """Render (or load) one split as a batch plus per-image factor labels.

    Folder datasets carry no factor labels; the label list is empty there.
    """
    if split not in ("train", "eval"):
        raise ConfigurationError(f"split must be 'train' or 'eval', got {split!r}")
    if spec.kind == "image-folder":
        batch, _ = load_image_folder(spec, split)
        return batch, []
    count = spec.n_train if split == "train" else spec.n_eval
    start = 0 if split == "train" else spec.n_train
    frames = np.empty((count, spec.resolution, spec.resolution, 3), dtype=np.uint8)
    labels = []
    for i in range(count):
        factors = _face_factors(spec.seed, start + i)
        frames[i] = render_face(factors, spec.resolution, spec.domain)
        labels.append(factor_label(factors))
    return ImageBatch(from_uint8(frames), provenance=spec.provenance), labels


# ----------------------------------------------------------- pixel codec


def to_uint8(data: torch.Tensor) -> np.ndarray:
    """(N, C, H, W) in [-1, 1] -> (N, H, W, C) uint8, round-to-nearest."""
    arr = data.detach().cpu().clamp(-1, 1).permute(0, 2, 3, 1).numpy()
    return np.round((arr + 1.0) * 127.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """(N, H, W, C) uint8 -> (N, C, H, W) float in [-1, 1]."""
    data = torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0)
    return data.permute(0, 3, 1, 2).contiguous()


# ------------------------------------------------------------- folder IO


def save_image_batch(batch: ImageBatch, folder, prefix: str = "img") -> list[Path]:
    """Write each image as a PNG; returns the written paths in order."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(to_uint8(batch.data)):
        path = folder / f"{prefix}_{i:05d}.png"
        Image.fromarray(frame).save(path, format="PNG")
        paths.append(path)
    return paths


def load_image_folder(spec: DatasetSpec, split: str | None = None) -> tuple[ImageBatch, int]:
    """Decode every readable image under the folder, filename order.

    Returns (batch, skipped) where skipped counts undecodable files, each
    reported as a warning rather than an abort.
    """
    root = Path(spec.path)
    folder = root / split if split else root
    if not folder.is_dir():
        raise MissingInputError(f"image folder not found: {folder}")
    files = sorted(p for p in folder.iterdir() if p.is_file())
    frames = []
    skipped = 0
    for path in files:
        try:
            with Image.open(path) as img:
                img = img.convert("RGB").resize((spec.resolution, spec.resolution), Image.LANCZOS)
                frames.append(np.asarray(img, dtype=np.uint8))
        except (UnidentifiedImageError, OSError):
            skipped += 1
            warnings.warn(f"skipping undecodable image file: {path}")
    if not frames:
        raise InputError(f"no decodable images in {folder}")
    batch = ImageBatch(from_uint8(np.stack(frames)), provenance=spec.provenance)
    return batch, skipped


# -------------------------------------------------------------- sampling


def sample_few_shot(images: ImageBatch, m: int, seed: int) -> tuple[ImageBatch, np.ndarray]:
    """Uniform sample of M images without replacement; deterministic under seed."""
    if m < 1:
        raise InputError(f"shot count must be >= 1, got {m}")
    if images.n < m:
        raise InputError(f"dataset has {images.n} images, cannot draw {m} shots")
    idx = numpy_stream(seed, "few-shot").choice(images.n, size=m, replace=False)
    idx = np.sort(idx)
    return ImageBatch(images.data[idx], provenance=images.provenance), idx


# ----------------------------------------------------- leakage guarding


def image_hashes(batch: ImageBatch) -> tuple[str, ...]:
    """Content hash per image over quantized pixels, so float noise below
    PNG precision cannot hide a duplicate."""
    return tuple(
        hashlib.sha256(frame.tobytes()).hexdigest() for frame in to_uint8(batch.data)
    )


def assert_disjoint(hashes_a, hashes_b, what: str = "splits"):
    overlap = set(hashes_a) & set(hashes_b)
    if overlap:
        raise InputError(f"{what} share {len(overlap)} identical image(s)")


def write_hash_manifest(path, split_hashes: dict[str, tuple[str, ...]]):
    """Plain-text dataset manifest: one `split index hash` line per image."""
    lines = []
    for split in sorted(split_hashes):
        for i, h in enumerate(split_hashes[split]):
            lines.append(f"{split}\t{i}\t{h}")
    Path(path).write_text("\n".join(lines) + "\n")
