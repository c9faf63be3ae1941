"""Named deterministic RNG substreams.

Every stochastic consumer (noise sampling, layer taps, data shuffling, pair
sampling, ...) pulls from its own named stream derived from the run seed, so
adding or removing one consumer never perturbs the draws seen by another.
This is what makes the zero-weight DCL run bit-identical to plain
fine-tuning.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch


def derive_seed(root_seed: int, name: str) -> int:
    """Stable 63-bit seed for substream `name` under `root_seed`."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def torch_stream(root_seed: int, name: str) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(root_seed, name))
    return gen


def numpy_stream(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, name))
